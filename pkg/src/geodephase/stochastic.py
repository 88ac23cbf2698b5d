"""Noise models for the motion of the M frame and their samplers.

Random streams
--------------
Every trajectory draws from its own generator,
``numpy.random.Generator(PCG64(SeedSequence(root_seed, spawn_key=(index,))))``.
A trajectory is therefore a pure function of ``(model, root_seed, index)``
and independent of how many trajectories run or on which worker.
Sub-experiments (e.g. points of a tau_p scan) derive their own root seeds
with :func:`derive_seed`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from scipy import integrate

from . import _kernels
from .propagator import CollisionEvent

__all__ = [
    "FixedAngle",
    "GaussianAngle",
    "ExponentialAngle",
    "AngleLaw",
    "Diffusion2D",
    "StrongCollision3D",
    "OuAngularVelocity3D",
    "StochasticModel",
    "Trajectory",
    "CollisionTrain",
    "trajectory_rng",
    "derive_seed",
    "omega_sq_mean_from_tau_p",
    "tau_p_from_omega",
    "sample_diffusion_2d",
    "sample_collisions",
    "sample_ou_omega",
    "refine_grid",
    "RNG_SCHEME",
]

RNG_SCHEME = "numpy PCG64 per trajectory, SeedSequence(root_seed, spawn_key=(index,))"
_MAX_SEED = 2**64


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def trajectory_rng(root_seed: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(_check_seed(root_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(root_seed: int, index: int) -> int:
    """64-bit child seed for sub-experiment ``index`` of ``root_seed``."""
    seq = np.random.SeedSequence(_check_seed(root_seed), spawn_key=(2**32, int(index)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# --- angle laws -----------------------------------------------------------


class _AngleLaw:
    """Scattering-angle law restricted to (-pi, pi] by rejection."""

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def _density(self, x: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = self._draw(rng, n - filled)
            draw = draw[(draw > -math.pi) & (draw <= math.pi)]
            out[filled : filled + draw.size] = draw
            filled += draw.size
        return out

    def mean_square(self) -> float:
        """Second moment of the truncated law."""
        num = integrate.quad(lambda x: x * x * self._density(x), -math.pi, math.pi, limit=200)[0]
        den = integrate.quad(self._density, -math.pi, math.pi, limit=200)[0]
        return num / den

    def mean_cos(self, k: float) -> float:
        """``<cos(k theta)>`` under the truncated law."""
        num = integrate.quad(lambda x: math.cos(k * x) * self._density(x), -math.pi, math.pi, limit=200)[0]
        den = integrate.quad(self._density, -math.pi, math.pi, limit=200)[0]
        return num / den


@dataclass(frozen=True)
class FixedAngle(_AngleLaw):
    theta: float

    def __post_init__(self) -> None:
        if not -math.pi < self.theta <= math.pi:
            raise ValueError("fixed angle must lie in (-pi, pi]")

    def _draw(self, rng, n):
        return np.full(n, self.theta)

    def sample(self, rng, n):
        return np.full(n, float(self.theta))

    def mean_square(self) -> float:
        return self.theta**2

    def mean_cos(self, k: float) -> float:
        return math.cos(k * self.theta)


@dataclass(frozen=True)
class GaussianAngle(_AngleLaw):
    """Zero-mean normal law with standard deviation ``sigma``."""

    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def _draw(self, rng, n):
        return rng.normal(0.0, self.sigma, n)

    def _density(self, x):
        return math.exp(-0.5 * (x / self.sigma) ** 2)


@dataclass(frozen=True)
class ExponentialAngle(_AngleLaw):
    """Non-negative angles with exponential law of mean ``mean`` (before truncation to pi)."""

    mean: float

    def __post_init__(self) -> None:
        if not self.mean > 0:
            raise ValueError("mean must be positive")

    def _draw(self, rng, n):
        return rng.exponential(self.mean, n)

    def _density(self, x):
        return math.exp(-x / self.mean) if x >= 0 else 0.0


AngleLaw = Union[FixedAngle, GaussianAngle, ExponentialAngle]


# --- models ---------------------------------------------------------------


@dataclass(frozen=True)
class Diffusion2D:
    """One-dimensional angular diffusion of k in a 2D crystal (fixed rotation axis)."""

    d1: float

    def __post_init__(self) -> None:
        if not self.d1 >= 0:
            raise ValueError("d1 must be non-negative")

    def omega_rms_tau_c(self) -> float:
        # White noise: zero correlation time.
        return 0.0


@dataclass(frozen=True)
class StrongCollision3D:
    """Poisson-timed collisions, each reorienting k by a random angle."""

    tau_p: float
    angle_law: AngleLaw
    delta_t_c: float

    def __post_init__(self) -> None:
        if not self.tau_p > 0:
            raise ValueError("tau_p must be positive")
        if not self.delta_t_c > 0:
            raise ValueError("delta_t_c must be positive")

    def omega_rms_tau_c(self) -> float:
        # omega = theta / delta_t_c over a correlation time delta_t_c.
        return math.sqrt(self.angle_law.mean_square())


@dataclass(frozen=True)
class OuAngularVelocity3D:
    """Stationary Ornstein-Uhlenbeck angular velocity.

    ``omega_sq_mean`` is the mean square of each Cartesian component,
    ``<omega_i(0) omega_i(t)> = omega_sq_mean * exp(-t / tau_c)``.
    """

    omega_sq_mean: float
    tau_c: float

    def __post_init__(self) -> None:
        if not self.omega_sq_mean >= 0:
            raise ValueError("omega_sq_mean must be non-negative")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be positive")

    @classmethod
    def from_tau_p(cls, tau_p: float, tau_c: float) -> OuAngularVelocity3D:
        return cls(omega_sq_mean_from_tau_p(tau_p, tau_c), tau_c)

    @property
    def omega_rms(self) -> float:
        return math.sqrt(self.omega_sq_mean)

    @property
    def tau_p(self) -> float:
        return tau_p_from_omega(self.omega_sq_mean, self.tau_c)

    def omega_rms_tau_c(self) -> float:
        return self.omega_rms * self.tau_c


StochasticModel = Union[Diffusion2D, StrongCollision3D, OuAngularVelocity3D]


def omega_sq_mean_from_tau_p(tau_p: float, tau_c: float) -> float:
    """``<omega^2>`` such that ``<omega^2> tau_c = 1 / tau_p``."""
    return 1.0 / (tau_p * tau_c)


def tau_p_from_omega(omega_sq_mean: float, tau_c: float) -> float:
    prod = omega_sq_mean * tau_c
    return math.inf if prod == 0 else 1.0 / prod


# --- trajectories ---------------------------------------------------------


@dataclass(frozen=True)
class CollisionTrain:
    """Collision events of one trajectory, in lab coordinates."""

    times: np.ndarray
    axes: np.ndarray
    thetas: np.ndarray
    k: np.ndarray
    delta_t_c: float

    def __len__(self) -> int:
        return self.times.size

    def local_event(self, i: int) -> CollisionEvent:
        """Event ``i`` in its local frame (Z along k, X along the rotation axis)."""
        return CollisionEvent(np.array([1.0, 0.0, 0.0]), float(self.thetas[i]), self.delta_t_c)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    seed: tuple[int, int]
    theta: np.ndarray | None = None
    omega: np.ndarray | None = None
    collisions: CollisionTrain | None = None


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).reshape(-1)
    if t.size == 0:
        raise ValueError("time grid is empty")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be non-negative and strictly increasing")
    return t


def sample_diffusion_2d(d1: float, t_grid, seed: int, index: int = 0) -> Trajectory:
    """Wiener path of the rotation angle with ``Var[theta(t)] = 2 d1 t``, ``theta(0) = 0``."""
    t = _check_grid(t_grid)
    if d1 < 0:
        raise ValueError("d1 must be non-negative")
    theta = np.cumsum(_wiener_normals(seed, index, t.size) * _wiener_scale(d1, t))
    return Trajectory(t=t, seed=(seed, index), theta=theta)


def _wiener_scale(d1: float, t: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 * d1 * np.diff(t, prepend=0.0))


def _wiener_normals(seed: int, index: int, n: int) -> np.ndarray:
    return trajectory_rng(seed, index).standard_normal(n)


def sample_collisions(
    tau_p: float,
    angle_law: AngleLaw,
    delta_t_c: float,
    horizon: float,
    seed: int,
    index: int = 0,
    k0=(0.0, 0.0, 1.0),
) -> Trajectory:
    """Poisson train of collisions over ``[0, horizon]``.

    Waiting times are exponential with mean ``tau_p``; each event rotates k
    by an angle from ``angle_law`` about an axis uniform in the plane normal
    to the current k.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if delta_t_c > 0.1 * tau_p:
        warnings.warn("delta_t_c is not small compared with tau_p", stacklevel=2)
    rng = trajectory_rng(seed, index)
    if math.isinf(tau_p):
        times = np.empty(0)
    else:
        mean_n = horizon / tau_p
        chunk = int(mean_n + 6.0 * math.sqrt(mean_n) + 16)
        times = np.cumsum(rng.exponential(tau_p, chunk))
        while times[-1] <= horizon:
            more = np.cumsum(rng.exponential(tau_p, chunk)) + times[-1]
            times = np.concatenate([times, more])
        times = times[times <= horizon]
    n = times.size
    thetas = angle_law.sample(rng, n)
    phis = rng.uniform(0.0, 2.0 * math.pi, n)
    axes = np.empty((n, 3))
    ks = np.empty((n + 1, 3))
    k0 = np.asarray(k0, dtype=float)
    _kernels.collision_geometry(thetas, phis, k0 / np.linalg.norm(k0), axes, ks)
    train = CollisionTrain(times=times, axes=axes, thetas=thetas, k=ks, delta_t_c=float(delta_t_c))
    return Trajectory(t=np.array([0.0, float(horizon)]), seed=(seed, index), collisions=train)


def refine_grid(t_grid, max_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Subdivide each interval into equal steps no longer than ``max_step``.

    Returns the refined grid and the indices of the original points in it.
    """
    t = _check_grid(t_grid)
    pieces = [t[:1]]
    idx = [0]
    for a, b in zip(t[:-1], t[1:]):
        m = max(1, math.ceil((b - a) / max_step * (1 - 1e-12)))
        pieces.append(a + (b - a) * np.arange(1, m + 1) / m)
        idx.append(idx[-1] + m)
    fine = np.concatenate(pieces)
    fine[np.array(idx)] = t
    return fine, np.array(idx)


@dataclass(frozen=True)
class _OuCoefficients:
    tau_c: float
    sigma: float
    steps: np.ndarray

    @cached_property
    def rho(self) -> np.ndarray:
        return np.exp(-self.steps / self.tau_c)

    @cached_property
    def innovation(self) -> np.ndarray:
        return self.sigma * np.sqrt(-np.expm1(-2.0 * self.steps / self.tau_c))


def sample_ou_omega(omega_sq_mean: float, tau_c: float, t_grid, seed: int, index: int = 0) -> Trajectory:
    """Stationary three-component OU angular velocity, exact discretization.

    Each component has stationary variance ``omega_sq_mean`` and correlation
    time ``tau_c``.  Grid intervals longer than ``tau_c / 10`` are subdivided;
    the returned trajectory lives on the refined grid.
    """
    if omega_sq_mean < 0 or not tau_c > 0:
        raise ValueError("need omega_sq_mean >= 0 and tau_c > 0")
    t, _ = refine_grid(t_grid, tau_c / 10.0)
    coef = _OuCoefficients(tau_c, math.sqrt(omega_sq_mean), np.diff(t))
    return Trajectory(t=t, seed=(seed, index), omega=_ou_path(coef, t.size, seed, index))


def _ou_path(coef: _OuCoefficients, n: int, seed: int, index: int) -> np.ndarray:
    rng = trajectory_rng(seed, index)
    noise = rng.standard_normal((n, 3))
    out = np.empty((n, 3))
    _kernels.ou_recursion(noise, coef.rho, coef.innovation, coef.sigma, out)
    return out
