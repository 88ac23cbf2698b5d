"""Ensemble averaging of the lab-frame polarization over stochastic trajectories.

Trajectories are processed in fixed blocks of :data:`BLOCK_SIZE` consecutive
indices.  Each block reduces to a (mean, sum of squared deviations) pair and
blocks are merged in index order, so the resulting curve is bit-identical for
any number of workers.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .gamma import GammaTensor
from .stochastic import (
    Diffusion2D,
    OuAngularVelocity3D,
    StochasticModel,
    StrongCollision3D,
    _ou_path,
    _wiener_normals,
    _wiener_scale,
    _OuCoefficients,
    refine_grid,
    sample_collisions,
)

__all__ = [
    "EnsembleSpec",
    "DecayCurve",
    "GridTooCoarse",
    "BLOCK_SIZE",
    "run",
    "run_2d",
    "run_3d_collisions",
    "run_3d_ou",
    "ou_max_step",
    "uniform_grid",
]

log = logging.getLogger(__name__)

BLOCK_SIZE = 1024


class GridTooCoarse(ValueError):
    pass


def uniform_grid(t_max: float, n_points: int) -> np.ndarray:
    return np.linspace(0.0, float(t_max), int(n_points))


@dataclass(frozen=True)
class EnsembleSpec:
    model: StochasticModel
    gamma: GammaTensor
    n_traj: int
    t_grid: np.ndarray
    root_seed: int
    initial_u: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    dt: float | None = None
    """Integration step for the OU model; chosen automatically when ``None``."""

    def __post_init__(self) -> None:
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        t = np.asarray(self.t_grid, dtype=float).reshape(-1)
        if t.size < 2:
            raise ValueError("time grid needs at least two points")
        steps = np.diff(t)
        if t[0] < 0 or np.any(steps <= 0):
            raise ValueError("time grid must be non-negative and strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("time grid must be uniform")
        u0 = np.asarray(self.initial_u, dtype=float).reshape(3)
        if np.linalg.norm(u0) > 1 + 1e-12:
            raise ValueError("|initial_u| must not exceed 1")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "initial_u", u0)


@dataclass(frozen=True)
class DecayCurve:
    t: np.ndarray
    mean_uz: np.ndarray
    stderr_uz: np.ndarray
    n_traj: int
    mean_u: np.ndarray | None = None
    stderr_u: np.ndarray | None = None


# --- deterministic reduction ----------------------------------------------


def _block_stats(u: np.ndarray) -> tuple[int, np.ndarray, np.ndarray]:
    # Shift by the first trajectory so identical samples give an exact mean.
    ref = u[0]
    mean = ref + (u - ref).mean(axis=0)
    m2 = ((u - mean) ** 2).sum(axis=0)
    return u.shape[0], mean, m2


def _merge(a, b):
    na, ma, m2a = a
    nb, mb, m2b = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * (nb / n), m2a + m2b + delta**2 * (na * nb / n)


def _reduce(
    n_traj: int,
    simulate_block: Callable[[range], np.ndarray],
    workers: int | None,
) -> tuple[int, np.ndarray, np.ndarray]:
    blocks = [range(s, min(s + BLOCK_SIZE, n_traj)) for s in range(0, n_traj, BLOCK_SIZE)]
    workers = workers or os.cpu_count() or 1

    def job(idx: range):
        return _block_stats(simulate_block(idx))

    if workers == 1 or len(blocks) == 1:
        stats = [job(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(job, blocks))
    acc = stats[0]
    for s in stats[1:]:
        acc = _merge(acc, s)
    return acc


def _curve(spec: EnsembleSpec, stats) -> DecayCurve:
    n, mean, m2 = stats
    if n > 1:
        stderr = np.sqrt(m2 / (n - 1) / n)
    else:
        stderr = np.zeros_like(mean)
    return DecayCurve(
        t=spec.t_grid.copy(),
        mean_uz=mean[:, 2].copy(),
        stderr_uz=stderr[:, 2].copy(),
        n_traj=n,
        mean_u=mean,
        stderr_u=stderr,
    )


# --- runners --------------------------------------------------------------


def run_2d(spec: EnsembleSpec, workers: int | None = None) -> DecayCurve:
    """Fixed-axis (Abelian) case: ``u(t) = R_X(delta_gamma_perp * theta(t)) u0``."""
    if not isinstance(spec.model, Diffusion2D):
        raise TypeError("run_2d needs a Diffusion2D model")
    dg = spec.gamma.delta_gamma_perp()
    ux, uy, uz = spec.initial_u

    # Same draws as sample_diffusion_2d, batched over the block.
    scale = _wiener_scale(spec.model.d1, spec.t_grid)
    n = spec.t_grid.size

    def block(idx: range) -> np.ndarray:
        normals = np.stack([_wiener_normals(spec.root_seed, i, n) for i in idx])
        theta = np.cumsum(normals * scale, axis=1)
        phase = dg * theta
        c, s = np.cos(phase), np.sin(phase)
        out = np.empty(theta.shape + (3,))
        out[..., 0] = ux
        out[..., 1] = uy * c - uz * s
        out[..., 2] = uy * s + uz * c
        return out

    return _curve(spec, _reduce(spec.n_traj, block, workers))


def run_3d_collisions(spec: EnsembleSpec, workers: int | None = None) -> DecayCurve:
    """Compose lab-frame lag rotors of successive collisions about random in-plane axes."""
    m = spec.model
    if not isinstance(m, StrongCollision3D):
        raise TypeError("run_3d_collisions needs a StrongCollision3D model")
    dg = spec.gamma.delta_gamma_perp()
    horizon = float(spec.t_grid[-1])
    npts = spec.t_grid.size

    def block(idx: range) -> np.ndarray:
        out = np.empty((len(idx), npts, 3))
        for row, i in enumerate(idx):
            train = sample_collisions(m.tau_p, m.angle_law, m.delta_t_c, horizon, spec.root_seed, i).collisions
            _kernels.collisions_propagate(
                train.times, train.axes, train.thetas, dg, m.delta_t_c, spec.t_grid, spec.initial_u, out[row]
            )
        return out

    return _curve(spec, _reduce(spec.n_traj, block, workers))


def ou_max_step(model: OuAngularVelocity3D, gamma: GammaTensor) -> float:
    """Largest integration step allowed for the OU runner."""
    dg = max(abs(gamma.delta_gamma_perp()), abs(gamma.delta_gamma_par()))
    limit = model.tau_c / 10.0
    if dg * model.omega_rms > 0:
        limit = min(limit, 0.1 / (dg * model.omega_rms))
    return limit


def run_3d_ou(spec: EnsembleSpec, workers: int | None = None) -> DecayCurve:
    """Step the M-frame and frame rotors along an OU angular-velocity path.

    The lab-frame propagator at each readout is ``inverse(frame) * m``.
    """
    m = spec.model
    if not isinstance(m, OuAngularVelocity3D):
        raise TypeError("run_3d_ou needs an OuAngularVelocity3D model")
    limit = ou_max_step(m, spec.gamma)
    if spec.dt is not None:
        if spec.dt > limit * (1 + 1e-9):
            raise GridTooCoarse(f"dt = {spec.dt:g} exceeds the allowed step {limit:g}")
        step = spec.dt
    else:
        step = limit
    fine, readout = refine_grid(spec.t_grid, step)
    coef = _OuCoefficients(m.tau_c, m.omega_rms, np.diff(fine))
    dts = np.ascontiguousarray(coef.steps)
    # Warm the cached coefficient arrays before worker threads share them.
    coef.rho, coef.innovation
    g_perp, g_par = spec.gamma.gamma_perp, spec.gamma.gamma_par
    npts = spec.t_grid.size
    log.debug("OU run: %d integration steps of <= %g", dts.size, step)

    def block(idx: range) -> np.ndarray:
        out = np.empty((len(idx), npts, 3))
        for row, i in enumerate(idx):
            omega = _ou_path(coef, fine.size, spec.root_seed, i)
            _kernels.ou_propagate(omega, dts, g_perp, g_par, readout, spec.initial_u, out[row])
        return out

    return _curve(spec, _reduce(spec.n_traj, block, workers))


def run(spec: EnsembleSpec, workers: int | None = None) -> DecayCurve:
    if isinstance(spec.model, Diffusion2D):
        return run_2d(spec, workers)
    if isinstance(spec.model, StrongCollision3D):
        return run_3d_collisions(spec, workers)
    if isinstance(spec.model, OuAngularVelocity3D):
        return run_3d_ou(spec, workers)
    raise TypeError(f"unsupported model {type(spec.model).__name__}")
