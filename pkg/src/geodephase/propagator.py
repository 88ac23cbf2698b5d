"""Deterministic Kramers-doublet evolution in the moving and lab frames.

In the moving (M) frame the doublet feels the effective Zeeman-like field
``omega * gamma`` built from the frame's angular velocity.  Each
piecewise-constant step is propagated by the exact rotor about that field,
with the overall sign chosen so that ``gamma = 1`` makes the pseudo spin
co-rotate with the frame; the lab-frame propagator then follows by undoing
the frame rotation.  With that convention a fixed-axis collision by ``theta``
gives the M-frame rotor ``R(n, theta*gamma_perp)`` and the lab-frame rotor
``R(n, theta*(gamma_perp - 1))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .gamma import GammaTensor
from .su2 import Rotor, compose, compose_chain, inverse

__all__ = [
    "CollisionEvent",
    "EffectiveHamiltonianSample",
    "collision_rotor_m_frame",
    "collision_rotor_lab_frame",
    "frame_rotor",
    "integrate_piecewise",
    "integrate_frame",
    "integrate_lab_frame",
    "to_lab_frame",
]

_SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


@dataclass(frozen=True)
class CollisionEvent:
    """A single k -> k' reorientation by ``theta`` about an in-plane axis."""

    axis: np.ndarray
    theta: float
    duration: float

    def __post_init__(self) -> None:
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = np.linalg.norm(axis)
        if norm == 0.0:
            raise ValueError("collision axis must be non-zero")
        axis = axis / norm
        if abs(axis[2]) > 1e-12:
            raise ValueError("collision axis must lie in the local XY plane (normal to k)")
        if not -math.pi < self.theta <= math.pi:
            raise ValueError(f"theta must lie in (-pi, pi], got {self.theta}")
        if not self.duration > 0:
            raise ValueError("collision duration must be positive")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)

    @property
    def omega(self) -> float:
        """Angular speed of the reorientation during the collision."""
        return self.theta / self.duration


@dataclass(frozen=True)
class EffectiveHamiltonianSample:
    """Instantaneous angular velocity of the M frame together with gamma."""

    omega: np.ndarray
    gamma: GammaTensor

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float).reshape(3)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)

    def field(self) -> np.ndarray:
        return self.gamma.scale(self.omega)

    def hamiltonian(self) -> np.ndarray:
        """``-(1/2) (omega * gamma) . sigma`` as a 2x2 matrix.

        A step of length ``dt`` propagates as ``exp(+i H dt)``, the sign that
        makes a constant-axis sequence reproduce the collision rotor.
        """
        return -0.5 * np.einsum("i,ijk->jk", self.field(), _SIGMA)

    def step_rotor(self, dt: float) -> Rotor:
        return Rotor.from_rotation_vector(self.field() * dt)


def frame_rotor(e: CollisionEvent, fraction: float = 1.0) -> Rotor:
    """Rotation of the M frame itself over (a fraction of) the collision."""
    return Rotor.from_axis_angle(e.axis, fraction * e.theta)


def collision_rotor_m_frame(e: CollisionEvent, g: GammaTensor, fraction: float = 1.0) -> Rotor:
    return Rotor.from_axis_angle(e.axis, fraction * e.theta * g.gamma_perp)


def collision_rotor_lab_frame(e: CollisionEvent, g: GammaTensor, fraction: float = 1.0) -> Rotor:
    """Lab-frame propagator over ``fraction`` of the collision (``0 <= fraction <= 1``).

    Built by compensating the M-frame propagator with the reverse frame
    rotation; the result is the lag rotation ``R(n, theta * delta_gamma_perp)``.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]; the closed form holds only during the collision")
    return to_lab_frame(collision_rotor_m_frame(e, g, fraction), frame_rotor(e, fraction))


def to_lab_frame(m_rotor: Rotor, frame_rotation: Rotor) -> Rotor:
    return compose(inverse(frame_rotation), m_rotor)


def _step_quats(vectors: np.ndarray) -> np.ndarray:
    quats = np.empty((vectors.shape[0], 4))
    for i, v in enumerate(vectors):
        quats[i] = _kernels.quat_from_rotvec(v[0], v[1], v[2])
    return quats


def _nonempty(samples: Sequence[EffectiveHamiltonianSample], dt: float) -> None:
    if len(samples) == 0:
        raise ValueError("at least one sample is required")
    if not dt > 0:
        raise ValueError("dt must be positive")


def integrate_piecewise(samples: Sequence[EffectiveHamiltonianSample], dt: float) -> Rotor:
    """M-frame propagator for a piecewise-constant field, one sample per step.

    Each step is the exact rotor about ``omega * gamma``, so unitarity is
    preserved; the global error for a wandering axis is that of the
    piecewise-constant approximation of ``omega(t)``.
    """
    _nonempty(samples, dt)
    fields = np.array([s.field() for s in samples])
    return compose_chain(_step_quats(fields * dt))


def integrate_frame(samples: Sequence[EffectiveHamiltonianSample], dt: float) -> Rotor:
    """Accumulated rotation of the M frame over the same steps."""
    _nonempty(samples, dt)
    omegas = np.array([s.omega for s in samples])
    return compose_chain(_step_quats(omegas * dt))


def integrate_lab_frame(samples: Sequence[EffectiveHamiltonianSample], dt: float) -> Rotor:
    return to_lab_frame(integrate_piecewise(samples, dt), integrate_frame(samples, dt))
