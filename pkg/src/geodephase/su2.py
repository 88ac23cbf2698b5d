"""SU(2) rotors acting on the Kramers-doublet polarization vector.

A :class:`Rotor` is stored as a unit quaternion ``(w, x, y, z)`` standing for
the 2x2 unitary ``U = w*1 - i*(x, y, z).sigma``.  ``Rotor.from_axis_angle(n,
phi)`` is ``exp(-i phi n.sigma / 2)``, which rotates the polarization
``u = Tr[rho sigma]`` actively by ``+phi`` about ``n`` (right-hand rule):

>>> apply(rx(math.pi / 3), Polarization.z()).u.round(4)
array([ 0.    , -0.866 ,  0.5   ])

Only the adjoint action is physical, so ``r`` and ``-r`` are treated as the
same rotation everywhere outside this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Rotor",
    "Polarization",
    "IDENTITY",
    "compose",
    "apply",
    "inverse",
    "rx",
    "ry",
    "rz",
    "compose_chain",
    "random_rotor",
]

_SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


@dataclass(frozen=True, slots=True)
class Rotor:
    """Unit quaternion ``(w, x, y, z)`` representing an SU(2) propagator."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError("rotor quaternion must be finite and non-zero")
        if abs(n - 1.0) > 1e-12:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> Rotor:
        n = np.asarray(axis, dtype=float)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            if angle == 0.0:
                return cls()
            raise ValueError("rotation axis must be non-zero")
        n = n / norm
        s = math.sin(0.5 * angle)
        return cls(math.cos(0.5 * angle), s * n[0], s * n[1], s * n[2])

    @classmethod
    def from_rotation_vector(cls, v: Sequence[float]) -> Rotor:
        """Rotation by ``|v|`` about ``v``."""
        return cls(*_kernels.quat_from_rotvec(float(v[0]), float(v[1]), float(v[2])))

    @classmethod
    def from_quaternion(cls, q: Sequence[float]) -> Rotor:
        return cls(float(q[0]), float(q[1]), float(q[2]), float(q[3]))

    @property
    def quaternion(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def axis_angle(self) -> tuple[np.ndarray, float]:
        """Canonical ``(axis, angle)`` with ``angle`` in ``[0, pi]``.

        The double-cover sign is fixed by ``w >= 0``; at ``angle == pi`` the
        axis is chosen with its first non-zero component positive.  The
        identity reports the z axis.
        """
        w, v = self.w, np.array([self.x, self.y, self.z])
        if w < 0:
            w, v = -w, -v
        s = float(np.linalg.norm(v))
        if s == 0.0:
            return np.array([0.0, 0.0, 1.0]), 0.0
        axis = v / s
        angle = 2.0 * math.atan2(s, w)
        if w == 0.0:
            nz = axis[np.flatnonzero(np.abs(axis) > 1e-15)[0]]
            if nz < 0:
                axis = -axis
        return axis, angle

    def su2_matrix(self) -> np.ndarray:
        """The 2x2 unitary ``w*1 - i*(x, y, z).sigma``."""
        return self.w * np.eye(2) - 1j * np.einsum("i,ijk->jk", [self.x, self.y, self.z], _SIGMA)

    def rotation_matrix(self) -> np.ndarray:
        """The 3x3 SO(3) matrix of the adjoint action on polarizations."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def same_action(self, other: Rotor, tol: float = 1e-12) -> bool:
        return bool(abs(abs(np.dot(self.quaternion, other.quaternion)) - 1.0) <= tol)

    def __matmul__(self, other: Rotor) -> Rotor:
        return compose(self, other)


IDENTITY = Rotor()


@dataclass(frozen=True)
class Polarization:
    """Polarization vector ``u = Tr[rho sigma]`` with ``|u| <= 1``."""

    u: np.ndarray

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=float).reshape(3)
        if not np.all(np.isfinite(u)):
            raise ValueError("polarization must be finite")
        if np.linalg.norm(u) > 1.0 + 1e-12:
            raise ValueError(f"|u| = {np.linalg.norm(u)!r} exceeds 1")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def z(cls) -> Polarization:
        return cls(np.array([0.0, 0.0, 1.0]))

    @property
    def uz(self) -> float:
        return float(self.u[2])

    def density_matrix(self) -> np.ndarray:
        return 0.5 * (np.eye(2) + np.einsum("i,ijk->jk", self.u, _SIGMA))

    @classmethod
    def from_density_matrix(cls, rho: np.ndarray) -> Polarization:
        return cls(np.real(np.einsum("jk,ikj->i", rho, _SIGMA)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polarization):
            return NotImplemented
        return bool(np.array_equal(self.u, other.u))

    def __hash__(self) -> int:
        return hash(self.u.tobytes())


def compose(a: Rotor, b: Rotor) -> Rotor:
    """Rotor equal to applying ``b`` first, then ``a``."""
    q = _kernels.qmul(a.w, a.x, a.y, a.z, b.w, b.x, b.y, b.z)
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return Rotor(q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def inverse(r: Rotor) -> Rotor:
    return Rotor(r.w, -r.x, -r.y, -r.z)


def apply(r: Rotor, u: Polarization) -> Polarization:
    """Adjoint action ``u' = Tr[U rho U^dagger sigma]``."""
    v = _kernels.rotate(r.w, r.x, r.y, r.z, float(u.u[0]), float(u.u[1]), float(u.u[2]))
    out = np.array(v)
    # Guard the |u| <= 1 check against roundoff on pure states.
    norm_in = float(np.linalg.norm(u.u))
    norm_out = float(np.linalg.norm(out))
    if norm_out > 1.0 and norm_in <= 1.0:
        out = out / norm_out
    return Polarization(out)


def rx(angle: float) -> Rotor:
    return Rotor.from_axis_angle((1.0, 0.0, 0.0), angle)


def ry(angle: float) -> Rotor:
    return Rotor.from_axis_angle((0.0, 1.0, 0.0), angle)


def rz(angle: float) -> Rotor:
    return Rotor.from_axis_angle((0.0, 0.0, 1.0), angle)


def compose_chain(rotors: Iterable[Rotor] | np.ndarray) -> Rotor:
    """Time-ordered product: the first rotor is applied first.

    Accepts rotors or an ``(n, 4)`` quaternion array; the running product is
    renormalized every 1024 factors.
    """
    if isinstance(rotors, np.ndarray):
        quats = np.ascontiguousarray(rotors, dtype=float)
    else:
        quats = np.array([r.quaternion for r in rotors], dtype=float).reshape(-1, 4)
    return Rotor.from_quaternion(_kernels.chain_product(quats))


def random_rotor(rng: np.random.Generator) -> Rotor:
    """Haar-uniform rotor."""
    q = rng.standard_normal(4)
    return Rotor.from_quaternion(q / np.linalg.norm(q))
