"""Gamma-tensor inputs, physical presets and regime checks.

The gamma tensor couples the angular velocity of the moving frame (whose Z
axis follows the crystal momentum) to the pseudo spin.  Only the axially
symmetric form ``diag(gamma_perp, gamma_perp, gamma_par)`` is supported.
Natural units with hbar = 1 are used throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .stochastic import StochasticModel

__all__ = [
    "GammaTensor",
    "AdiabaticityParams",
    "RegimeReport",
    "RegimeWarning",
    "from_delta_g",
    "jones_pines",
    "validate_regime",
]


class RegimeWarning(UserWarning):
    """Parameters outside the regime where the analytic rates are expected to hold."""


@dataclass(frozen=True)
class GammaTensor:
    """Principal values of the axially symmetric gamma tensor."""

    gamma_par: float = 1.0
    gamma_perp: float = 1.0

    def delta_gamma_perp(self) -> float:
        return self.gamma_perp - 1.0

    def delta_gamma_par(self) -> float:
        return self.gamma_par - 1.0

    def delta_g_norm_sq(self) -> float:
        """Squared norm of ``gamma - 1`` over the three principal axes."""
        return 2.0 * self.delta_gamma_perp() ** 2 + self.delta_gamma_par() ** 2

    def principal(self) -> np.ndarray:
        """Diagonal ``(gamma_XX, gamma_YY, gamma_ZZ)``."""
        return np.array([self.gamma_perp, self.gamma_perp, self.gamma_par])

    def scale(self, omega: np.ndarray) -> np.ndarray:
        """Componentwise ``omega * gamma`` in the principal frame."""
        return np.asarray(omega, dtype=float) * self.principal()


def from_delta_g(dg_perp: float, dg_par: float = 0.0) -> GammaTensor:
    """Gamma tensor from the g-shift, valid to first order in lambda / Delta E."""
    if abs(dg_perp) >= 1 or abs(dg_par) >= 1:
        warnings.warn(
            f"|delta g| >= 1 (perp={dg_perp}, par={dg_par}) is outside the first-order regime",
            RegimeWarning,
            stacklevel=2,
        )
    return GammaTensor(gamma_par=1.0 + dg_par, gamma_perp=1.0 + dg_perp)


def jones_pines(nuclear_spin_i: float | Fraction) -> GammaTensor:
    """Nuclear Kramers doublet ``|m| = 1/2`` of a quadrupolar spin ``I``.

    ``gamma_par = 1`` and ``gamma_perp = I + 1/2``; ``I`` must be a
    half-integer of at least 3/2.
    """
    two_i = 2 * Fraction(nuclear_spin_i).limit_denominator(1000)
    if two_i.denominator != 1 or two_i.numerator % 2 != 1:
        raise ValueError(f"nuclear spin must be a half-integer, got {nuclear_spin_i!r}")
    if two_i < 3:
        raise ValueError(f"nuclear spin must be >= 3/2 for an isolated doublet, got {nuclear_spin_i!r}")
    return GammaTensor(gamma_par=1.0, gamma_perp=float(two_i) / 2 + 0.5)


@dataclass(frozen=True)
class AdiabaticityParams:
    lambda_soc: float
    delta_e: float
    tau_p: float
    adiabatic_threshold: float = 10.0

    def adiabatic_ratio(self) -> float:
        return self.delta_e * self.tau_p

    def perturbative_ratio(self) -> float:
        return self.lambda_soc / self.delta_e

    def is_adiabatic(self) -> bool:
        return self.adiabatic_ratio() >= self.adiabatic_threshold

    def perturbative(self) -> bool:
        return self.perturbative_ratio() < 1.0


@dataclass(frozen=True)
class RegimeReport:
    adiabatic: bool | None
    perturbative: bool | None
    fast_motional: bool
    adiabatic_ratio: float | None
    perturbative_ratio: float | None
    fast_motional_ratio: float
    fast_motional_threshold: float
    messages: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return all(flag is not False for flag in (self.adiabatic, self.perturbative, self.fast_motional))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["messages"] = list(self.messages)
        return d


def validate_regime(
    g: GammaTensor,
    a: AdiabaticityParams | None,
    model: StochasticModel,
    fast_motional_threshold: float = 0.1,
) -> RegimeReport:
    """Flag adiabaticity, perturbative and fast-motional conditions.

    Never raises: the simulator is meant to be driven into breakdown too.
    Violations are reported in ``messages`` and emitted as
    :class:`RegimeWarning`.  Without adiabaticity parameters the first two
    flags are ``None``.
    """
    messages = []
    adiabatic = perturbative = None
    ad_ratio = pt_ratio = None
    if a is not None:
        ad_ratio = a.adiabatic_ratio()
        pt_ratio = a.perturbative_ratio()
        adiabatic = a.is_adiabatic()
        perturbative = a.perturbative()
        if not adiabatic:
            messages.append(
                f"Delta E * tau_p = {ad_ratio:.3g} below adiabatic threshold {a.adiabatic_threshold:g}"
            )
        if not perturbative:
            messages.append(f"lambda / Delta E = {pt_ratio:.3g} is not small")
    fm_ratio = abs(g.delta_gamma_perp()) * model.omega_rms_tau_c()
    fast = bool(fm_ratio < fast_motional_threshold)
    if not fast:
        messages.append(
            f"delta_gamma_perp * omega_rms * tau_c = {fm_ratio:.3g} "
            f">= {fast_motional_threshold:g}; fast-motional rate not expected to hold"
        )
    for msg in messages:
        warnings.warn(msg, RegimeWarning, stacklevel=2)
    if not math.isfinite(fm_ratio):
        fm_ratio = float("inf")
    return RegimeReport(
        adiabatic=adiabatic,
        perturbative=perturbative,
        fast_motional=fast,
        adiabatic_ratio=ad_ratio,
        perturbative_ratio=pt_ratio,
        fast_motional_ratio=fm_ratio,
        fast_motional_threshold=fast_motional_threshold,
        messages=tuple(messages),
    )
