"""Relaxation-rate extraction, closed-form rate oracles and Elliott scans."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from .ensemble import DecayCurve, EnsembleSpec, run_3d_collisions
from .gamma import GammaTensor
from .stochastic import StrongCollision3D, derive_seed

__all__ = [
    "RateEstimate",
    "ElliottScan",
    "InsufficientData",
    "NonPositiveCurve",
    "RegressionIllConditioned",
    "fit_rate",
    "default_window",
    "oracle_rate_2d",
    "oracle_rate_3d",
    "gaussian_average_oracle",
    "elliott_scan",
    "DELTA_G_NORM_CONVENTION",
]

DELTA_G_NORM_CONVENTION = "||dg||^2 = 2*(gamma_perp - 1)^2 + (gamma_par - 1)^2"
MIN_POINTS = 8


class InsufficientData(ValueError):
    pass


class NonPositiveCurve(ValueError):
    pass


class RegressionIllConditioned(ValueError):
    pass


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    rate_stderr: float
    fit_window: tuple[float, float]
    residual_rms: float
    method: str
    n_points: int
    amplitude: float = 1.0
    non_exponential: bool = False


def default_window(curve: DecayCurve, upper: float = 0.95, lower: float = 0.2) -> tuple[int, int]:
    """Index range ``[start, stop)`` from the first drop below ``upper`` to ``lower``.

    Falls back to the whole curve when it never drops below ``upper``, and
    widens backwards so that at least eight points are kept when possible.
    """
    m = curve.mean_uz
    n = m.size
    below = np.flatnonzero(m < upper)
    if below.size == 0:
        return 0, n
    start = int(below[0])
    low = np.flatnonzero(m[start:] <= lower)
    stop = start + int(low[0]) + 1 if low.size else n
    if stop - start < MIN_POINTS:
        start = max(0, stop - MIN_POINTS)
    return start, stop


def _window_indices(curve: DecayCurve, window) -> tuple[int, int]:
    if window is None:
        return default_window(curve)
    t0, t1 = window
    idx = np.flatnonzero((curve.t >= t0) & (curve.t <= t1))
    if idx.size == 0:
        raise InsufficientData(f"no grid points in window [{t0}, {t1}]")
    return int(idx[0]), int(idx[-1]) + 1


def fit_rate(curve: DecayCurve, window: tuple[float, float] | None = None) -> RateEstimate:
    """Single-exponential rate of ``mean_uz`` on a window.

    A weighted log-linear fit (weights from the propagated standard errors)
    seeds a nonlinear least-squares fit of ``A exp(-r t)``, whose rate is
    returned.  Time is rescaled to the window span during the fit.
    """
    start, stop = _window_indices(curve, window)
    t = curve.t[start:stop]
    y = curve.mean_uz[start:stop]
    s = curve.stderr_uz[start:stop]
    bad = np.flatnonzero(y <= 0.05)
    if bad.size:
        # Shrink the window to end before the curve loses log validity.
        t, y, s = t[: bad[0]], y[: bad[0]], s[: bad[0]]
        if t.size < MIN_POINTS:
            raise NonPositiveCurve("mean_uz drops below 0.05 before enough points are available")
    if t.size < MIN_POINTS:
        raise InsufficientData(f"{t.size} points in fit window, need {MIN_POINTS}")

    t0 = t[0]
    span = t[-1] - t0
    tau = (t - t0) / span
    weighted = bool(np.all(s > 0))

    # Log-linear seed: ln y = b - r tau
    ly = np.log(y)
    w = (y / s) ** 2 if weighted else np.ones_like(y)
    sw, swx, swy = w.sum(), (w * tau).sum(), (w * ly).sum()
    swxx, swxy = (w * tau * tau).sum(), (w * tau * ly).sum()
    det = sw * swxx - swx * swx
    slope = (sw * swxy - swx * swy) / det
    intercept = (swxx * swy - swx * swxy) / det
    p0 = (math.exp(intercept), -slope)

    def model(x, a, r):
        return a * np.exp(-r * x)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, pcov = optimize.curve_fit(
            model,
            tau,
            y,
            p0=p0,
            sigma=s if weighted else None,
            absolute_sigma=weighted,
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            maxfev=10000,
        )
    amp, r = popt
    r_err = math.sqrt(pcov[1, 1]) if np.all(np.isfinite(pcov)) else 0.0
    # amplitude refers to t0; convert back to t = 0
    rate = r / span
    resid = y - model(tau, amp, r)
    residual_rms = float(np.sqrt(np.mean(resid**2)))
    noise = float(np.sqrt(np.mean(s**2)))
    non_exp = residual_rms > 3.0 * noise if noise > 0 else residual_rms > 1e-9
    return RateEstimate(
        rate=float(rate),
        rate_stderr=float(r_err / span),
        fit_window=(float(t[0]), float(t[-1])),
        residual_rms=residual_rms,
        method="nonlinear-LS",
        n_points=int(t.size),
        amplitude=float(amp * math.exp(rate * t0)),
        non_exponential=bool(non_exp),
    )


def oracle_rate_2d(g: GammaTensor, d1: float) -> float:
    """Diffusive 2D rate ``delta_gamma_perp^2 * D1``."""
    if d1 < 0:
        raise ValueError("d1 must be non-negative")
    return g.delta_gamma_perp() ** 2 * d1


def oracle_rate_3d(g: GammaTensor, omega_sq_mean: float, tau_c: float) -> float:
    """Fast-motional 3D rate ``(4/3) delta_gamma_perp^2 <omega^2> tau_c``."""
    if omega_sq_mean < 0 or tau_c < 0:
        raise ValueError("inputs must be non-negative")
    return 4.0 / 3.0 * g.delta_gamma_perp() ** 2 * omega_sq_mean * tau_c


def gaussian_average_oracle(g: GammaTensor, d1: float, t: float) -> float:
    """``<cos(delta_gamma_perp theta)>`` over the diffusive angle density, by quadrature.

    The angle density at time ``t`` is normal with variance ``2 D1 t``;
    after scaling to unit variance the cosine-weighted half-line integral is
    evaluated adaptively.
    """
    if t < 0 or d1 < 0:
        raise ValueError("t and d1 must be non-negative")
    k = g.delta_gamma_perp() * math.sqrt(2.0 * d1 * t)
    if k == 0.0:
        return 1.0
    val, err = integrate.quad(
        lambda x: math.exp(-0.5 * x * x) * math.cos(k * x),
        0.0,
        40.0,
        epsabs=1e-13,
        epsrel=1e-12,
        limit=500,
    )
    if err > 1e-10:
        raise RuntimeError(f"quadrature did not converge (error estimate {err:g})")
    return 2.0 * val / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ElliottScan:
    tau_p_values: list[float]
    fitted_rates: list[float]
    rate_stderrs: list[float]
    slope: float
    slope_stderr: float
    prefactor_a: float
    prefactor_stderr: float
    per_point_a: list[float]
    a_max_rel_deviation: float
    r_squared: float
    degenerate: bool
    norm_convention: str = DELTA_G_NORM_CONVENTION
    curves: list[DecayCurve] = field(default_factory=list, repr=False)
    estimates: list[RateEstimate] = field(default_factory=list, repr=False)

    @property
    def linear(self) -> bool:
        return not self.degenerate and self.r_squared > 0.99


def elliott_scan(
    base_spec: EnsembleSpec,
    tau_p_values,
    workers: int | None = None,
    window: tuple[float, float] | None = None,
) -> ElliottScan:
    """Strong-collision runs over several tau_p and a regression of rate on 1/tau_p.

    The time grid of ``base_spec`` is scaled by ``tau_p / base tau_p`` for
    each point, and point ``j`` uses ``derive_seed(root_seed, j)``.
    """
    m = base_spec.model
    if not isinstance(m, StrongCollision3D):
        raise TypeError("elliott_scan needs a StrongCollision3D base model")
    taus = [float(x) for x in tau_p_values]
    if len(taus) < 3 or min(taus) <= 0 or max(taus) / min(taus) < 4.0:
        raise RegressionIllConditioned("need >= 3 positive tau_p values spanning at least a factor of 4")

    curves, estimates = [], []
    for j, tau in enumerate(taus):
        spec = replace(
            base_spec,
            model=replace(m, tau_p=tau),
            t_grid=base_spec.t_grid * (tau / m.tau_p),
            root_seed=derive_seed(base_spec.root_seed, j),
        )
        curve = run_3d_collisions(spec, workers)
        w = None if window is None else (window[0] * tau / m.tau_p, window[1] * tau / m.tau_p)
        curves.append(curve)
        estimates.append(fit_rate(curve, w))

    x = 1.0 / np.array(taus)
    y = np.array([e.rate for e in estimates])
    s = np.array([e.rate_stderr for e in estimates])
    wts = 1.0 / s**2 if np.all(s > 0) else np.ones_like(y)
    slope = float((wts * x * y).sum() / (wts * x * x).sum())
    if np.all(s > 0):
        slope_err = float(1.0 / math.sqrt((wts * x * x).sum()))
    else:
        dof = max(len(x) - 1, 1)
        slope_err = float(math.sqrt(((y - slope * x) ** 2).sum() / dof / (x * x).sum()))
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - slope * x) ** 2).sum())
    norm = base_spec.gamma.delta_g_norm_sq()
    degenerate = norm == 0.0 or ss_tot == 0.0
    if degenerate:
        r2 = float("nan")
        a = a_err = dev = float("nan")
        per_a = [float("nan")] * len(taus)
    else:
        r2 = 1.0 - ss_res / ss_tot
        a, a_err = slope / norm, slope_err / norm
        per_a = list(y * np.array(taus) / norm)
        mean_a = float(np.mean(per_a))
        dev = float(np.max(np.abs(np.array(per_a) / mean_a - 1.0)))
    if not degenerate and r2 <= 0.99:
        warnings.warn(f"rate vs 1/tau_p is not linear (R^2 = {r2:.4f})", stacklevel=2)
    return ElliottScan(
        tau_p_values=taus,
        fitted_rates=list(map(float, y)),
        rate_stderrs=list(map(float, s)),
        slope=slope,
        slope_stderr=slope_err,
        prefactor_a=float(a),
        prefactor_stderr=float(a_err),
        per_point_a=[float(v) for v in per_a],
        a_max_rel_deviation=float(dev),
        r_squared=float(r2),
        degenerate=bool(degenerate),
        curves=curves,
        estimates=estimates,
    )
