"""Scenario dispatch and the serializable result bundle."""

from __future__ import annotations

import logging
import math
import time
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import analysis, ensemble, stochastic
from .config import ExperimentConfig, config_hash
from .gamma import RegimeReport, validate_regime

__all__ = [
    "ResultBundle",
    "CurveRecord",
    "RateRecord",
    "OracleTable",
    "OracleRow",
    "ScanRecord",
    "RegimeRecord",
    "ExperimentError",
    "run_experiment",
    "oracle_table",
]

log = logging.getLogger(__name__)


class ExperimentError(RuntimeError):
    pass


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, ser_json_inf_nan="constants")


class CurveRecord(_Record):
    label: str
    tau_p: Optional[float] = None
    n_traj: int
    t: list[float]
    mean_uz: list[float]
    stderr_uz: list[float]
    mean_u: list[tuple[float, float, float]]

    @classmethod
    def from_curve(cls, label: str, curve: ensemble.DecayCurve, tau_p: float | None = None) -> CurveRecord:
        return cls(
            label=label,
            tau_p=tau_p,
            n_traj=curve.n_traj,
            t=curve.t.tolist(),
            mean_uz=curve.mean_uz.tolist(),
            stderr_uz=curve.stderr_uz.tolist(),
            mean_u=[tuple(row) for row in curve.mean_u.tolist()],
        )


class RateRecord(_Record):
    label: str
    rate: float
    rate_stderr: float
    fit_window: tuple[float, float]
    residual_rms: float
    method: str
    n_points: int
    amplitude: float
    non_exponential: bool
    oracle: Optional[float] = None
    relative_deviation: Optional[float] = None

    @classmethod
    def from_estimate(cls, label: str, est: analysis.RateEstimate, oracle: float | None) -> RateRecord:
        dev = None
        if oracle is not None and oracle != 0:
            dev = est.rate / oracle - 1.0
        return cls(
            label=label,
            rate=est.rate,
            rate_stderr=est.rate_stderr,
            fit_window=est.fit_window,
            residual_rms=est.residual_rms,
            method=est.method,
            n_points=est.n_points,
            amplitude=est.amplitude,
            non_exponential=est.non_exponential,
            oracle=oracle,
            relative_deviation=dev,
        )


class OracleRow(_Record):
    t: float
    closed_form: float
    quadrature: Optional[float] = None


class OracleTable(_Record):
    model: str
    rate: Optional[float]
    formula: Optional[str]
    rows: list[OracleRow]


class ScanRecord(_Record):
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
    linear: bool
    norm_convention: str


class RegimeRecord(_Record):
    adiabatic: Optional[bool]
    perturbative: Optional[bool]
    fast_motional: bool
    adiabatic_ratio: Optional[float]
    perturbative_ratio: Optional[float]
    fast_motional_ratio: float
    fast_motional_threshold: float
    messages: list[str]

    @classmethod
    def from_report(cls, report: RegimeReport) -> RegimeRecord:
        return cls(**report.to_dict())


class ResultBundle(_Record):
    schema_version: Literal[1] = 1
    scenario: str
    config: ExperimentConfig
    config_sha256: str
    root_seed: Optional[int]
    rng_scheme: Optional[str]
    curves: list[CurveRecord] = []
    rates: list[RateRecord] = []
    oracle_table: Optional[OracleTable] = None
    elliott: Optional[ScanRecord] = None
    regime: Optional[RegimeRecord] = None
    # Kept out of the JSON so that reruns reproduce it byte for byte.
    wall_clock_s: Optional[float] = Field(default=None, exclude=True)

    def oracle_for(self, label: str) -> float | None:
        for r in self.rates:
            if r.label == label:
                return r.oracle
        return None


def _oracle_rate(cfg: ExperimentConfig) -> tuple[float | None, str | None]:
    g = cfg.gamma_tensor()
    model = cfg.stochastic_model()
    if isinstance(model, stochastic.Diffusion2D):
        return analysis.oracle_rate_2d(g, model.d1), "delta_gamma_perp^2 * D1"
    if isinstance(model, stochastic.OuAngularVelocity3D):
        return (
            analysis.oracle_rate_3d(g, model.omega_sq_mean, model.tau_c),
            "(4/3) * delta_gamma_perp^2 * <omega^2> * tau_c",
        )
    return None, None


def oracle_table(cfg: ExperimentConfig) -> OracleTable:
    """Closed-form decay (and the quadrature average for diffusion) on the config grid.

    Deterministic and consumes no random numbers.
    """
    rate, formula = _oracle_rate(cfg)
    rows = []
    if rate is not None:
        model = cfg.stochastic_model()
        g = cfg.gamma_tensor()
        for t in cfg.t_grid().tolist():
            quad = None
            if isinstance(model, stochastic.Diffusion2D):
                quad = analysis.gaussian_average_oracle(g, model.d1, t)
            rows.append(OracleRow(t=t, closed_form=math.exp(-rate * t), quadrature=quad))
    return OracleTable(model=cfg.model.kind, rate=rate, formula=formula, rows=rows)


def _ensemble_spec(cfg: ExperimentConfig) -> ensemble.EnsembleSpec:
    return ensemble.EnsembleSpec(
        model=cfg.stochastic_model(),
        gamma=cfg.gamma_tensor(),
        n_traj=cfg.n_traj,
        t_grid=cfg.t_grid(),
        root_seed=cfg.root_seed,
        initial_u=np.array(cfg.initial_u, dtype=float),
        dt=cfg.dt,
    )


def _regime(cfg: ExperimentConfig) -> RegimeRecord | None:
    if not cfg.regime_check:
        return None
    adiab = cfg.adiabaticity.build() if cfg.adiabaticity is not None else None
    report = validate_regime(cfg.gamma_tensor(), adiab, cfg.stochastic_model(), cfg.fast_motional_threshold)
    return RegimeRecord.from_report(report)


def _run(cfg: ExperimentConfig, workers: int | None) -> dict:
    out: dict = {}
    if cfg.scenario == "oracle-table":
        out["oracle_table"] = oracle_table(cfg)
        return out

    spec = _ensemble_spec(cfg)
    if cfg.scenario == "elliott-scan":
        scan = analysis.elliott_scan(spec, cfg.tau_p_values, workers=workers, window=cfg.fit_window)
        curves, rates = [], []
        for j, (tau, curve, est) in enumerate(zip(scan.tau_p_values, scan.curves, scan.estimates)):
            label = f"elliott-scan-{j}"
            curves.append(CurveRecord.from_curve(label, curve, tau_p=tau))
            rates.append(RateRecord.from_estimate(label, est, None))
        out["curves"], out["rates"] = curves, rates
        out["elliott"] = ScanRecord(
            tau_p_values=scan.tau_p_values,
            fitted_rates=scan.fitted_rates,
            rate_stderrs=scan.rate_stderrs,
            slope=scan.slope,
            slope_stderr=scan.slope_stderr,
            prefactor_a=scan.prefactor_a,
            prefactor_stderr=scan.prefactor_stderr,
            per_point_a=scan.per_point_a,
            a_max_rel_deviation=scan.a_max_rel_deviation,
            r_squared=scan.r_squared,
            degenerate=scan.degenerate,
            linear=scan.linear,
            norm_convention=scan.norm_convention,
        )
        return out

    curve = ensemble.run(spec, workers)
    label = cfg.scenario
    tau = getattr(spec.model, "tau_p", None)
    out["curves"] = [CurveRecord.from_curve(label, curve, tau_p=tau)]
    oracle, _ = _oracle_rate(cfg)
    est = analysis.fit_rate(curve, cfg.fit_window)
    out["rates"] = [RateRecord.from_estimate(label, est, oracle)]
    return out


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ResultBundle:
    """Execute the configured scenario and collect every artifact in one bundle.

    Errors from the numerical layers are re-raised as :class:`ExperimentError`
    carrying the scenario name.  Regime violations are recorded, never fatal.
    """
    workers = workers if workers is not None else cfg.workers
    started = time.perf_counter()
    try:
        regime = _regime(cfg)
        parts = _run(cfg, workers)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        raise ExperimentError(f"{cfg.scenario}: {exc}") from exc
    elapsed = time.perf_counter() - started
    log.info("%s finished in %.2f s", cfg.scenario, elapsed)
    stochastic_run = cfg.scenario != "oracle-table"
    return ResultBundle(
        scenario=cfg.scenario,
        config=cfg,
        config_sha256=config_hash(cfg),
        root_seed=cfg.root_seed if stochastic_run else None,
        rng_scheme=stochastic.RNG_SCHEME if stochastic_run else None,
        regime=regime,
        wall_clock_s=elapsed,
        **parts,
    )
