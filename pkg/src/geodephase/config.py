"""Declarative experiment configuration (JSON)."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt, model_validator
from pydantic import ValidationError as _PydanticValidationError

from . import analysis, stochastic
from .gamma import AdiabaticityParams, GammaTensor, from_delta_g, jones_pines

__all__ = [
    "ExperimentConfig",
    "ConfigParseError",
    "ConfigValidationError",
    "load_config",
    "parse_config",
    "config_hash",
    "SCENARIOS",
    "STOCHASTIC_SCENARIOS",
]

SCENARIOS = ("decay-2d", "decay-3d-collisions", "decay-3d-ou", "elliott-scan", "oracle-table")
STOCHASTIC_SCENARIOS = ("decay-2d", "decay-3d-collisions", "decay-3d-ou", "elliott-scan")
_MODEL_FOR_SCENARIO = {
    "decay-2d": ("diffusion-2d",),
    "decay-3d-collisions": ("strong-collision-3d",),
    "decay-3d-ou": ("ou-3d",),
    "elliott-scan": ("strong-collision-3d",),
    "oracle-table": ("diffusion-2d", "strong-collision-3d", "ou-3d"),
}


class ConfigParseError(ValueError):
    pass


class ConfigValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PrincipalGamma(_Strict):
    gamma_par: float = 1.0
    gamma_perp: float


class DeltaG(_Strict):
    perp: float
    par: float = 0.0


class JonesPines(_Strict):
    spin: PositiveFloat


class GammaSpec(_Strict):
    principal: Optional[PrincipalGamma] = None
    delta_g: Optional[DeltaG] = None
    jones_pines: Optional[JonesPines] = None

    @model_validator(mode="after")
    def _one_form(self):
        given = [k for k in ("principal", "delta_g", "jones_pines") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of principal / delta_g / jones_pines is required, got {given or 'none'}")
        if self.jones_pines is not None:
            try:
                jones_pines(self.jones_pines.spin)
            except ValueError as exc:
                raise ValueError(str(exc)) from None
        return self

    def build(self) -> GammaTensor:
        if self.principal is not None:
            return GammaTensor(self.principal.gamma_par, self.principal.gamma_perp)
        if self.delta_g is not None:
            return from_delta_g(self.delta_g.perp, self.delta_g.par)
        return jones_pines(self.jones_pines.spin)


class FixedAngleSpec(_Strict):
    kind: Literal["fixed"]
    theta: float = Field(gt=-math.pi, le=math.pi)


class GaussianAngleSpec(_Strict):
    kind: Literal["gaussian"]
    sigma: PositiveFloat


class ExponentialAngleSpec(_Strict):
    kind: Literal["exponential"]
    mean: PositiveFloat


AngleLawSpec = Annotated[
    Union[FixedAngleSpec, GaussianAngleSpec, ExponentialAngleSpec], Field(discriminator="kind")
]


class Diffusion2DSpec(_Strict):
    kind: Literal["diffusion-2d"]
    d1: NonNegativeFloat

    def build(self) -> stochastic.Diffusion2D:
        return stochastic.Diffusion2D(self.d1)


class StrongCollisionSpec(_Strict):
    kind: Literal["strong-collision-3d"]
    tau_p: PositiveFloat
    angle_law: AngleLawSpec
    delta_t_c: PositiveFloat

    def build(self) -> stochastic.StrongCollision3D:
        law = self.angle_law
        if law.kind == "fixed":
            built = stochastic.FixedAngle(law.theta)
        elif law.kind == "gaussian":
            built = stochastic.GaussianAngle(law.sigma)
        else:
            built = stochastic.ExponentialAngle(law.mean)
        return stochastic.StrongCollision3D(self.tau_p, built, self.delta_t_c)


class OuSpec(_Strict):
    """Either ``omega_sq_mean`` or ``tau_p`` (via ``<omega^2> tau_c = 1/tau_p``)."""

    kind: Literal["ou-3d"]
    tau_c: PositiveFloat
    omega_sq_mean: Optional[NonNegativeFloat] = None
    tau_p: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _one_strength(self):
        if (self.omega_sq_mean is None) == (self.tau_p is None):
            raise ValueError("give exactly one of omega_sq_mean or tau_p")
        return self

    def build(self) -> stochastic.OuAngularVelocity3D:
        if self.tau_p is not None:
            return stochastic.OuAngularVelocity3D.from_tau_p(self.tau_p, self.tau_c)
        return stochastic.OuAngularVelocity3D(self.omega_sq_mean, self.tau_c)


ModelSpec = Annotated[Union[Diffusion2DSpec, StrongCollisionSpec, OuSpec], Field(discriminator="kind")]


class AdiabaticitySpec(_Strict):
    lambda_soc: NonNegativeFloat
    delta_e: PositiveFloat
    tau_p: PositiveFloat
    threshold: PositiveFloat = 10.0

    def build(self) -> AdiabaticityParams:
        return AdiabaticityParams(self.lambda_soc, self.delta_e, self.tau_p, self.threshold)


class OutputSpec(_Strict):
    dir: str = "results"
    formats: list[Literal["csv", "json", "svg"]] = ["csv", "json", "svg"]


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = 1
    scenario: Literal["decay-2d", "decay-3d-collisions", "decay-3d-ou", "elliott-scan", "oracle-table"]
    gamma: GammaSpec
    model: ModelSpec
    n_traj: PositiveInt = 10_000
    t_max: Optional[PositiveFloat] = None
    n_points: int = Field(200, ge=8)
    root_seed: Optional[int] = Field(None, ge=0, lt=2**64)
    tau_p_values: Optional[list[PositiveFloat]] = None
    fit_window: Optional[tuple[float, float]] = None
    dt: Optional[PositiveFloat] = None
    initial_u: tuple[float, float, float] = (0.0, 0.0, 1.0)
    regime_check: bool = True
    fast_motional_threshold: PositiveFloat = 0.1
    adiabaticity: Optional[AdiabaticitySpec] = None
    workers: Optional[PositiveInt] = None
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = []
        if self.model.kind not in _MODEL_FOR_SCENARIO[self.scenario]:
            problems.append(f"scenario {self.scenario!r} cannot use model {self.model.kind!r}")
        if self.scenario in STOCHASTIC_SCENARIOS and self.root_seed is None:
            problems.append(f"scenario {self.scenario!r} needs root_seed")
        if self.scenario == "elliott-scan":
            if not self.tau_p_values or len(self.tau_p_values) < 3:
                problems.append("elliott-scan needs at least three tau_p_values")
            elif max(self.tau_p_values) / min(self.tau_p_values) < 4:
                problems.append("tau_p_values must span at least a factor of 4")
        elif self.tau_p_values is not None:
            problems.append("tau_p_values is only used by elliott-scan")
        if self.dt is not None and self.model.kind != "ou-3d":
            problems.append("dt is only used by the ou-3d model")
        if self.fit_window is not None and not self.fit_window[0] < self.fit_window[1]:
            problems.append("fit_window must be increasing")
        if float(np.linalg.norm(self.initial_u)) > 1 + 1e-12:
            problems.append("|initial_u| must not exceed 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def gamma_tensor(self) -> GammaTensor:
        return self.gamma.build()

    def stochastic_model(self) -> stochastic.StochasticModel:
        return self.model.build()

    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, float(self.t_max), self.n_points)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def with_overrides(self, seed: int | None = None, out: str | None = None, formats=None) -> ExperimentConfig:
        data = self.echo()
        if seed is not None:
            data["root_seed"] = seed
        if out is not None:
            data["output"]["dir"] = str(out)
        if formats is not None:
            data["output"]["formats"] = list(formats)
        return parse_config(data)


def _auto_horizon(cfg: ExperimentConfig) -> float:
    """Time span over which the expected decay reaches about exp(-2)."""
    g = cfg.gamma_tensor()
    model = cfg.stochastic_model()
    if isinstance(model, stochastic.Diffusion2D):
        rate = analysis.oracle_rate_2d(g, model.d1)
        natural = 1.0 / model.d1 if model.d1 > 0 else 1.0
    elif isinstance(model, stochastic.OuAngularVelocity3D):
        rate = analysis.oracle_rate_3d(g, model.omega_sq_mean, model.tau_c)
        natural = 100.0 * model.tau_c
    else:
        # Isotropic in-plane axes: (2/3)(1 - <cos(dg theta)>) per collision.
        rate = 2.0 / 3.0 * (1.0 - model.angle_law.mean_cos(g.delta_gamma_perp())) / model.tau_p
        natural = 10.0 * model.tau_p
    return 2.0 / rate if rate > 0 else natural


def _format_errors(exc: _PydanticValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, ") :]
        out.append(f"{loc}: {msg}")
    return out


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config mapping and fill derived defaults."""
    try:
        cfg = ExperimentConfig.model_validate(data)
    except _PydanticValidationError as exc:
        raise ConfigValidationError(_format_errors(exc)) from None
    if cfg.t_max is None:
        cfg = cfg.model_copy(update={"t_max": float(_auto_horizon(cfg))})
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigParseError(f"{path}: top level must be a JSON object")
    return parse_config(data)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical echo, excluding output location and worker count."""
    data = cfg.echo()
    data.pop("output")
    data.pop("workers")
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
