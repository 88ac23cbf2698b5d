"""Monte Carlo dephasing of a Kramers-doublet pseudo spin under geometric (Wilczek-Zee) rotations."""

from .analysis import ElliottScan, RateEstimate, elliott_scan, fit_rate, gaussian_average_oracle, oracle_rate_2d, oracle_rate_3d
from .config import ExperimentConfig, load_config
from .ensemble import DecayCurve, EnsembleSpec, run
from .experiment import ResultBundle, run_experiment
from .export import export
from .gamma import GammaTensor, from_delta_g, jones_pines, validate_regime
from .su2 import Polarization, Rotor, apply, compose, inverse

__version__ = "0.1.0"

__all__ = [
    "Rotor",
    "Polarization",
    "compose",
    "apply",
    "inverse",
    "GammaTensor",
    "from_delta_g",
    "jones_pines",
    "validate_regime",
    "EnsembleSpec",
    "DecayCurve",
    "run",
    "RateEstimate",
    "ElliottScan",
    "fit_rate",
    "elliott_scan",
    "oracle_rate_2d",
    "oracle_rate_3d",
    "gaussian_average_oracle",
    "ExperimentConfig",
    "load_config",
    "ResultBundle",
    "run_experiment",
    "export",
]
