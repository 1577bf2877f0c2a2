"""dcem: bottom-up data center energy modelling under uncertainty."""

from .bottomup import (Eq1Result, ProjectionResult, PueBySpaceType, Scenario, aggregate_eq1,
                       project_scenario, sensitivity_oat)
from .calibration import (BayesianCalibrator, CalibrationProblem, PosteriorChain,
                          chain_diagnostics, log_posterior, metropolis_calibrate)
from .errors import DcemError, ValidationError
from .ida import (DecompositionResult, IdaDataset, LmdiDecomposer, lmdi_additive,
                  lmdi_multiplicative, log_mean)
from .itpower import (ClassRegistry, InstalledBase, ServerClass, ServerPowerModel,
                      fleet_annual_energy, server_power)
from .ledger import EnergyLedger
from .optimize import AchievablePue, Frontier, achievable_pue
from .psychro import HourlyWeatherRecord, WeatherSeries, derive_psychrometrics, load_weather_series
from .pue import (CoolingSystemConfig, DataCenterConfig, EconomizerMode, PowerChainConfig,
                  PueResult, PueSimulator, annual_pue, economizer_fraction, simulate_hour)
from .report import emit_report
from .uncertainty import Distribution, McSummary, relative_error, run_monte_carlo, sample

__version__ = "0.1.0"

__all__ = [
    "AchievablePue", "BayesianCalibrator", "CalibrationProblem", "ClassRegistry",
    "CoolingSystemConfig", "DataCenterConfig", "DcemError", "DecompositionResult",
    "Distribution", "EconomizerMode", "EnergyLedger", "Eq1Result", "Frontier",
    "HourlyWeatherRecord", "IdaDataset", "InstalledBase", "LmdiDecomposer", "McSummary",
    "PosteriorChain", "PowerChainConfig", "ProjectionResult", "PueBySpaceType", "PueResult",
    "PueSimulator", "Scenario", "ServerClass", "ServerPowerModel", "ValidationError",
    "WeatherSeries", "achievable_pue", "aggregate_eq1", "annual_pue", "chain_diagnostics",
    "derive_psychrometrics", "economizer_fraction", "emit_report", "fleet_annual_energy",
    "lmdi_additive", "lmdi_multiplicative", "load_weather_series", "log_mean",
    "log_posterior", "metropolis_calibrate", "project_scenario", "relative_error",
    "run_monte_carlo", "sample", "sensitivity_oat", "server_power", "simulate_hour",
]
