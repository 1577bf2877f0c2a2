"""Steady-state hourly energy balance of data center infrastructure.

Five overhead subsystems are modelled per hour: chiller, fans, pumps/cooling
tower, UPS + PDU losses, and lighting/miscellaneous. Fan heat is added to the
cooling load; pump, tower and electrical losses are rejected outside the
cooled envelope. Chiller COP is linear in the outdoor coupling temperature
(dry-bulb for air-cooled plants, wet-bulb plus tower approach for
water-cooled plants) relative to the supply-air setpoint, clamped to >= 1.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InfeasibleConfig, LengthMismatch, MissingFile, ValidationError
from .psychro import derive_psychrometrics
from .validation import (check_nonnegative, check_positive, check_scalar,
                         weather_arrays)

WATERSIDE_BLEND_BAND = 5.0  # °C above the full-free-cooling threshold
SUBSYSTEMS = ("it", "chiller", "fans", "pumps_tower", "ups_pdu_loss", "lighting_misc")


class EconomizerMode(str, Enum):
    NONE = "none"
    AIRSIDE = "airside"
    WATERSIDE = "waterside"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown economizer mode {value!r}") from None


@dataclass(frozen=True)
class CoolingSystemConfig:
    economizer_mode: EconomizerMode = EconomizerMode.AIRSIDE
    chiller_cop_rated: float = 7.0
    chiller_cop_slope: float = 0.12
    supply_air_setpoint: float = 22.0
    airside_high_limit: float = 22.0
    airside_low_limit: float = 12.0
    tower_approach: float = 4.0
    hx_approach: float = 2.0
    fan_power_fraction: float = 0.06
    pump_power_fraction: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "economizer_mode",
                           EconomizerMode.parse(self.economizer_mode))
        # rated COP <= 0 is reported by simulate_hour, not here
        check_scalar(self.chiller_cop_rated, "chiller_cop_rated")
        check_scalar(self.chiller_cop_slope, "chiller_cop_slope")
        check_scalar(self.supply_air_setpoint, "supply_air_setpoint")
        check_scalar(self.airside_high_limit, "airside_high_limit")
        check_scalar(self.airside_low_limit, "airside_low_limit")
        if not self.airside_low_limit < self.airside_high_limit:
            raise ValidationError("airside_low_limit must be < airside_high_limit")
        for name in ("tower_approach", "hx_approach", "fan_power_fraction",
                     "pump_power_fraction"):
            check_nonnegative(getattr(self, name), name)


@dataclass(frozen=True)
class PowerChainConfig:
    ups_efficiency_curve: tuple = ((0.1, 0.86), (0.25, 0.92), (0.5, 0.95),
                                   (0.75, 0.96), (1.0, 0.96))
    pdu_loss_fraction: float = 0.02
    lighting_misc: float = 0.01

    def __post_init__(self):
        curve = tuple((float(lf), float(eff)) for lf, eff in self.ups_efficiency_curve)
        if not curve:
            raise ValidationError("ups_efficiency_curve needs at least one knot")
        loads = [lf for lf, _ in curve]
        if any(not 0.0 <= lf <= 1.0 for lf in loads):
            raise ValidationError("UPS curve load fractions must lie in [0, 1]")
        if any(b <= a for a, b in zip(loads, loads[1:])):
            raise ValidationError("UPS curve load fractions must be strictly increasing")
        if any(not 0.0 < eff <= 1.0 for _, eff in curve):
            raise ValidationError("UPS efficiencies must lie in (0, 1]")
        object.__setattr__(self, "ups_efficiency_curve", curve)
        check_nonnegative(self.pdu_loss_fraction, "pdu_loss_fraction")
        check_nonnegative(self.lighting_misc, "lighting_misc")

    def ups_efficiency(self, load_fraction):
        loads, effs = zip(*self.ups_efficiency_curve)
        return np.interp(load_fraction, loads, effs)


LOSSLESS_CHAIN = PowerChainConfig(((0.0, 1.0), (1.0, 1.0)), 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class DataCenterConfig:
    it_design_load: float = 1000.0
    it_load_profile: object = 0.8
    cooling: CoolingSystemConfig = field(default_factory=CoolingSystemConfig)
    power_chain: PowerChainConfig = field(default_factory=PowerChainConfig)

    def __post_init__(self):
        check_positive(self.it_design_load, "it_design_load")
        profile = self.it_load_profile
        if np.ndim(profile) == 0:
            check_scalar(profile, "it_load_profile", min_val=0.0, max_val=1.0,
                         include_min=False)
            object.__setattr__(self, "it_load_profile", float(profile))
        else:
            arr = np.array(profile, dtype=np.float64)
            if arr.ndim != 1 or not np.all((arr > 0) & (arr <= 1)):
                raise ValidationError("hourly it_load_profile values must lie in (0, 1]")
            arr.flags.writeable = False
            object.__setattr__(self, "it_load_profile", arr)
        if isinstance(self.cooling, dict):
            object.__setattr__(self, "cooling", CoolingSystemConfig(**self.cooling))
        if isinstance(self.power_chain, dict):
            object.__setattr__(self, "power_chain", PowerChainConfig(**self.power_chain))

    @property
    def hourly_profile(self):
        return isinstance(self.it_load_profile, np.ndarray)

    def load_fraction(self, hour):
        if self.hourly_profile:
            return float(self.it_load_profile[hour])
        return self.it_load_profile

    def to_dict(self):
        cooling = asdict(self.cooling)
        cooling["economizer_mode"] = self.cooling.economizer_mode.value
        chain = asdict(self.power_chain)
        chain["ups_efficiency_curve"] = [list(k) for k in self.power_chain.ups_efficiency_curve]
        profile = (self.it_load_profile.tolist() if self.hourly_profile
                   else self.it_load_profile)
        return {"it_design_load": self.it_design_load, "it_load_profile": profile,
                "cooling": cooling, "power_chain": chain}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"it_design_load", "it_load_profile", "cooling", "power_chain"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            cooling = CoolingSystemConfig(**data.get("cooling", {}))
            chain = PowerChainConfig(**data.get("power_chain", {}))
        except TypeError as exc:
            raise ValidationError(str(exc)) from None
        kwargs = {k: data[k] for k in ("it_design_load", "it_load_profile") if k in data}
        return cls(cooling=cooling, power_chain=chain, **kwargs)

    def __eq__(self, other):
        if not isinstance(other, DataCenterConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    def with_params(self, **values):
        """Return a copy with named fields replaced.

        Names are looked up on the cooling config, then the power chain, then
        the top level. Unknown names raise ``ValidationError``.
        """
        cool_names = {f.name for f in fields(CoolingSystemConfig)}
        chain_names = {f.name for f in fields(PowerChainConfig)}
        top_names = {"it_design_load", "it_load_profile"}
        cool, chain, top = {}, {}, {}
        for name, value in values.items():
            if name in cool_names:
                cool[name] = value
            elif name in chain_names:
                chain[name] = value
            elif name in top_names:
                top[name] = value
            else:
                raise ValidationError(f"unknown config parameter {name!r}")
        return replace(self, cooling=replace(self.cooling, **cool),
                       power_chain=replace(self.power_chain, **chain), **top)


def load_config(path):
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return DataCenterConfig.from_dict(data)


def reference_config():
    """The bundled reference facility used in examples and tests."""
    return DataCenterConfig()


@dataclass(frozen=True)
class HourlyPowerBreakdown:
    it: float
    chiller: float
    fans: float
    pumps_tower: float
    ups_pdu_loss: float
    lighting_misc: float
    pue: float

    @property
    def total(self):
        return (self.it + self.chiller + self.fans + self.pumps_tower
                + self.ups_pdu_loss + self.lighting_misc)


class PueResult:
    """Hourly breakdown plus energy-weighted annual PUE.

    ``arrays`` maps each subsystem name (and ``"pue"``) to an hourly kW array;
    ``hourly`` builds :class:`HourlyPowerBreakdown` records on demand.
    """

    def __init__(self, arrays):
        self.arrays = arrays
        self.subsystem_energy = {name: float(np.sum(arrays[name])) for name in SUBSYSTEMS}
        total = float(np.sum(arrays["total"]))
        self.total_energy = total
        self.annual_pue = total / self.subsystem_energy["it"]

    @property
    def hourly(self):
        cols = [self.arrays[k] for k in SUBSYSTEMS + ("pue",)]
        return [HourlyPowerBreakdown(*map(float, row)) for row in zip(*cols)]

    @property
    def hourly_pue(self):
        return self.arrays["pue"]

    def __len__(self):
        return len(self.arrays["it"])

    def summary(self):
        pue = self.arrays["pue"]
        return {
            "annual_pue": self.annual_pue,
            "hours": len(self),
            "min_hourly_pue": float(pue.min()),
            "max_hourly_pue": float(pue.max()),
            "subsystem_energy_kwh": dict(self.subsystem_energy),
            "total_energy_kwh": self.total_energy,
        }


def _economizer_scalar(cooling, dry_bulb, wet_bulb):
    mode = cooling.economizer_mode
    if mode is EconomizerMode.NONE:
        return 0.0
    if mode is EconomizerMode.AIRSIDE:
        lo, hi = cooling.airside_low_limit, cooling.airside_high_limit
        if dry_bulb <= lo:
            return 1.0
        if dry_bulb >= hi:
            return 0.0
        return (hi - dry_bulb) / (hi - lo)
    threshold = cooling.supply_air_setpoint
    x = wet_bulb + cooling.tower_approach + cooling.hx_approach
    if x <= threshold:
        return 1.0
    if x >= threshold + WATERSIDE_BLEND_BAND:
        return 0.0
    return (threshold + WATERSIDE_BLEND_BAND - x) / WATERSIDE_BLEND_BAND


def economizer_fraction(cooling, record):
    """Share of the hour's heat load removed without running the chiller."""
    if cooling.economizer_mode is EconomizerMode.WATERSIDE and record.wet_bulb is None:
        record = derive_psychrometrics(record)
    return _economizer_scalar(cooling, record.dry_bulb, record.wet_bulb)


def _coupling_temperature(cooling, dry_bulb, wet_bulb):
    if cooling.economizer_mode is EconomizerMode.WATERSIDE:
        return wet_bulb + cooling.tower_approach
    return dry_bulb


def chiller_cop(cooling, dry_bulb, wet_bulb):
    """Hourly chiller COP, clamped to >= 1."""
    lift = _coupling_temperature(cooling, dry_bulb, wet_bulb) - cooling.supply_air_setpoint
    return max(1.0, cooling.chiller_cop_rated - cooling.chiller_cop_slope * lift)


def simulate_hour(config, record):
    """Energy balance for one hour of operation."""
    if record.wet_bulb is None:
        record = derive_psychrometrics(record)
    cool = config.cooling
    chain = config.power_chain
    frac = config.load_fraction(record.hour_index)
    it = config.it_design_load * frac
    fans = cool.fan_power_fraction * it
    pumps = cool.pump_power_fraction * it
    heat = it + fans
    econ = _economizer_scalar(cool, record.dry_bulb, record.wet_bulb)
    mech = (1.0 - econ) * heat
    if mech > 0 and cool.chiller_cop_rated <= 0:
        raise InfeasibleConfig(
            f"rated chiller COP {cool.chiller_cop_rated} <= 0 with mechanical cooling required")
    chiller = mech / chiller_cop(cool, record.dry_bulb, record.wet_bulb) if mech > 0 else 0.0
    eta = float(chain.ups_efficiency(frac))
    ups_pdu = it * (1.0 / eta - 1.0) + chain.pdu_loss_fraction * it
    lighting = chain.lighting_misc * config.it_design_load
    total = it + chiller + fans + pumps + ups_pdu + lighting
    return HourlyPowerBreakdown(it, chiller, fans, pumps, ups_pdu, lighting, total / it)


def _simulate_arrays(config, dry_bulb, wet_bulb):
    cool = config.cooling
    chain = config.power_chain
    n = len(dry_bulb)
    if config.hourly_profile:
        if len(config.it_load_profile) != n:
            raise LengthMismatch(
                f"hourly load profile has {len(config.it_load_profile)} values, "
                f"weather has {n}")
        frac = config.it_load_profile
    else:
        frac = np.full(n, config.it_load_profile)
    it = config.it_design_load * frac
    fans = cool.fan_power_fraction * it
    pumps = cool.pump_power_fraction * it
    heat = it + fans

    mode = cool.economizer_mode
    if mode is EconomizerMode.NONE:
        econ = np.zeros(n)
    elif mode is EconomizerMode.AIRSIDE:
        lo, hi = cool.airside_low_limit, cool.airside_high_limit
        econ = np.clip((hi - dry_bulb) / (hi - lo), 0.0, 1.0)
    else:
        x = wet_bulb + cool.tower_approach + cool.hx_approach
        top = cool.supply_air_setpoint + WATERSIDE_BLEND_BAND
        econ = np.clip((top - x) / WATERSIDE_BLEND_BAND, 0.0, 1.0)
    mech = (1.0 - econ) * heat
    if cool.chiller_cop_rated <= 0 and np.any(mech > 0):
        raise InfeasibleConfig(
            f"rated chiller COP {cool.chiller_cop_rated} <= 0 with mechanical cooling required")
    lift = _coupling_temperature(cool, dry_bulb, wet_bulb) - cool.supply_air_setpoint
    cop = np.maximum(1.0, cool.chiller_cop_rated - cool.chiller_cop_slope * lift)
    chiller = mech / cop
    eta = chain.ups_efficiency(frac)
    ups_pdu = it * (1.0 / eta - 1.0) + chain.pdu_loss_fraction * it
    lighting = np.full(n, chain.lighting_misc * config.it_design_load)
    total = it + chiller + fans + pumps + ups_pdu + lighting
    return {"it": it, "chiller": chiller, "fans": fans, "pumps_tower": pumps,
            "ups_pdu_loss": ups_pdu, "lighting_misc": lighting,
            "total": total, "pue": total / it}


def annual_pue(config, weather):
    """Simulate every hour of ``weather`` and return the energy-weighted result."""
    dry_bulb, wet_bulb = weather_arrays(weather)
    return PueResult(_simulate_arrays(config, dry_bulb, wet_bulb))


def annual_pue_value(config, dry_bulb, wet_bulb):
    """Annual PUE only, skipping result construction. Used by search loops."""
    arrays = _simulate_arrays(config, dry_bulb, wet_bulb)
    return math.fsum(arrays["total"]) / math.fsum(arrays["it"])


class PueSimulator(BaseEstimator):
    """Estimator-style wrapper around the hourly PUE model.

    The model has nothing to learn, so ``fit`` only validates the weather
    input. ``predict`` returns hourly PUE; ``score_annual`` the annual value.

    Parameters
    ----------
    config : DataCenterConfig, default=None
        Facility description. ``None`` uses :func:`reference_config`.
    """

    def __init__(self, config=None):
        self.config = config

    def _config(self):
        return reference_config() if self.config is None else self.config

    def fit(self, X, y=None):
        dry_bulb, _ = weather_arrays(X)
        self.n_hours_ = len(dry_bulb)
        self.config_ = self._config()
        return self

    def simulate(self, X):
        return annual_pue(self._config(), X)

    def predict(self, X):
        return self.simulate(X).hourly_pue

    def score_annual(self, X):
        return self.simulate(X).annual_pue


def save_config(config, path):
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "EconomizerMode", "CoolingSystemConfig", "PowerChainConfig", "DataCenterConfig",
    "HourlyPowerBreakdown", "PueResult", "PueSimulator", "LOSSLESS_CHAIN",
    "economizer_fraction", "chiller_cop", "simulate_hour", "annual_pue",
    "annual_pue_value", "load_config", "save_config", "reference_config",
]
