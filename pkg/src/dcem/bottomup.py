"""Bottom-up aggregation, scenario projection and one-at-a-time sensitivity.

Facility energy for one year is

    E_dc = sum over regions r and space types j of
           (server_rj + storage_rj + network_rj) * PUE_rj

i.e. the IT energy of every class is summed per (region, space type) and
scaled by that space type's PUE in that region.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (HorizonGap, InvalidShares, MissingFile, MissingPue, MissingYear,
                     PerturbedModelFailure, ValidationError)
from .ledger import CATEGORIES, REGIONS, SPACE_TYPES, CellKey, EnergyLedger
from .uncertainty import Distribution, McSummary, monte_carlo_draws, summarize

SHARE_TOL = 1e-9


def _as_dist(value):
    if isinstance(value, Distribution):
        return value
    return Distribution.from_json(value)


class PueBySpaceType:
    """PUE per (region, space type); values are floats or Distributions.

    JSON form: ``{region: {space_type: value}}`` where ``region`` may be
    ``"*"`` for every declared region and ``value`` is a number or a
    distribution object such as ``{"triangular": [1.1, 1.2, 1.4]}``.
    """

    def __init__(self, entries=None, regions=REGIONS):
        self.regions = tuple(regions)
        self.entries = {}
        for (region, st), value in (entries or {}).items():
            self.set(region, st, value)

    def set(self, region, space_type, value):
        if space_type not in SPACE_TYPES:
            raise ValidationError(f"unknown space_type {space_type!r}")
        if region not in self.regions:
            raise ValidationError(f"unknown region {region!r}")
        if isinstance(value, (dict, Distribution)):
            value = _as_dist(value)
            if value.support()[0] < 1.0:
                raise ValidationError(
                    f"PUE distribution for ({region}, {space_type}) extends below 1")
        else:
            value = float(value)
            if not value >= 1.0:
                raise ValidationError(f"PUE for ({region}, {space_type}) must be >= 1")
        self.entries[(region, space_type)] = value

    def __contains__(self, key):
        return key in self.entries

    def value(self, region, space_type):
        """Point PUE; distributions resolve to their mean (the total is linear in PUE)."""
        try:
            v = self.entries[(region, space_type)]
        except KeyError:
            raise MissingPue(region, space_type) from None
        return v.mean() if isinstance(v, Distribution) else v

    def distributions(self):
        return {k: v for k, v in sorted(self.entries.items()) if isinstance(v, Distribution)}

    def resolved(self, overrides=None):
        """Point-valued copy, taking ``overrides[(region, st)]`` where given."""
        overrides = overrides or {}
        return PueBySpaceType({k: overrides.get(k, self.value(*k)) for k in self.entries},
                              self.regions)

    @classmethod
    def uniform(cls, by_space_type, regions=REGIONS):
        return cls({(r, st): v for r in regions for st, v in by_space_type.items()}, regions)

    @classmethod
    def from_dict(cls, data, regions=REGIONS):
        out = cls(regions=regions)
        for region, inner in data.items():
            targets = regions if region == "*" else (region,)
            for st, value in inner.items():
                for r in targets:
                    out.set(r, st, value)
        return out

    @classmethod
    def from_json_file(cls, path, regions=REGIONS):
        if not os.path.isfile(path):
            raise MissingFile(f"PUE file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), regions)

    def to_dict(self):
        out = {}
        for (r, st), v in sorted(self.entries.items()):
            out.setdefault(r, {})[st] = v.to_json() if isinstance(v, Distribution) else v
        return out


@dataclass
class Eq1Result:
    year: int
    total: float
    breakdown: dict
    it_energy: dict
    end_use: dict

    def shares_by_region(self):
        by_region = {}
        for (r, _), v in self.breakdown.items():
            by_region[r] = by_region.get(r, 0.0) + v
        return {r: v / self.total for r, v in sorted(by_region.items())}

    def by_space_type(self):
        out = {st: 0.0 for st in SPACE_TYPES}
        for (_, st), v in self.breakdown.items():
            out[st] += v
        return out

    def to_dict(self):
        return {
            "year": self.year, "total_kwh": self.total,
            "breakdown": [{"region": r, "space_type": st, "kwh": v}
                          for (r, st), v in self.breakdown.items()],
            "end_use_kwh": dict(self.end_use),
        }


def aggregate_eq1(ledger, pue, year):
    """Total facility electricity for ``year`` with a per-(region, space type) breakdown.

    The breakdown is summed in sorted key order with plain float addition, and
    ``total`` is that same sum, so the two agree exactly.
    """
    if year not in ledger.years:
        raise MissingYear(year)
    it = {}
    by_cat = {c: 0.0 for c in CATEGORIES}
    for key, kwh in ledger.items():
        if key.year != year:
            continue
        rj = (key.region, key.space_type)
        it.setdefault(rj, {c: 0.0 for c in CATEGORIES})[key.category] += kwh
    breakdown = {}
    infra = 0.0
    for rj in sorted(it):
        if rj not in pue:
            raise MissingPue(*rj)
        p = pue.value(*rj)
        cats = it[rj]
        it_sum = cats["server"] + cats["storage"] + cats["network"]
        breakdown[rj] = it_sum * p
        infra += it_sum * (p - 1.0)
        for c in CATEGORIES:
            by_cat[c] += cats[c]
    total = sum(breakdown.values())
    end_use = {**by_cat, "infrastructure": infra}
    return Eq1Result(year, total, breakdown,
                     {rj: sum(c.values()) for rj, c in sorted(it.items())}, end_use)


# --------------------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    """Per-year driver trajectories applied multiplicatively to a base-year ledger.

    ``activity``, ``efficiency[category]`` and ``pue_overhead[space_type]`` hold
    year-over-year multipliers for every year after ``base_year`` (values may be
    Distributions). ``efficiency`` key ``"*"`` applies to all categories.
    ``pue_overhead`` scales ``PUE - 1``, so projected PUE never drops below 1.
    ``space_type_shares`` holds, per year, each space type's share of IT energy;
    cells are rescaled by ``share_y / share_base``.
    """

    name: str
    base_year: int
    end_year: int
    activity: dict = field(default_factory=dict)
    efficiency: dict = field(default_factory=dict)
    pue_overhead: dict = field(default_factory=dict)
    space_type_shares: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.end_year < self.base_year:
            raise HorizonGap("end_year precedes base_year")
        steps = self.step_years

        def check_years(traj, label):
            traj = {int(y): v for y, v in traj.items()}
            missing = [y for y in steps if y not in traj]
            if missing:
                raise HorizonGap(f"{label} trajectory missing years {missing}")
            extra = [y for y in traj if y not in steps]
            if extra:
                raise HorizonGap(f"{label} trajectory has years outside the horizon: {extra}")
            out = {}
            for y, v in sorted(traj.items()):
                v = _as_dist(v) if isinstance(v, dict) else v
                lo = v.support()[0] if isinstance(v, Distribution) else float(v)
                if not lo > 0:
                    raise ValidationError(f"{label} multiplier for {y} must be > 0")
                out[y] = v
            return out

        if self.activity:
            self.activity = check_years(self.activity, "activity")
        eff = {}
        for cat, traj in self.efficiency.items():
            if cat != "*" and cat not in CATEGORIES:
                raise ValidationError(f"unknown efficiency category {cat!r}")
            eff[cat] = check_years(traj, f"efficiency[{cat}]")
        self.efficiency = eff
        pue = {}
        for st, traj in self.pue_overhead.items():
            if st not in SPACE_TYPES:
                raise ValidationError(f"unknown space type {st!r}")
            pue[st] = check_years(traj, f"pue_overhead[{st}]")
        self.pue_overhead = pue
        if self.space_type_shares:
            shares = {int(y): v for y, v in self.space_type_shares.items()}
            missing = [y for y in steps if y not in shares]
            if missing:
                raise HorizonGap(f"space_type_shares missing years {missing}")
            clean = {}
            for y in steps:
                s = shares[y]
                if set(s) != set(SPACE_TYPES):
                    raise InvalidShares(f"shares for {y} must name {SPACE_TYPES}")
                if any(isinstance(v, (dict, Distribution)) for v in s.values()):
                    raise InvalidShares("space-type shares must be point values")
                s = {st: float(s[st]) for st in SPACE_TYPES}
                if any(v < 0 for v in s.values()) or abs(math.fsum(s.values()) - 1) > SHARE_TOL:
                    raise InvalidShares(f"shares for {y} must be >= 0 and sum to 1")
                clean[y] = s
            self.space_type_shares = clean

    @property
    def years(self):
        return list(range(self.base_year, self.end_year + 1))

    @property
    def step_years(self):
        return list(range(self.base_year + 1, self.end_year + 1))

    def uncertain_parameters(self):
        """Name -> Distribution for every uncertain trajectory value."""
        out = {}
        for y, v in self.activity.items():
            out[f"activity/{y}"] = v
        for cat, traj in self.efficiency.items():
            for y, v in traj.items():
                out[f"efficiency/{cat}/{y}"] = v
        for st, traj in self.pue_overhead.items():
            for y, v in traj.items():
                out[f"pue_overhead/{st}/{y}"] = v
        return {k: v for k, v in sorted(out.items()) if isinstance(v, Distribution)}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(name=data.get("name", "scenario"), base_year=int(data["base_year"]),
                       end_year=int(data["end_year"]), activity=data.get("activity", {}),
                       efficiency=data.get("efficiency", {}),
                       pue_overhead=data.get("pue_overhead", {}),
                       space_type_shares=data.get("space_type_shares", {}))
        except KeyError as exc:
            raise ValidationError(f"scenario missing key {exc}") from None

    @classmethod
    def from_json_file(cls, path):
        if not os.path.isfile(path):
            raise MissingFile(f"scenario file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        def enc(traj):
            return {str(y): (v.to_json() if isinstance(v, Distribution) else v)
                    for y, v in sorted(traj.items())}
        return {
            "name": self.name, "base_year": self.base_year, "end_year": self.end_year,
            "activity": enc(self.activity),
            "efficiency": {c: enc(t) for c, t in sorted(self.efficiency.items())},
            "pue_overhead": {s: enc(t) for s, t in sorted(self.pue_overhead.items())},
            "space_type_shares": {str(y): s for y, s in sorted(self.space_type_shares.items())},
        }


def _point(v):
    return v.mean() if isinstance(v, Distribution) else float(v)


def _project_cells(ledger, pue, scenario, draws=None):
    """Project every year; returns {year: (ledger, point PUE table)}.

    ``draws`` maps uncertain-parameter names to sampled values; anything not
    in it resolves to its point value (distribution mean).
    """
    draws = draws or {}
    base = ledger.slice(scenario.base_year)
    pue_base = pue.resolved({k: draws[f"pue_base/{k[0]}/{k[1]}"]
                             for k in pue.entries if f"pue_base/{k[0]}/{k[1]}" in draws})

    def val(name, v):
        return draws.get(name, _point(v))

    base_share = {st: 0.0 for st in SPACE_TYPES}
    for key, kwh in base.items():
        base_share[key.space_type] += kwh
    base_total = sum(base_share.values())
    out = {scenario.base_year: (base, pue_base)}
    act = 1.0
    eff = {c: 1.0 for c in CATEGORIES}
    over = {st: 1.0 for st in SPACE_TYPES}
    for y in scenario.step_years:
        if scenario.activity:
            act *= val(f"activity/{y}", scenario.activity[y])
        for cat, traj in scenario.efficiency.items():
            m = val(f"efficiency/{cat}/{y}", traj[y])
            for c in (CATEGORIES if cat == "*" else (cat,)):
                eff[c] *= m
        for st, traj in scenario.pue_overhead.items():
            over[st] *= val(f"pue_overhead/{st}/{y}", traj[y])
        ratio = {st: 1.0 for st in SPACE_TYPES}
        if scenario.space_type_shares:
            for st in SPACE_TYPES:
                s0 = base_share[st] / base_total if base_total > 0 else 0.0
                sy = scenario.space_type_shares[y][st]
                if s0 == 0.0:
                    if sy > 0:
                        raise InvalidShares(
                            f"cannot migrate load into {st}: no base-year energy")
                    ratio[st] = 0.0
                else:
                    ratio[st] = sy / s0
        proj = base.map_values(lambda k, v: v * act * eff[k.category] * ratio[k.space_type])
        proj = EnergyLedger({CellKey(y, *k[1:]): v for k, v in proj.items()},
                            {CellKey(y, *k[1:]): base.quantity(k) for k in base
                             if base.quantity(k) is not None},
                            ledger.regions)
        table = PueBySpaceType({k: 1.0 + (p - 1.0) * over[k[1]]
                                for k, p in pue_base.entries.items()}, pue.regions)
        out[y] = (proj, table)
    return out


class ProjectionPoint(NamedTuple):
    year: int
    region: str
    space_type: str


@dataclass
class ProjectionResult:
    scenario: str
    years: list
    totals: dict        # year -> float or McSummary
    cells: dict         # ProjectionPoint -> float or McSummary
    ledgers: dict = field(default_factory=dict, repr=False)

    @property
    def is_mc(self):
        return any(isinstance(v, McSummary) for v in self.totals.values())

    def total_mean(self, year):
        v = self.totals[year]
        return v.mean if isinstance(v, McSummary) else v

    def to_dict(self):
        def enc(v):
            return v.to_dict() if isinstance(v, McSummary) else v
        return {"scenario": self.scenario, "years": self.years,
                "totals_kwh": {str(y): enc(v) for y, v in sorted(self.totals.items())},
                "cells_kwh": [{"year": k.year, "region": k.region, "space_type": k.space_type,
                               "kwh": enc(v)} for k, v in sorted(self.cells.items())]}


def project_scenario(ledger, pue, scenario, mc=None, workers=1):
    """Project base-year energy over the scenario horizon.

    Parameters
    ----------
    ledger : EnergyLedger
        Must contain ``scenario.base_year``.
    pue : PueBySpaceType
        Base-year PUE per (region, space type).
    scenario : Scenario
    mc : tuple (n, seed), optional
        When given, every Distribution in the scenario and the PUE table is
        sampled and totals become :class:`McSummary` objects.
    """
    if scenario.base_year not in ledger.years:
        raise HorizonGap(f"ledger has no base year {scenario.base_year}")
    if mc is None:
        projected = _project_cells(ledger, pue, scenario)
        totals, cells, ledgers = {}, {}, {}
        for y, (led, table) in sorted(projected.items()):
            res = aggregate_eq1(led, table, y)
            totals[y] = res.total
            for (r, st), v in res.breakdown.items():
                cells[ProjectionPoint(y, r, st)] = v
            ledgers[y] = led
        return ProjectionResult(scenario.name, scenario.years, totals, cells, ledgers)

    n, seed = mc
    params = dict(scenario.uncertain_parameters())
    for (r, st), d in pue.distributions().items():
        params[f"pue_base/{r}/{st}"] = d
    point = _project_cells(ledger, pue, scenario)
    layout = []
    for y, (led, table) in sorted(point.items()):
        res = aggregate_eq1(led, table, y)
        layout.extend(ProjectionPoint(y, r, st) for (r, st) in res.breakdown)

    def model(theta):
        out = []
        for y, (led, table) in sorted(_project_cells(ledger, pue, scenario, theta).items()):
            out.extend(aggregate_eq1(led, table, y).breakdown.values())
        return np.asarray(out)

    draws = monte_carlo_draws(model, params, n, seed, workers)
    cells = {p: summarize(draws[:, i], seed) for i, p in enumerate(layout)}
    totals = {}
    for y in scenario.years:
        cols = [i for i, p in enumerate(layout) if p.year == y]
        totals[y] = summarize(draws[:, cols].sum(axis=1), seed)
    return ProjectionResult(scenario.name, scenario.years, totals, cells)


# ------------------------------------------------------------------------- sensitivity

class Elasticity(NamedTuple):
    name: str
    elasticity: float
    baseline: float


def sensitivity_oat(model, params, perturbation=0.1):
    """One-at-a-time central-difference elasticities, largest magnitude first.

    ``model`` maps a name -> value dict to total energy. Each parameter is
    moved to ``p * (1 +/- perturbation)`` with the others at baseline.
    """
    if not perturbation > 0:
        raise ValidationError("perturbation must be > 0")
    base = dict(params)
    e0 = model(base)
    if e0 == 0:
        raise ValidationError("baseline model output is zero; elasticity undefined")
    out = []
    for name in sorted(base):
        p = base[name]
        if p == 0:
            raise ValidationError(f"baseline of {name!r} is zero; elasticity undefined")
        try:
            up = model({**base, name: p * (1 + perturbation)})
            down = model({**base, name: p * (1 - perturbation)})
        except Exception as exc:
            raise PerturbedModelFailure(name, exc) from exc
        out.append(Elasticity(name, ((up - down) / e0) / (2 * perturbation), e0))
    out.sort(key=lambda e: (-abs(e.elasticity), e.name))
    return out


def eq1_sensitivity_model(ledger, pue, year):
    """Model and baseline for sensitivity of total energy in ``year``.

    Parameters are ``pue_scale/<space_type>`` (multiplies PUE of that space
    type in every region) and ``energy_scale/<category>`` (multiplies IT
    energy of that category), all with baseline 1.
    """
    led = ledger.slice(year)

    def model(theta):
        scaled = led.map_values(lambda k, v: v * theta[f"energy_scale/{k.category}"])
        table = PueBySpaceType({k: pue.value(*k) * theta[f"pue_scale/{k[1]}"]
                                for k in pue.entries}, pue.regions)
        return aggregate_eq1(scaled, table, year).total

    baseline = {f"pue_scale/{st}": 1.0 for st in SPACE_TYPES}
    baseline.update({f"energy_scale/{c}": 1.0 for c in CATEGORIES})
    return model, baseline


NUMERIC_CONFIG_PARAMS = ("chiller_cop_rated", "chiller_cop_slope", "supply_air_setpoint",
                         "airside_high_limit", "airside_low_limit", "tower_approach",
                         "hx_approach", "fan_power_fraction", "pump_power_fraction",
                         "pdu_loss_fraction", "lighting_misc")


def pue_sensitivity_model(config, weather):
    """Model and baseline for sensitivity of annual PUE to numeric config fields."""
    from .pue import annual_pue_value
    from .validation import weather_arrays

    dry_bulb, wet_bulb = weather_arrays(weather)

    def model(theta):
        return annual_pue_value(config.with_params(**theta), dry_bulb, wet_bulb)

    baseline = {}
    for name in NUMERIC_CONFIG_PARAMS:
        obj = config.power_chain if hasattr(config.power_chain, name) else config.cooling
        v = float(getattr(obj, name))
        if v != 0:
            baseline[name] = v
    return model, baseline
