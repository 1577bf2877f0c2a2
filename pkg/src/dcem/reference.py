"""Bundled reference fixtures and the synthetic PUE validation harness.

The reference fleet is built backwards from published facility-energy
totals: each space type's energy is split into IT energy (dividing by its
PUE), then into regions and device categories by fixed shares, and finally
into whole-unit device quantities for concrete equipment classes. Running the
quantities forward through :func:`fleet_annual_energy` and the bottom-up sum recovers
the totals to within the quantity rounding.

Target facility energy (TWh/year):

================== ====== ======
space type          2010   2018
================== ====== ======
traditional         150.5  66.22
cloud_nonhyperscale  31.5  85.05
hyperscale           12.0  54.0
================== ====== ======
"""

import json
import math
import os
from importlib import resources

import numpy as np

from .bottomup import PueBySpaceType, Scenario, aggregate_eq1
from .ida import six_factor_dataset
from .itpower import (ClassRegistry, InstalledBase, NetworkClass, ServerClass,
                      StorageClass, fleet_annual_energy, load_class_registry,
                      write_class_registry)
from .ledger import REGIONS, SPACE_TYPES, EnergyLedger
from .optimize import Frontier
from .psychro import WeatherSeries, write_weather_csv
from .pue import DataCenterConfig, annual_pue_value, save_config
from .uncertainty import Distribution, relative_error, run_monte_carlo

BASE_YEAR, LATEST_YEAR = 2010, 2018
TWH = 1e9  # kWh

FACILITY_TWH = {
    2010: {"traditional": 150.5, "cloud_nonhyperscale": 31.5, "hyperscale": 12.0},
    2018: {"traditional": 66.22, "cloud_nonhyperscale": 85.05, "hyperscale": 54.0},
}
PUE_BY_YEAR = {
    2010: {"traditional": 2.0, "cloud_nonhyperscale": 1.7, "hyperscale": 1.25},
    2018: {"traditional": 1.85, "cloud_nonhyperscale": 1.55, "hyperscale": 1.17},
}
CATEGORY_SHARE = {
    2010: {"server": 0.80, "storage": 0.12, "network": 0.08},
    2018: {"server": 0.72, "storage": 0.20, "network": 0.08},
}
# Same in both years. Western Europe is 20% and North America + Asia Pacific
# 75% of every space type, so those regional shares hold for any mix.
REGION_SHARE = {
    "traditional": {"north_america": 0.40, "asia_pacific": 0.35},
    "cloud_nonhyperscale": {"north_america": 0.38, "asia_pacific": 0.37},
    "hyperscale": {"north_america": 0.45, "asia_pacific": 0.30},
}
_OTHER_REGIONS = {"western_europe": 0.20, "central_eastern_europe": 0.02,
                  "latin_america": 0.02, "middle_east_africa": 0.01}
for _shares in REGION_SHARE.values():
    _shares.update(_OTHER_REGIONS)

# class mix per (year, space type, category): class_id -> share of category energy
CLASS_MIX = {
    2010: {
        "server": {"traditional": {"srv_legacy_2s": 1.0},
                   "cloud_nonhyperscale": {"srv_volume_2s": 1.0},
                   "hyperscale": {"srv_hyper_2010": 1.0}},
        "storage": {st: {"hdd_2010": 1.0} for st in SPACE_TYPES},
        "network": {st: {"port_1g": 1.0} for st in SPACE_TYPES},
    },
    2018: {
        "server": {"traditional": {"srv_legacy_2s": 0.4, "srv_volume_2s": 0.6},
                   "cloud_nonhyperscale": {"srv_volume_2s": 0.5, "srv_cloud_2018": 0.5},
                   "hyperscale": {"srv_hyper_2018": 1.0}},
        "storage": {"traditional": {"hdd_2018": 0.9, "ssd_2018": 0.1},
                    "cloud_nonhyperscale": {"hdd_2018": 0.85, "ssd_2018": 0.15},
                    "hyperscale": {"hdd_2018": 0.8, "ssd_2018": 0.2}},
        "network": {st: {"port_10g": 1.0} for st in SPACE_TYPES},
    },
}


def _curve(p_idle, p_max, exponent):
    u = np.linspace(0.0, 1.0, 11)
    return tuple(float(v) for v in p_idle + (p_max - p_idle) * u**exponent)


def reference_classes():
    util = {"traditional": 0.12, "cloud_nonhyperscale": 0.30, "hyperscale": 0.45}
    servers = [
        ServerClass("srv_legacy_2s", 8, 180.0, 330.0, dict(util)),
        ServerClass("srv_volume_2s", 16, 110.0, 300.0, dict(util),
                    _curve(110.0, 300.0, 0.9)),
        ServerClass("srv_cloud_2018", 32, 70.0, 320.0, dict(util), _curve(70.0, 320.0, 0.8)),
        ServerClass("srv_hyper_2010", 12, 120.0, 280.0, dict(util)),
        ServerClass("srv_hyper_2018", 48, 60.0, 340.0, {**util, "hyperscale": 0.50},
                    _curve(60.0, 340.0, 0.85), thermal_multiplier=0.97),
    ]
    storage = [StorageClass("hdd_2010", "HDD", 11.0), StorageClass("hdd_2018", "HDD", 6.5),
               StorageClass("ssd_2018", "SSD", 4.0)]
    network = [NetworkClass("port_1g", 5.0), NetworkClass("port_10g", 3.5)]
    return ClassRegistry({s.class_id: s for s in servers},
                         {s.class_id: s for s in storage},
                         {n.class_id: n for n in network})


def it_energy_targets(year):
    """Target IT kWh per (region, space type, category)."""
    out = {}
    for st, twh in FACILITY_TWH[year].items():
        it = twh * TWH / PUE_BY_YEAR[year][st]
        for r in REGIONS:
            for cat, c in CATEGORY_SHARE[year].items():
                out[(r, st, cat)] = it * REGION_SHARE[st][r] * c
    return out


def reference_installed_base(classes=None):
    """Whole-unit quantities reproducing the IT energy targets of both years."""
    classes = classes or reference_classes()
    base = InstalledBase()
    for year in (BASE_YEAR, LATEST_YEAR):
        for (r, st, cat), kwh in sorted(it_energy_targets(year).items()):
            for cid, frac in sorted(CLASS_MIX[year][cat][st].items()):
                watts = classes.unit_power(cat, cid, st)
                qty = round(kwh * frac * 1000.0 / (watts * 8760.0))
                base.add(year, r, st, cat, cid, qty)
    return base


def reference_pue(year):
    return PueBySpaceType.uniform(PUE_BY_YEAR[year])


def reference_ledger(classes=None, base=None):
    classes = classes or reference_classes()
    base = base or reference_installed_base(classes)
    ledger = EnergyLedger()
    for year in base.years:
        ledger = ledger.merged(fleet_annual_energy(base, classes, year))
    return ledger


def historical_scenario():
    """2010 -> 2018 trajectories that carry the 2010 ledger onto the 2018 targets.

    Activity and category efficiency grow geometrically, space-type shares of
    IT energy move linearly and each space type's PUE overhead shrinks
    geometrically.
    """
    n = LATEST_YEAR - BASE_YEAR
    it = {y: {st: FACILITY_TWH[y][st] / PUE_BY_YEAR[y][st] for st in SPACE_TYPES}
          for y in (BASE_YEAR, LATEST_YEAR)}
    tot = {y: math.fsum(v.values()) for y, v in it.items()}
    share = {y: {st: v / tot[y] for st, v in it[y].items()} for y in it}
    steps = range(BASE_YEAR + 1, LATEST_YEAR + 1)
    activity = {y: (tot[LATEST_YEAR] / tot[BASE_YEAR]) ** (1 / n) for y in steps}
    efficiency = {cat: {y: (CATEGORY_SHARE[LATEST_YEAR][cat] / CATEGORY_SHARE[BASE_YEAR][cat])
                        ** (1 / n) for y in steps} for cat in CATEGORY_SHARE[BASE_YEAR]}
    overhead = {st: {y: ((PUE_BY_YEAR[LATEST_YEAR][st] - 1) / (PUE_BY_YEAR[BASE_YEAR][st] - 1))
                     ** (1 / n) for y in steps} for st in SPACE_TYPES}
    shares = {}
    for k, y in enumerate(steps, start=1):
        t = k / n
        s = {st: (1 - t) * share[BASE_YEAR][st] + t * share[LATEST_YEAR][st]
             for st in SPACE_TYPES[:-1]}
        s[SPACE_TYPES[-1]] = 1.0 - math.fsum(s.values())
        shares[y] = s
    return Scenario("historical_2010_2018", BASE_YEAR, LATEST_YEAR, activity, efficiency,
                    overhead, shares)


def outlook_scenario():
    """A short uncertain outlook from 2018, used to demonstrate Monte Carlo projection."""
    years = range(LATEST_YEAR + 1, LATEST_YEAR + 4)
    return Scenario(
        "outlook_2018_2021", LATEST_YEAR, LATEST_YEAR + 3,
        activity={y: Distribution.triangular(1.02, 1.06, 1.12) for y in years},
        efficiency={"*": {y: Distribution.uniform(0.93, 0.99) for y in years}},
        pue_overhead={st: {y: Distribution.triangular(0.9, 0.97, 1.0) for y in years}
                      for st in SPACE_TYPES})


def reference_ida_dataset(classes=None, base=None):
    """Six-factor 2010/2018 dataset with device categories as the class level.

    Activity is a workload proxy: servers times their average utilization.
    """
    classes = classes or reference_classes()
    base = base or reference_installed_base(classes)
    ledger = reference_ledger(classes, base)
    activity, devices, it_energy = {}, {}, {}
    for e in base.entries:
        if e.category == "server":
            u = classes.servers[e.class_id].avg_utilization[e.space_type]
            k = (e.year, e.region, e.space_type)
            activity[k] = activity.get(k, 0.0) + e.quantity * u
        k = (e.year, e.region, e.space_type, e.category)
        devices[k] = devices.get(k, 0.0) + e.quantity
    for key, kwh in ledger.items():
        k = (key.year, key.region, key.space_type, key.category)
        it_energy[k] = it_energy.get(k, 0.0) + kwh
    pue = {(y, r, st): PUE_BY_YEAR[y][st] for y in (BASE_YEAR, LATEST_YEAR)
           for r in REGIONS for st in SPACE_TYPES}
    return six_factor_dataset((BASE_YEAR, LATEST_YEAR), activity, devices, it_energy, pue)


# ----------------------------------------------------------------------------- weather

def synthetic_weather(location_id="synthetic", mean_c=15.0, annual_amp=10.0, diurnal_amp=5.0,
                      rh_mean=0.6, rh_amp=0.2, noise_c=2.0, seed=0, n_hours=8760):
    """Smooth seasonal + diurnal weather with AR(1) noise, for tests and demos.

    Relative humidity falls as the day warms. Values are clipped to the
    accepted record ranges.
    """
    rng = np.random.default_rng(seed)
    h = np.arange(n_hours)
    season = -np.cos(2 * np.pi * (h - 24 * 20) / n_hours)    # coldest around day 20
    day = -np.cos(2 * np.pi * ((h % 24) - 3) / 24)            # coldest around 03:00
    noise = np.empty(n_hours)
    eps = rng.normal(0.0, noise_c * math.sqrt(1 - 0.95**2), n_hours)
    noise[0] = rng.normal(0.0, noise_c)
    for i in range(1, n_hours):
        noise[i] = 0.95 * noise[i - 1] + eps[i]
    dry_bulb = np.clip(mean_c + annual_amp * season + diurnal_amp * day + noise, -59.0, 59.0)
    rh = np.clip(rh_mean - rh_amp * day + rng.normal(0.0, 0.05, n_hours), 0.02, 1.0)
    return WeatherSeries(location_id, np.round(dry_bulb, 3), np.round(rh, 4))


CLIMATES = {
    "temperate": dict(mean_c=11.0, annual_amp=8.0, diurnal_amp=4.0, rh_mean=0.75),
    "hot_humid": dict(mean_c=27.0, annual_amp=3.0, diurnal_amp=4.0, rh_mean=0.78),
    "hot_dry": dict(mean_c=23.0, annual_amp=10.0, diurnal_amp=8.0, rh_mean=0.3),
    "cold": dict(mean_c=2.0, annual_amp=14.0, diurnal_amp=5.0, rh_mean=0.7),
    "continental": dict(mean_c=10.0, annual_amp=15.0, diurnal_amp=6.0, rh_mean=0.6),
}


# ---------------------------------------------------------------- validation harness

HARNESS_PARAMS = ("chiller_cop_rated", "chiller_cop_slope", "fan_power_fraction",
                  "pump_power_fraction", "pdu_loss_fraction", "lighting_misc")


def synthetic_facilities(n=17, seed=2018):
    """``n`` facilities with randomly drawn true configs and climates."""
    rng = np.random.default_rng(seed)
    climates = sorted(CLIMATES)
    out = []
    for i in range(n):
        climate = climates[i % len(climates)]
        mode = ("airside", "waterside", "none")[int(rng.integers(3))]
        config = DataCenterConfig(
            it_design_load=float(rng.uniform(2000, 40000)),
            it_load_profile=float(rng.uniform(0.5, 0.9)),
        ).with_params(
            economizer_mode=mode,
            chiller_cop_rated=float(rng.uniform(5.0, 8.0)),
            chiller_cop_slope=float(rng.uniform(0.05, 0.15)),
            supply_air_setpoint=float(rng.uniform(18.0, 27.0)),
            fan_power_fraction=float(rng.uniform(0.03, 0.08)),
            pump_power_fraction=float(rng.uniform(0.01, 0.04)),
            pdu_loss_fraction=float(rng.uniform(0.01, 0.03)),
            lighting_misc=float(rng.uniform(0.005, 0.02)),
        )
        weather = synthetic_weather(f"site_{i:02d}", seed=seed + i, **CLIMATES[climate])
        out.append((f"site_{i:02d}", config, weather))
    return out


def centered_priors(config, spread=0.1):
    """Triangular priors spanning +/- ``spread`` around each true harness parameter."""
    out = {}
    for name in HARNESS_PARAMS:
        obj = config.cooling if hasattr(config.cooling, name) else config.power_chain
        v = float(getattr(obj, name))
        out[name] = Distribution.triangular(v * (1 - spread), v, v * (1 + spread))
    return out


def pue_mc_model(config, weather):
    """Annual-PUE model over a parameter dict, for Monte Carlo."""
    from .validation import weather_arrays

    dry_bulb, wet_bulb = weather_arrays(weather)

    def model(theta):
        return annual_pue_value(config.with_params(**theta), dry_bulb, wet_bulb)
    return model


def run_validation_harness(n_draws=1000, seed=0, n_facilities=17, workers=1,
                           tolerance=0.04):
    """Predict each synthetic facility's reported PUE by Monte Carlo.

    "Reported" values come from the true configuration; predictions are MC
    means under priors centred on the truth. Returns a JSON-ready dict.
    """
    rows = []
    for i, (site, config, weather) in enumerate(synthetic_facilities(n_facilities)):
        model = pue_mc_model(config, weather)
        reported = model({})
        mc = run_monte_carlo(model, centered_priors(config), n_draws, seed + i, workers)
        rows.append({"facility": site, "economizer_mode": config.cooling.economizer_mode.value,
                     "reported_pue": reported, "predicted_pue": mc.mean,
                     "p2_5": mc.band[0], "p97_5": mc.band[1],
                     "relative_error": relative_error(mc.mean, reported)})
    worst = max(abs(r["relative_error"]) for r in rows)
    return {"synthetic": True, "n_facilities": n_facilities, "n_draws": n_draws,
            "seed": seed, "tolerance": tolerance, "max_abs_relative_error": worst,
            "passed": worst <= tolerance, "facilities": rows}


# ------------------------------------------------------------------------ data files

DATA_PACKAGE = "dcem.data.reference"
FILES = {
    "installed_base": "installed_base.csv",
    "servers": "server_classes.csv",
    "storage": "storage_classes.csv",
    "network": "network_classes.csv",
    "ledger": "ledger.csv",
    "pue_2010": "pue_2010.json",
    "pue_2018": "pue_2018.json",
    "historical": "historical_2010_2018.json",
    "outlook": "outlook_2018_2021.json",
    "ida": "ida_2010_2018.csv",
    "weather": "reference_weather.csv",
    "config": "dc_config.json",
    "frontier": "frontier.json",
}


def data_path(key):
    """Filesystem path of a bundled reference file."""
    return str(resources.files("dcem").joinpath("data", "reference", FILES[key]))


def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_reference_data(directory):
    """(Re)generate every bundled fixture file into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    p = {k: os.path.join(directory, f) for k, f in FILES.items()}
    classes = reference_classes()
    base = reference_installed_base(classes)
    base.to_csv(p["installed_base"])
    write_class_registry(classes, p["servers"], p["storage"], p["network"])
    reference_ledger(classes, base).to_csv(p["ledger"])
    for y in (BASE_YEAR, LATEST_YEAR):
        _dump({"*": PUE_BY_YEAR[y]}, p[f"pue_{y}"])
    _dump(historical_scenario().to_dict(), p["historical"])
    _dump(outlook_scenario().to_dict(), p["outlook"])
    reference_ida_dataset(classes, base).to_csv(p["ida"])
    write_weather_csv(synthetic_weather("reference_temperate", seed=7, **CLIMATES["temperate"]),
                      p["weather"])
    save_config(DataCenterConfig(), p["config"])
    frontier = Frontier(economizer_modes=("none", "airside", "waterside"),
                        grid={"supply_air_setpoint": (18.0, 20.0, 22.0, 24.0, 27.0),
                              "tower_approach": (2.0, 3.0, 4.0, 5.0)})
    _dump({k: v for k, v in frontier.to_dict().items() if k != "base"}, p["frontier"])
    return p


def load_reference():
    """Load the bundled fixtures: (registry, installed base, ledger, {year: PUE table})."""
    classes = load_class_registry(data_path("servers"), data_path("storage"),
                                  data_path("network"))
    base = InstalledBase.from_csv(data_path("installed_base"))
    ledger = EnergyLedger.from_csv(data_path("ledger"))
    pue = {y: PueBySpaceType.from_json_file(data_path(f"pue_{y}"))
           for y in (BASE_YEAR, LATEST_YEAR)}
    return classes, base, ledger, pue


def reference_totals():
    """Bottom-up facility totals in TWh for the bundled years."""
    _, _, ledger, pue = load_reference()
    return {y: aggregate_eq1(ledger, pue[y], y).total / TWH for y in pue}
