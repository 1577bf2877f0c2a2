"""Hourly weather ingestion and the psychrometric quantities the PUE engine needs.

Saturation pressure follows the Hyland-Wexler correlation over liquid water
(ASHRAE Fundamentals), used at every temperature so the wet-bulb relation is
continuous across 0 °C. Wet-bulb and dew point are found by bisection on a
fixed bracket ``[-100 °C, dry_bulb]``; a fixed bracket keeps the result
monotone in relative humidity even at the solver tolerance.
"""

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import (MalformedRow, MissingFile, NonConvergence, OutOfRange,
                     WrongLength)

STANDARD_PRESSURE_KPA = 101.325
VALID_LENGTHS = (8760, 8784)
WEATHER_HEADER = ("hour", "dry_bulb_c", "rh", "pressure_kpa")

BISECTION_TOL = 0.01
BISECTION_MAX_ITER = 100
BRACKET_FLOOR = -100.0

_EPS = 0.621945  # molar mass ratio water vapour / dry air

# Hyland-Wexler coefficients, saturation over liquid water, T in K, p in Pa
_C8 = -5.8002206e3
_C9 = 1.3914993
_C10 = -4.8640239e-2
_C11 = 4.1764768e-5
_C12 = -1.4452093e-8
_C13 = 6.5459673


def saturation_pressure(t_c):
    """Saturation vapour pressure in kPa at ``t_c`` °C (scalar or array)."""
    t = np.asarray(t_c, dtype=np.float64) + 273.15
    ln_p = _C8 / t + _C9 + _C10 * t + _C11 * t**2 + _C12 * t**3 + _C13 * np.log(t)
    return np.exp(ln_p) / 1000.0


def humidity_ratio(p_vapour, pressure):
    return _EPS * p_vapour / (pressure - p_vapour)


def _wet_bulb_residual(twb, t, w, pressure):
    ws = humidity_ratio(saturation_pressure(twb), pressure)
    w_calc = ((2501.0 - 2.326 * twb) * ws - 1.006 * (t - twb)) / (
        2501.0 + 1.86 * t - 4.186 * twb)
    return w_calc - w


def _bisect(residual, hi, clamp_low=False):
    """Vectorised bisection of an increasing ``residual`` on [BRACKET_FLOOR, hi]."""
    lo = np.full_like(hi, BRACKET_FLOOR)
    hi = hi.copy()
    below = residual(lo) > 0
    if below.any() and not clamp_low:
        raise NonConvergence("root lies below the bracket floor")
    # at saturation the residual at the dry-bulb end is zero up to rounding
    if np.any(residual(hi) < -1e-9):
        raise NonConvergence("root not bracketed by dry-bulb temperature")
    for _ in range(BISECTION_MAX_ITER):
        if np.all(hi - lo <= BISECTION_TOL):
            break
        mid = 0.5 * (lo + hi)
        go_up = residual(mid) < 0
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    else:
        raise NonConvergence(
            f"bisection did not reach {BISECTION_TOL} °C in {BISECTION_MAX_ITER} iterations")
    root = 0.5 * (lo + hi)
    return np.where(below, BRACKET_FLOOR, root)


def wet_bulb_array(dry_bulb, rh, pressure=STANDARD_PRESSURE_KPA):
    """Thermodynamic wet-bulb temperature (°C) for arrays of conditions."""
    t = np.atleast_1d(np.asarray(dry_bulb, dtype=np.float64))
    rh = np.broadcast_to(np.asarray(rh, dtype=np.float64), t.shape)
    p = np.broadcast_to(np.asarray(pressure, dtype=np.float64), t.shape)
    if np.any(~np.isfinite(t)) or np.any(~np.isfinite(rh)) or np.any(~np.isfinite(p)):
        raise NonConvergence("non-finite psychrometric input")
    w = humidity_ratio(rh * saturation_pressure(t), p)
    twb = _bisect(lambda x: _wet_bulb_residual(x, t, w, p), t)
    twb = np.minimum(twb, t)
    return np.where(rh >= 1.0, t, twb)


def dew_point_array(dry_bulb, rh):
    t = np.atleast_1d(np.asarray(dry_bulb, dtype=np.float64))
    rh = np.broadcast_to(np.asarray(rh, dtype=np.float64), t.shape)
    with np.errstate(divide="ignore"):
        ln_pw = np.log(rh * saturation_pressure(t))
    tdp = _bisect(lambda x: np.log(saturation_pressure(x)) - ln_pw, t,
                  clamp_low=True)
    tdp = np.minimum(tdp, t)
    return np.where(rh >= 1.0, t, tdp)


def psychrometrics_array(dry_bulb, rh, pressure=STANDARD_PRESSURE_KPA):
    """Return ``(wet_bulb, dew_point)`` arrays with ``dew_point <= wet_bulb``."""
    twb = wet_bulb_array(dry_bulb, rh, pressure)
    tdp = dew_point_array(dry_bulb, rh)
    # the two solvers share one dyadic bracket, so this only guards rounding
    return twb, np.minimum(tdp, twb)


@dataclass(frozen=True)
class HourlyWeatherRecord:
    hour_index: int
    dry_bulb: float
    relative_humidity: float
    pressure: float = STANDARD_PRESSURE_KPA
    wet_bulb: float | None = None
    dew_point: float | None = None

    def __post_init__(self):
        _check_ranges(self.dry_bulb, self.relative_humidity, self.pressure)
        if self.hour_index < 0:
            raise OutOfRange("hour", value=self.hour_index)
        if self.wet_bulb is not None and self.wet_bulb > self.dry_bulb:
            raise OutOfRange("wet_bulb", value=self.wet_bulb)
        if (self.dew_point is not None and self.wet_bulb is not None
                and self.dew_point > self.wet_bulb):
            raise OutOfRange("dew_point", value=self.dew_point)


def _check_ranges(dry_bulb, rh, pressure, line=None):
    if not -60.0 <= dry_bulb <= 60.0:
        raise OutOfRange("dry_bulb_c", line, dry_bulb)
    if not 0.0 <= rh <= 1.0:
        raise OutOfRange("rh", line, rh)
    if not 60.0 <= pressure <= 110.0:
        raise OutOfRange("pressure_kpa", line, pressure)


def derive_psychrometrics(record):
    """Populate ``wet_bulb`` and ``dew_point`` on a weather record.

    Records that already carry both values are returned unchanged.
    """
    if record.wet_bulb is not None and record.dew_point is not None:
        return record
    twb, tdp = psychrometrics_array(record.dry_bulb, record.relative_humidity,
                                    record.pressure)
    return replace(record, wet_bulb=float(twb[0]), dew_point=float(tdp[0]))


class WeatherSeries:
    """A full year of hourly weather for one location.

    Backed by numpy arrays; ``records`` materialises the per-hour records.
    """

    def __init__(self, location_id, dry_bulb, relative_humidity,
                 pressure=None, wet_bulb=None, dew_point=None):
        db = np.array(dry_bulb, dtype=np.float64)
        rh = np.array(relative_humidity, dtype=np.float64)
        n = len(db)
        if n not in VALID_LENGTHS:
            raise WrongLength(n)
        p = (np.full(n, STANDARD_PRESSURE_KPA) if pressure is None
             else np.array(pressure, dtype=np.float64))
        if len(rh) != n or len(p) != n:
            raise WrongLength(min(len(rh), len(p)))
        for name, arr, lo, hi in (("dry_bulb_c", db, -60, 60), ("rh", rh, 0, 1),
                                  ("pressure_kpa", p, 60, 110)):
            bad = np.flatnonzero(~((arr >= lo) & (arr <= hi)))
            if bad.size:
                raise OutOfRange(name, int(bad[0]), float(arr[bad[0]]))
        if wet_bulb is None or dew_point is None:
            wet_bulb, dew_point = psychrometrics_array(db, rh, p)
        self.location_id = str(location_id)
        self.dry_bulb = db
        self.relative_humidity = rh
        self.pressure = p
        self.wet_bulb = np.array(wet_bulb, dtype=np.float64)
        self.dew_point = np.array(dew_point, dtype=np.float64)
        for arr in (self.dry_bulb, self.relative_humidity, self.pressure,
                    self.wet_bulb, self.dew_point):
            arr.flags.writeable = False

    @classmethod
    def from_records(cls, location_id, records):
        records = list(records)
        for i, rec in enumerate(records):
            if rec.hour_index != i:
                raise MalformedRow(i + 2, f"expected hour {i}, got {rec.hour_index}")
        have_psy = all(r.wet_bulb is not None and r.dew_point is not None
                       for r in records)
        return cls(location_id,
                   [r.dry_bulb for r in records],
                   [r.relative_humidity for r in records],
                   [r.pressure for r in records],
                   [r.wet_bulb for r in records] if have_psy else None,
                   [r.dew_point for r in records] if have_psy else None)

    def __len__(self):
        return len(self.dry_bulb)

    def __getitem__(self, i):
        return HourlyWeatherRecord(int(range(len(self))[i]), float(self.dry_bulb[i]),
                                   float(self.relative_humidity[i]),
                                   float(self.pressure[i]), float(self.wet_bulb[i]),
                                   float(self.dew_point[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def records(self):
        return list(self)

    @property
    def hour_index(self):
        return np.arange(len(self))

    def shifted(self, offset_c):
        """Copy with dry-bulb, wet-bulb and dew point all offset by ``offset_c``.

        A uniform offset keeps the ordering of the three temperatures; it is a
        cheap stand-in for re-deriving psychrometrics on a warmer climate.
        """
        return WeatherSeries(self.location_id, np.clip(self.dry_bulb + offset_c, -60, 60),
                             self.relative_humidity, self.pressure,
                             np.minimum(self.wet_bulb + offset_c,
                                        np.clip(self.dry_bulb + offset_c, -60, 60)),
                             np.minimum(self.dew_point + offset_c,
                                        np.clip(self.dry_bulb + offset_c, -60, 60)))


def load_weather_series(path, location_id=None):
    """Read and validate an hourly weather CSV.

    The header must be ``hour,dry_bulb_c,rh,pressure_kpa``; the pressure
    column may be omitted entirely or left blank (101.325 kPa).
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"weather file not found: {path}")
    db, rh, pr = [], [], []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise WrongLength(0)
        header = tuple(h.strip() for h in header)
        if header not in (WEATHER_HEADER, WEATHER_HEADER[:3]):
            raise MalformedRow(1, f"header must be {','.join(WEATHER_HEADER)}")
        width = len(header)
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise MalformedRow(line, f"expected {width} fields, got {len(row)}")
            try:
                hour = int(row[0])
                t = float(row[1])
                h = float(row[2])
                p = float(row[3]) if width == 4 and row[3].strip() else STANDARD_PRESSURE_KPA
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
            if hour != len(db):
                raise MalformedRow(line, f"expected hour {len(db)}, got {hour}")
            _check_ranges(t, h, p, line)
            db.append(t)
            rh.append(h)
            pr.append(p)
    if len(db) not in VALID_LENGTHS:
        raise WrongLength(len(db))
    if location_id is None:
        location_id = os.path.splitext(os.path.basename(path))[0]
    return WeatherSeries(location_id, db, rh, pr)


def write_weather_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEATHER_HEADER)
        for i in range(len(series)):
            w.writerow([i, repr(float(series.dry_bulb[i])),
                        repr(float(series.relative_humidity[i])),
                        repr(float(series.pressure[i]))])
