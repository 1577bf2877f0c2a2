import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from dcem import psychro
from dcem.errors import MalformedRow, MissingFile, NonConvergence, OutOfRange, WrongLength
from dcem.psychro import (HourlyWeatherRecord, WeatherSeries, derive_psychrometrics,
                          load_weather_series, write_weather_csv)


# --- independent oracle: Wagner-Pruss saturation line + enthalpy balance via brentq

def _psat_wagner_kpa(t_c):
    tc, pc = 647.096, 22064.0
    tau = 1.0 - (t_c + 273.15) / tc
    a = (-7.85951783, 1.84408259, -11.7866497, 22.6807411, -15.9618719, 1.80122502)
    s = (a[0] * tau + a[1] * tau**1.5 + a[2] * tau**3 + a[3] * tau**3.5
         + a[4] * tau**4 + a[5] * tau**7.5)
    return pc * math.exp(tc / (t_c + 273.15) * s)


def _w(pv, p):
    return 0.62198 * pv / (p - pv)


def oracle_wet_bulb(t, rh, p=101.325):
    w = _w(rh * _psat_wagner_kpa(t), p)
    h_air = 1.006 * t + w * (2501.0 + 1.86 * t)

    def balance(twb):
        ws = _w(_psat_wagner_kpa(twb), p)
        h_sat = 1.006 * twb + ws * (2501.0 + 1.86 * twb)
        return h_sat - (ws - w) * 4.186 * twb - h_air

    if rh >= 1.0:
        return t
    return brentq(balance, -80.0, t, xtol=1e-6)


def test_oracle_self_check_saturation_pressure():
    # steam-table anchors: 20 C -> 2.3392 kPa, 100 C -> 101.418 kPa
    assert _psat_wagner_kpa(20.0) == pytest.approx(2.3392, abs=2e-3)
    assert _psat_wagner_kpa(100.0) == pytest.approx(101.418, abs=0.05)


def rec(t, rh, p=101.325):
    return HourlyWeatherRecord(0, t, rh, p)


def test_saturation_gives_equal_temperatures():
    r = derive_psychrometrics(rec(25.0, 1.0))
    assert r.wet_bulb == pytest.approx(25.0, abs=0.01)
    assert r.dew_point == pytest.approx(25.0, abs=0.01)


def test_twenty_degrees_half_humidity():
    r = derive_psychrometrics(rec(20.0, 0.5))
    assert r.wet_bulb == pytest.approx(13.7, abs=0.1)
    assert r.wet_bulb == pytest.approx(oracle_wet_bulb(20.0, 0.5), abs=0.05)


def test_dry_air_ordering():
    r = derive_psychrometrics(rec(30.0, 0.0))
    assert r.dew_point < r.wet_bulb < 30.0


def test_idempotent_and_deterministic():
    r1 = derive_psychrometrics(rec(12.3, 0.41))
    assert derive_psychrometrics(r1) is r1
    assert derive_psychrometrics(rec(12.3, 0.41)) == r1


def test_iteration_cap_raises(monkeypatch):
    monkeypatch.setattr(psychro, "BISECTION_MAX_ITER", 3)
    with pytest.raises(NonConvergence):
        derive_psychrometrics(rec(20.0, 0.5))


def test_low_pressure_wet_bulb_is_lower():
    # at altitude the same RH evaporates more readily
    sea = derive_psychrometrics(rec(25.0, 0.4)).wet_bulb
    high = derive_psychrometrics(rec(25.0, 0.4, 70.0)).wet_bulb
    assert high < sea
    assert high == pytest.approx(oracle_wet_bulb(25.0, 0.4, 70.0), abs=0.1)


@pytest.mark.parametrize("field,kwargs", [
    ("dry_bulb_c", dict(dry_bulb=61.0, relative_humidity=0.5)),
    ("rh", dict(dry_bulb=20.0, relative_humidity=-0.1)),
    ("pressure_kpa", dict(dry_bulb=20.0, relative_humidity=0.5, pressure=50.0)),
])
def test_record_ranges(field, kwargs):
    with pytest.raises(OutOfRange) as exc:
        HourlyWeatherRecord(0, **kwargs)
    assert exc.value.field == field


def test_record_rejects_inconsistent_wet_bulb():
    with pytest.raises(OutOfRange):
        HourlyWeatherRecord(0, 20.0, 0.5, wet_bulb=21.0)
    with pytest.raises(OutOfRange):
        HourlyWeatherRecord(0, 20.0, 0.5, wet_bulb=10.0, dew_point=12.0)


temps = st.floats(-40.0, 55.0, allow_nan=False)
humid = st.floats(0.0, 1.0, allow_nan=False)


@given(temps, humid)
def test_ordering_property(t, rh):
    r = derive_psychrometrics(rec(t, rh))
    assert r.dew_point <= r.wet_bulb <= r.dry_bulb


@given(temps, st.floats(0.0, 0.98))
def test_strict_below_saturation(t, rh):
    r = derive_psychrometrics(rec(t, rh))
    assert r.wet_bulb < r.dry_bulb
    assert r.dew_point < r.dry_bulb


@given(temps)
def test_equality_at_saturation(t):
    r = derive_psychrometrics(rec(t, 1.0))
    assert r.dew_point == r.wet_bulb == r.dry_bulb


@given(temps, st.lists(humid, min_size=2, max_size=12))
def test_wet_bulb_monotone_in_rh(t, rhs):
    rhs = sorted(rhs)
    wb = psychro.wet_bulb_array(np.full(len(rhs), t), np.array(rhs))
    assert np.all(np.diff(wb) >= 0)


# --- files

def _write(path, rows, header="hour,dry_bulb_c,rh,pressure_kpa"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def _rows(n, rh="0.5"):
    return [f"{i},{10 + (i % 24) / 4:.2f},{rh},101.325" for i in range(n)]


def test_load_8760(tmp_path):
    s = load_weather_series(_write(tmp_path / "a.csv", _rows(8760)))
    assert len(s) == 8760
    assert s.location_id == "a"
    assert np.array_equal(s.hour_index, np.arange(8760))


def test_load_leap_year(tmp_path):
    assert len(load_weather_series(_write(tmp_path / "b.csv", _rows(8784)))) == 8784


def test_load_wrong_length(tmp_path):
    with pytest.raises(WrongLength) as exc:
        load_weather_series(_write(tmp_path / "c.csv", _rows(100)))
    assert exc.value.actual == 100


def test_load_out_of_range(tmp_path):
    rows = _rows(8760)
    rows[41] = "41,20.0,1.2,101.325"
    with pytest.raises(OutOfRange) as exc:
        load_weather_series(_write(tmp_path / "d.csv", rows))
    assert exc.value.field == "rh" and exc.value.line == 43


def test_load_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        load_weather_series(tmp_path / "nope.csv")


def test_load_hour_gap_is_malformed(tmp_path):
    rows = _rows(8761)
    del rows[500]
    with pytest.raises(MalformedRow) as exc:
        load_weather_series(_write(tmp_path / "e.csv", rows))
    assert exc.value.line == 502


def test_load_bad_header_and_fields(tmp_path):
    with pytest.raises(MalformedRow):
        load_weather_series(_write(tmp_path / "f.csv", _rows(8760), "h,t,rh,p"))
    rows = _rows(8760)
    rows[3] = "3,abc,0.5,101.325"
    with pytest.raises(MalformedRow):
        load_weather_series(_write(tmp_path / "g.csv", rows))


def test_pressure_optional(tmp_path):
    rows = [f"{i},15.0,0.5" for i in range(8760)]
    s = load_weather_series(_write(tmp_path / "h.csv", rows, "hour,dry_bulb_c,rh"))
    assert np.all(s.pressure == 101.325)
    rows = [f"{i},15.0,0.5," for i in range(8760)]
    s = load_weather_series(_write(tmp_path / "i.csv", rows))
    assert np.all(s.pressure == 101.325)


def test_crlf_newlines(tmp_path):
    p = tmp_path / "crlf.csv"
    p.write_bytes(("hour,dry_bulb_c,rh,pressure_kpa\r\n"
                   + "\r\n".join(_rows(8760)) + "\r\n").encode())
    assert len(load_weather_series(p)) == 8760


def test_roundtrip(tmp_path, weather):
    path = tmp_path / "w.csv"
    write_weather_csv(weather, path)
    back = load_weather_series(path)
    assert np.array_equal(back.dry_bulb, weather.dry_bulb)
    assert np.array_equal(back.wet_bulb, weather.wet_bulb)


def test_series_is_immutable_and_does_not_alias_input():
    db = np.full(8760, 10.0)
    s = WeatherSeries("x", db, np.full(8760, 0.5))
    with pytest.raises(ValueError):
        s.dry_bulb[0] = 3.0
    db[0] = 99.0
    assert s.dry_bulb[0] == 10.0
    assert db.flags.writeable


def test_records_roundtrip(weather):
    recs = weather.records
    again = WeatherSeries.from_records("again", recs)
    assert np.array_equal(again.wet_bulb, weather.wet_bulb)
    assert recs[5] == weather[5]


def test_shifted_keeps_ordering(weather):
    s = weather.shifted(5.0)
    assert np.allclose(s.dry_bulb, np.clip(weather.dry_bulb + 5, -60, 60))
    assert np.all(s.dew_point <= s.wet_bulb) and np.all(s.wet_bulb <= s.dry_bulb)
