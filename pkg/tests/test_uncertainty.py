import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dcem.errors import ModelFailure, ValidationError, ZeroReported
from dcem.uncertainty import (Distribution, McSummary, draw_parameters, monte_carlo_draws,
                              relative_error, run_monte_carlo, sample, substream, summarize)

ALL_KINDS = [Distribution.point(2.5), Distribution.uniform(-1.0, 3.0),
             Distribution.triangular(4.0, 5.0, 6.5), Distribution.trunc_normal(1.0, 2.0, 0.0, 3.0),
             Distribution.normal(10.0, 0.5), Distribution.trunc_normal(0.0, 1.0, 5.0, 6.0)]


def scipy_twin(d):
    p = d.params
    if d.kind == "uniform":
        return stats.uniform(p[0], p[1] - p[0])
    if d.kind == "triangular":
        a, m, b = p
        return stats.triang((m - a) / (b - a), loc=a, scale=b - a)
    mu, sd, lo, hi = p
    return stats.truncnorm((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd)


@pytest.mark.parametrize("d", [d for d in ALL_KINDS if d.kind != "point"], ids=str)
def test_ppf_logpdf_mean_against_scipy(d):
    twin = scipy_twin(d)
    for u in (0.001, 0.1, 0.37, 0.5, 0.8, 0.999):
        assert d.ppf(u) == pytest.approx(twin.ppf(u), rel=1e-7, abs=1e-9)
        x = twin.ppf(u)
        assert d.logpdf(x) == pytest.approx(twin.logpdf(x), rel=1e-7, abs=1e-9)
    assert d.mean() == pytest.approx(twin.mean(), rel=1e-9)


def test_point_distribution():
    d = Distribution.point(3.0)
    assert d.ppf(0.7) == 3.0 and d.mean() == 3.0 and d.is_degenerate
    assert d.logpdf(3.0) == 0.0 and d.logpdf(3.1) == -math.inf


@pytest.mark.parametrize("obj,kind", [
    (3.5, "point"), ({"point": 2}, "point"), ({"uniform": [0, 1]}, "uniform"),
    ({"triangular": [4.0, 5.0, 6.5]}, "triangular"),
    ({"trunc_normal": [1, 2, None, 5]}, "trunc_normal"), ({"normal": [0, 1]}, "trunc_normal"),
])
def test_json_parsing_roundtrip(obj, kind):
    d = Distribution.from_json(obj)
    assert d.kind == kind
    assert Distribution.from_json(json.loads(json.dumps(d.to_json()))) == d


@pytest.mark.parametrize("obj", [
    {"uniform": [1, 0]}, {"triangular": [0, 2, 1]}, {"trunc_normal": [0, -1, 0, 1]},
    {"cauchy": [0, 1]}, {"uniform": [0, 1], "point": 1}, "3.5", {"point": float("nan")},
])
def test_json_rejects(obj):
    with pytest.raises(ValidationError):
        Distribution.from_json(obj)


@given(st.sampled_from(ALL_KINDS), st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_samples_stay_in_support(d, seed, i):
    x = sample(d, substream(seed, i))
    assert d.contains(x)


def test_substream_depends_only_on_seed_and_index():
    a = substream(42, 7).random(3)
    b = substream(42, 7).random(3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, substream(42, 8).random(3))
    assert not np.array_equal(a, substream(43, 7).random(3))


def test_seed_range():
    with pytest.raises(ValidationError):
        substream(-1, 0)
    with pytest.raises(ValidationError):
        substream(2**64, 0)
    substream(2**64 - 1, 0)


def test_draw_parameters_are_prefix_stable():
    params = {"b": Distribution.uniform(0, 1), "a": Distribution.triangular(0, 1, 2)}
    full = monte_carlo_draws(lambda t: [t["a"], t["b"]], params, 50, seed=9)
    short = monte_carlo_draws(lambda t: [t["a"], t["b"]], params, 10, seed=9)
    assert np.array_equal(full[:10], short)
    assert draw_parameters(params, 9, 3) == {"a": full[3, 0], "b": full[3, 1]}


def test_all_point_gives_zero_spread():
    params = {"x": Distribution.point(2.0), "y": 3.0}
    s = run_monte_carlo(lambda t: t["x"] * t["y"], params, 200, seed=1)
    assert s.std_dev == 0.0
    assert s.mean == 6.0
    assert s.band == (6.0, 6.0)


def test_uniform_median_and_mean():
    n = 100_000
    s = run_monte_carlo(lambda t: t["u"], {"u": Distribution.uniform(0, 1)}, n, seed=2024)
    se_mean = math.sqrt(1 / 12 / n)
    se_median = 0.5 / math.sqrt(n)        # 1 / (2 f(m) sqrt(n)) with f = 1
    assert abs(s.mean - 0.5) <= 3 * se_mean
    assert abs(s.median - 0.5) <= 3 * se_median
    assert abs(s.median - 0.5) <= 0.01


def test_triangular_mean():
    n = 100_000
    a, m, b = 1.0, 2.0, 4.0
    s = run_monte_carlo(lambda t: t["x"], {"x": Distribution.triangular(a, m, b)}, n, seed=5)
    var = (a * a + m * m + b * b - a * m - a * b - m * b) / 18
    assert abs(s.mean - (a + m + b) / 3) <= 3 * math.sqrt(var / n)


def test_point_sample_is_constant():
    d = Distribution.point(3.5)
    assert {sample(d, substream(1, i)) for i in range(50)} == {3.5}


def test_workers_do_not_change_result():
    params = {"cop": Distribution.triangular(4.0, 5.0, 6.5), "f": Distribution.uniform(0.0, 0.1)}

    def model(t):
        return 1 + 1 / t["cop"] + t["f"]

    one = run_monte_carlo(model, params, 3000, seed=77, workers=1)
    eight = run_monte_carlo(model, params, 3000, seed=77, workers=8)
    assert one.to_json() == eight.to_json()
    assert np.array_equal(one.draws, eight.draws)


def _nearest_rank(values, q):
    ordered = sorted(values)
    return ordered[max(1, math.ceil(q * len(ordered))) - 1]


def test_summary_recomputes_from_draws():
    s = run_monte_carlo(lambda t: t["x"] ** 2, {"x": Distribution.normal(0, 1)}, 999, seed=3)
    d = list(s.draws)
    assert s.mean == math.fsum(d) / len(d)
    assert s.std_dev == pytest.approx(np.std(d, ddof=1), rel=1e-12)
    for q, v in s.quantiles.items():
        assert v == _nearest_rank(d, q)
    again = summarize(s.draws, s.seed)
    assert again.to_json() == s.to_json()


def test_summary_json_shape():
    s = summarize([1.0, 2.0, 3.0, 4.0], seed=5)
    doc = json.loads(s.to_json())
    assert set(doc) == {"n", "seed", "mean", "std_dev", "quantiles"}
    assert set(doc["quantiles"]) == {"0.025", "0.25", "0.5", "0.75", "0.975"}
    assert doc["quantiles"]["0.5"] == 2.0
    assert summarize([7.0], 0).std_dev == 0.0


def test_model_failure_reports_index():
    def model(t):
        if t["x"] > 0.9:
            raise RuntimeError("boom")
        return t["x"]

    with pytest.raises(ModelFailure) as exc:
        run_monte_carlo(model, {"x": Distribution.uniform(0, 1)}, 500, seed=4)
    bad = exc.value.index
    assert draw_parameters({"x": Distribution.uniform(0, 1)}, 4, bad)["x"] > 0.9


def test_invalid_n():
    with pytest.raises(ValidationError):
        run_monte_carlo(lambda t: 0.0, {}, 0, seed=0)


def test_relative_error():
    assert relative_error(1.10, 1.10) == 0.0
    assert relative_error(1.144, 1.10) == pytest.approx(0.04)
    assert relative_error(0.9, 1.0) == pytest.approx(-0.1)
    with pytest.raises(ZeroReported):
        relative_error(1.0, 0.0)


def test_mc_summary_is_value_object():
    a = summarize([1.0, 2.0], 0)
    assert isinstance(a, McSummary)
    assert a == summarize(np.array([2.0, 1.0]), 0)
