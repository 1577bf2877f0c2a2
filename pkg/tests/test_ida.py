import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcem.errors import FactorMismatch, MalformedRow, NonPositiveInput
from dcem.ida import (SIX_FACTORS, IdaDataset, LmdiDecomposer, decompose_by, lmdi_additive,
                      lmdi_multiplicative, log_mean, six_factor_dataset)

FACTORS = ("activity", "intensity", "pue")


def test_log_mean_closed_forms():
    assert log_mean(5, 5) == 5.0
    assert log_mean(math.e, 1) == pytest.approx(math.e - 1, rel=1e-12)
    with pytest.raises(NonPositiveInput):
        log_mean(0, 1)
    with pytest.raises(NonPositiveInput):
        log_mean(1, -2)


def test_log_mean_random_pairs():
    rng = random.Random(0)
    for _ in range(1000):
        a, b = rng.uniform(1e-3, 1e3), rng.uniform(1e-3, 1e3)
        v = log_mean(a, b)
        assert min(a, b) <= v <= max(a, b)
        assert v <= (a + b) / 2 * (1 + 1e-15)
        if a != b:
            assert v == pytest.approx((a - b) / (math.log(a) - math.log(b)), rel=1e-12)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_log_mean_symmetry(a, b):
    assert log_mean(a, b) == log_mean(b, a) or \
        log_mean(a, b) == pytest.approx(log_mean(b, a), rel=1e-14)


def test_log_mean_near_equal_is_smooth():
    a = 2.0
    for eps in (1e-3, 1e-7, 1e-10, 1e-13):
        b = a * (1 + eps)
        assert log_mean(a, b) == pytest.approx((b - a) / math.log1p((b - a) / a), rel=1e-12)


def one_cell(x0, x1, factors=FACTORS):
    cell = ("north_america", "hyperscale", "s")
    return IdaDataset((2010, 2018), factors, {2010: {cell: x0}, 2018: {cell: x1}})


def test_identical_periods():
    res = lmdi_additive(one_cell((2, 3, 1.5), (2, 3, 1.5)))
    assert all(v == 0.0 for v in res.additive.values())
    assert all(v == 1.0 for v in lmdi_multiplicative(one_cell((2, 3, 1.5), (2, 3, 1.5)))
               .multiplicative.values())


def test_single_factor_change():
    res = lmdi_additive(one_cell((10, 10, 1), (10, 20, 1)))
    assert res.additive["intensity"] == pytest.approx(100.0, rel=1e-12)
    assert res.additive["activity"] == 0.0 and res.additive["pue"] == 0.0
    mul = lmdi_multiplicative(one_cell((1, 5, 1.2), (3, 5, 1.2)))
    assert mul.multiplicative["activity"] == pytest.approx(3.0, rel=1e-12)
    assert mul.multiplicative["intensity"] == 1.0 and mul.multiplicative["pue"] == 1.0


def random_dataset(rng, regions=2, space_types=2, classes=2, factors=FACTORS):
    vals = {2010: {}, 2018: {}}
    for r in range(regions):
        for s in range(space_types):
            for c in range(classes):
                cell = (f"r{r}", f"s{s}", f"c{c}")
                for p in vals:
                    vals[p][cell] = tuple(rng.uniform(0.1, 10.0) for _ in factors)
    return IdaDataset((2010, 2018), factors, vals)


def oracle_effects(data):
    """Per-cell formula evaluation written out without the library's helpers."""
    p0, p1 = data.periods
    e0 = {c: math.prod(data.values[p0][c]) for c in data.cells}
    e1 = {c: math.prod(data.values[p1][c]) for c in data.cells}

    def L(a, b):
        return a if a == b else (a - b) / (math.log(a) - math.log(b))

    E0, E1 = sum(e0.values()), sum(e1.values())
    add, mul = {}, {}
    for k, f in enumerate(data.factors):
        s = 0.0
        for c in data.cells:
            s += L(e1[c], e0[c]) * math.log(data.values[p1][c][k] / data.values[p0][c][k])
        add[f] = s
        mul[f] = math.exp(s / L(E1, E0))
    return add, mul


@pytest.mark.parametrize("seed", range(20))
def test_matches_formula_oracle(seed):
    data = random_dataset(random.Random(seed))
    res = lmdi_additive(data)
    add, mul = oracle_effects(data)
    for f in FACTORS:
        assert res.additive[f] == pytest.approx(add[f], rel=1e-9, abs=1e-9)
        assert res.multiplicative[f] == pytest.approx(mul[f], rel=1e-9)
    assert math.fsum(res.additive.values()) == pytest.approx(res.delta, rel=1e-9)
    assert math.prod(res.multiplicative.values()) == pytest.approx(res.ratio, rel=1e-9)
    assert res.delta == pytest.approx(data.total(2018) - data.total(2010), rel=1e-12)


@given(st.integers(0, 2**32))
def test_time_reversal(seed):
    data = random_dataset(random.Random(seed), classes=1)
    fwd, back = lmdi_additive(data), lmdi_additive(data.reversed())
    for f in FACTORS:
        assert back.additive[f] == pytest.approx(-fwd.additive[f], rel=1e-9, abs=1e-9)
        assert back.multiplicative[f] == pytest.approx(1 / fwd.multiplicative[f], rel=1e-9)


@given(st.integers(0, 2**32), st.permutations(FACTORS))
def test_permutation_invariance(seed, order):
    data = random_dataset(random.Random(seed), classes=1)
    a, b = lmdi_additive(data), lmdi_additive(data.reordered(order))
    assert b.factors == tuple(order)
    for f in FACTORS:
        assert b.additive[f] == pytest.approx(a.additive[f], rel=1e-12, abs=1e-12)


def test_zero_substitution_warns():
    res = lmdi_additive(one_cell((1.0, 0.0, 1.0), (1.0, 2.0, 1.0)))
    assert res.warnings and "replaced" in res.warnings[0]
    assert math.fsum(res.additive.values()) == pytest.approx(res.delta, rel=1e-9)


def test_factor_mismatch():
    cell = ("r", "s", "c")
    with pytest.raises(FactorMismatch):
        IdaDataset((2010, 2018), FACTORS, {2010: {cell: (1, 2, 3)}, 2018: {cell: (1, 2)}})
    with pytest.raises(FactorMismatch):
        IdaDataset((2010, 2018), FACTORS, {2010: {cell: (1, 2, 3)}, 2018: {("x", "s", "c"):
                                                                          (1, 2, 3)}})
    with pytest.raises(FactorMismatch):
        IdaDataset((2010, 2010), FACTORS, {2010: {cell: (1, 2, 3)}})


def test_csv_roundtrip(tmp_path):
    data = random_dataset(random.Random(4))
    data.to_csv(tmp_path / "d.csv")
    back = IdaDataset.from_csv(tmp_path / "d.csv")
    assert back.periods == data.periods and back.factors == data.factors
    assert back.values == data.values


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("period,region,space_type,class_id,factor_name,value\n"
                 "2010,r,s,c,a,1\n2010,r,s,c,b,2\n2018,r,s,c,b,2\n2018,r,s,c,a,1\n")
    with pytest.raises(FactorMismatch):
        IdaDataset.from_csv(p)
    p.write_text("period,region,space_type,class_id,factor_name,value\n2010,r,s,c,a,one\n")
    with pytest.raises(MalformedRow):
        IdaDataset.from_csv(p)


def test_six_factor_dataset_reproduces_energy():
    periods = (2010, 2018)
    activity, devices, it, pue = {}, {}, {}, {}
    rng = random.Random(2)
    for p in periods:
        for r in ("na", "we"):
            for s in ("traditional", "hyperscale"):
                activity[(p, r, s)] = rng.uniform(1, 100)
                pue[(p, r, s)] = rng.uniform(1.1, 2.0)
                for c in ("a", "b"):
                    devices[(p, r, s, c)] = rng.uniform(1, 50)
                    it[(p, r, s, c)] = rng.uniform(100, 1000)
    data = six_factor_dataset(periods, activity, devices, it, pue)
    assert data.factors == SIX_FACTORS
    data.check_shares()
    for p in periods:
        for (r, s, c) in data.cells:
            assert data.energy(p, (r, s, c)) == pytest.approx(
                it[(p, r, s, c)] * pue[(p, r, s)], rel=1e-12)


def test_multilevel_consistency():
    data = random_dataset(random.Random(5), regions=3)
    for level in ("region", "region_space_type"):
        groups, gap = decompose_by(data, level)
        assert gap >= 0
        assert sum(r.delta for r in groups.values()) == pytest.approx(
            lmdi_additive(data).delta, rel=1e-12)


def test_estimator():
    data = random_dataset(random.Random(6))
    est = LmdiDecomposer().fit(data)
    assert est.additive_ == lmdi_additive(data).additive
    out = est.transform(data)
    assert out.shape == (1, 3)
    assert np.isclose(out.sum(), lmdi_additive(data).delta, rtol=1e-9)
    assert LmdiDecomposer().get_params() == {}


def test_reorder_rejects_unknown_factor():
    cell = ("r", "s", "c")
    data = IdaDataset((0, 1), ("a", "b"), {0: {cell: (1.0, 2.0)}, 1: {cell: (2.0, 2.0)}})
    assert data.reordered(["b", "a"]).factors == ("b", "a")
    with pytest.raises(FactorMismatch):
        data.reordered(["a", "c"])
    with pytest.raises(FactorMismatch):
        data.reordered(["a"])
