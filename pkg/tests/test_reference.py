import filecmp
import os

import pytest
from sklearn.base import clone

from dcem import reference
from dcem.bottomup import aggregate_eq1
from dcem.calibration import BayesianCalibrator
from dcem.ida import LmdiDecomposer, lmdi_additive
from dcem.itpower import ServerPowerModel, fleet_annual_energy
from dcem.ledger import SPACE_TYPES
from dcem.optimize import AchievablePue
from dcem.pue import PueSimulator


def test_bundled_files_match_builders(tmp_path):
    fresh = reference.write_reference_data(tmp_path)
    for key, path in fresh.items():
        assert filecmp.cmp(path, reference.data_path(key), shallow=False), key


def test_bundled_ledger_follows_from_installed_base():
    classes, base, ledger, _ = reference.load_reference()
    for year in base.years:
        assert fleet_annual_energy(base, classes, year).items() == ledger.slice(year).items()


def test_it_targets_recovered_to_rounding():
    _, _, ledger, pue = reference.load_reference()
    for year in (reference.BASE_YEAR, reference.LATEST_YEAR):
        res = aggregate_eq1(ledger, pue[year], year)
        want = {st: reference.FACILITY_TWH[year][st] for st in SPACE_TYPES}
        got = {st: v / reference.TWH for st, v in res.by_space_type().items()}
        for st in SPACE_TYPES:
            assert got[st] == pytest.approx(want[st], rel=1e-6)


def test_historical_scenario_lands_on_2018():
    from dcem.bottomup import project_scenario
    _, _, ledger, pue = reference.load_reference()
    res = project_scenario(ledger, pue[reference.BASE_YEAR], reference.historical_scenario())
    direct = aggregate_eq1(ledger, pue[reference.LATEST_YEAR], reference.LATEST_YEAR).total
    assert res.totals[reference.LATEST_YEAR] == pytest.approx(direct, rel=1e-6)


def test_ida_fixture_decomposes_the_change():
    data = reference.reference_ida_dataset()
    data.check_shares()
    res = lmdi_additive(data)
    totals = reference.reference_totals()
    assert res.delta / reference.TWH == pytest.approx(
        totals[reference.LATEST_YEAR] - totals[reference.BASE_YEAR], rel=1e-9)


def test_synthetic_facilities_are_reproducible():
    a = reference.synthetic_facilities(3, seed=1)
    b = reference.synthetic_facilities(3, seed=1)
    assert [x[1] for x in a] == [x[1] for x in b]
    assert len({x[1].cooling.economizer_mode for x in reference.synthetic_facilities()}) >= 2


def test_harness_small_run():
    out = reference.run_validation_harness(n_draws=20, n_facilities=3)
    assert out["synthetic"] and len(out["facilities"]) == 3
    assert out["passed"] == (out["max_abs_relative_error"] <= 0.04)


def test_data_paths_exist():
    for key in reference.FILES:
        assert os.path.isfile(reference.data_path(key))


@pytest.mark.parametrize("est", [PueSimulator(), AchievablePue(), ServerPowerModel(),
                                 LmdiDecomposer(), BayesianCalibrator(chain_length=500)],
                         ids=lambda e: type(e).__name__)
def test_estimators_clone(est):
    params = est.get_params()
    twin = clone(est)
    assert twin is not est and twin.get_params().keys() == params.keys()
    assert repr(twin) == repr(est)
