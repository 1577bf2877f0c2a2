import csv
import json
import os

import numpy as np
import pytest

from dcem.bottomup import (PueBySpaceType, Scenario, aggregate_eq1, project_scenario,
                           sensitivity_oat)
from dcem.errors import UnwritableOutput, ValidationError
from dcem.ida import IdaDataset, lmdi_additive
from dcem.ledger import EnergyLedger
from dcem.pue import annual_pue, reference_config
from dcem.report import (PLOT_HEADER, PROJECTION_HEADER, atomic_write, emit_report,
                         json_text, render)
from dcem.uncertainty import summarize


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def small_projection(mc=None):
    led = EnergyLedger({(2020, "north_america", "hyperscale", "server", "s"): 100.0,
                        (2020, "western_europe", "traditional", "storage", "d"): 40.0})
    pue = PueBySpaceType.uniform({"hyperscale": 1.1, "traditional": 1.8})
    act = {2021: {"uniform": [0.9, 1.2]}, 2022: 1.05}
    return project_scenario(led, pue, Scenario("s", 2020, 2022, activity=act), mc=mc)


def test_mc_summary_plot_row(tmp_path):
    s = summarize(np.arange(1000.0), seed=1)
    (path,) = emit_report(s, "plotdata", tmp_path, name="draws")
    rows = read_csv(path)
    assert tuple(rows[0]) == PLOT_HEADER
    assert rows[1] == ["draws", "", repr(s.mean), repr(s.quantiles[0.025]),
                       repr(s.quantiles[0.975])]


def test_projection_one_row_per_cell(tmp_path):
    res = small_projection(mc=(200, 3))
    (path,) = emit_report(res, "csv", tmp_path)
    rows = read_csv(path)
    assert tuple(rows[0]) == PROJECTION_HEADER
    keys = [tuple(r[:3]) for r in rows[1:]]
    assert len(keys) == len(set(keys)) == 3 * 2
    cell = res.cells[min(res.cells)]
    assert rows[1][3:] == [repr(cell.mean), repr(cell.quantiles[0.025]),
                           repr(cell.quantiles[0.975])]


def test_point_projection_band_collapses(tmp_path):
    (path,) = emit_report(small_projection(), "csv", tmp_path)
    for row in read_csv(path)[1:]:
        assert row[3] == row[4] == row[5]


@pytest.mark.parametrize("fmt", ["json", "csv", "plotdata"])
def test_byte_identical_reemission(tmp_path, fmt, weather):
    results = [annual_pue(reference_config(), weather), small_projection(mc=(100, 2)),
               summarize([1.0, 2.5, 3.0], 4)]
    for i, res in enumerate(results):
        a = emit_report(res, fmt, tmp_path / f"a{i}")
        b = emit_report(res, fmt, tmp_path / f"b{i}")
        for pa, pb in zip(a, b):
            assert os.path.basename(pa) == os.path.basename(pb)
            assert open(pa, "rb").read() == open(pb, "rb").read()


def test_pue_files(tmp_path, weather):
    res = annual_pue(reference_config(), weather)
    (path,) = emit_report(res, "json", tmp_path)
    assert os.path.basename(path) == "pue_summary.json"
    doc = json.load(open(path))
    assert doc["annual_pue"] == res.annual_pue
    (path,) = emit_report(res, "csv", tmp_path)
    assert len(read_csv(path)) == 8761


def test_eq1_and_ida_and_sensitivity(tmp_path):
    led = EnergyLedger({(2018, "north_america", "hyperscale", "server", "s"): 10.0})
    eq1 = aggregate_eq1(led, PueBySpaceType({("north_america", "hyperscale"): 1.2}), 2018)
    doc = json.load(open(emit_report(eq1, "json", tmp_path)[0]))
    assert doc["total_kwh"] == pytest.approx(12.0)
    cell = ("r", "s", "c")
    ida = lmdi_additive(IdaDataset((0, 1), ("a", "b"), {0: {cell: (1, 2)}, 1: {cell: (2, 2)}}))
    rows = read_csv(emit_report(ida, "csv", tmp_path)[0])
    assert rows[0] == ["factor", "additive_kwh", "multiplicative"] and len(rows) == 3
    el = sensitivity_oat(lambda t: 2 * t["p"], {"p": 1.0})
    assert json.load(open(emit_report(el, "json", tmp_path)[0]))["elasticities"][0]["name"] \
        == "p"


def test_json_text_is_canonical():
    assert json_text({"b": 1, "a": np.float64(0.1)}) == '{\n  "a": 0.1,\n  "b": 1\n}\n'
    assert json.loads(json_text({"x": float("inf")}))["x"] == "inf"


def test_unknown_result_and_format(tmp_path):
    with pytest.raises(ValidationError):
        emit_report(object(), "json", tmp_path)
    with pytest.raises(ValidationError):
        emit_report({"a": 1}, "xml", tmp_path)
    with pytest.raises(ValidationError):
        render({"a": 1}, "csv")


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(UnwritableOutput):
        emit_report({"a": 1}, "json", blocker / "sub")


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "out.json"
    target.write_text("old")

    def fail(*_):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", fail)
    with pytest.raises(UnwritableOutput):
        atomic_write(target, "new")
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["out.json"]
