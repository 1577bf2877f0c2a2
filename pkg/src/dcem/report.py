"""Serialise module results as JSON, CSV or plot-ready tidy CSV.

Every file is written to a temporary sibling and renamed into place, so a
failed run never leaves a partial output. Floats are written with ``repr``
and JSON keys are sorted, which makes output byte-stable for equal inputs.
"""

import csv
import io
import json
import math
import os
import tempfile
from functools import singledispatch

import numpy as np

from .bottomup import Elasticity, Eq1Result, ProjectionResult
from .calibration import CalibrationRun
from .errors import UnwritableOutput, ValidationError
from .ida import DecompositionResult
from .pue import SUBSYSTEMS, PueResult
from .uncertainty import McSummary

FORMATS = ("json", "csv", "plotdata")
PLOT_HEADER = ("series", "x", "y", "y_lo", "y_hi")
PUE_CSV_HEADER = ("hour", "it_kw", "chiller_kw", "fans_kw", "pumps_tower_kw", "ups_pdu_kw",
                  "lighting_kw", "pue")
PROJECTION_HEADER = ("year", "region", "space_type", "kwh_mean", "kwh_p2_5", "kwh_p97_5")
IDA_CSV_HEADER = ("factor", "additive_kwh", "multiplicative")


def _num(v):
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def json_text(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else _num(c) for c in row])
    return buf.getvalue()


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temp file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    except OSError as exc:
        raise UnwritableOutput(f"cannot write to {directory}: {exc}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise UnwritableOutput(f"cannot write {path}: {exc}") from None
    return path


def emit_report(result, fmt="json", out_dir=".", name=None):
    """Write ``result`` in format ``fmt`` to ``out_dir`` and return the paths.

    ``name`` overrides the default file stem of the result type. All texts are
    rendered before anything touches the disk.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"format must be one of {FORMATS}, got {fmt!r}")
    files = render(result, fmt, name)
    return [atomic_write(os.path.join(out_dir, fname), text) for fname, text in files]


@singledispatch
def render(result, fmt, name=None):
    """Return ``[(file name, text)]`` for ``result``. Plain dicts are JSON only."""
    if isinstance(result, dict):
        if fmt != "json":
            raise ValidationError(f"{fmt} output is not available for this result")
        return [(f"{name or 'report'}.json", json_text(result))]
    raise ValidationError(f"no report format for {type(result).__name__}")


@render.register
def _(result: PueResult, fmt, name=None):
    stem = name or "pue"
    if fmt == "json":
        return [(f"{stem}_summary.json", json_text(result.summary()))]
    cols = [result.arrays[k] for k in SUBSYSTEMS + ("pue",)]
    if fmt == "csv":
        rows = ((h, *(float(c[h]) for c in cols)) for h in range(len(result)))
        return [(f"{stem}_hourly.csv", csv_text(PUE_CSV_HEADER, rows))]
    pue = result.hourly_pue
    rows = (("hourly_pue", h, float(pue[h]), "", "") for h in range(len(result)))
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]


@render.register
def _(result: McSummary, fmt, name=None):
    stem = name or "mc"
    if fmt == "json":
        return [(f"{stem}_summary.json", result.to_json())]
    if fmt == "csv":
        rows = [("n", result.n), ("seed", result.seed), ("mean", result.mean),
                ("std_dev", result.std_dev)]
        rows += [(f"q{q:g}", v) for q, v in result.quantiles.items()]
        return [(f"{stem}_summary.csv", csv_text(("statistic", "value"), rows))]
    lo, hi = result.band
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, [(stem, "", result.mean, lo, hi)]))]


def _mean_band(v):
    if isinstance(v, McSummary):
        return (v.mean, *v.band)
    return v, v, v


@render.register
def _(result: ProjectionResult, fmt, name=None):
    stem = name or "projection"
    if fmt == "json":
        return [(f"{stem}.json", json_text(result.to_dict()))]
    cells = sorted(result.cells.items())
    if fmt == "csv":
        rows = ((k.year, k.region, k.space_type, *_mean_band(v)) for k, v in cells)
        return [(f"{stem}.csv", csv_text(PROJECTION_HEADER, rows))]
    rows = [(f"{k.region}/{k.space_type}", k.year, *_mean_band(v)) for k, v in cells]
    rows += [("total", y, *_mean_band(v)) for y, v in sorted(result.totals.items())]
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]


@render.register
def _(result: Eq1Result, fmt, name=None):
    stem = name or "bottomup"
    if fmt == "json":
        return [(f"{stem}.json", json_text(result.to_dict() | {
            "region_shares": result.shares_by_region(),
            "space_type_kwh": result.by_space_type()}))]
    cells = sorted(result.breakdown.items())
    if fmt == "csv":
        rows = ((result.year, r, st, v, v, v) for (r, st), v in cells)
        return [(f"{stem}.csv", csv_text(PROJECTION_HEADER, rows))]
    rows = [(f"{r}/{st}", result.year, v, v, v) for (r, st), v in cells]
    rows.append(("total", result.year, result.total, result.total, result.total))
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]


@render.register
def _(result: DecompositionResult, fmt, name=None):
    stem = name or "ida"
    if fmt == "json":
        return [(f"{stem}.json", json_text(result.to_dict()))]
    if fmt == "csv":
        rows = ((f, result.additive[f], result.multiplicative[f]) for f in result.factors)
        return [(f"{stem}.csv", csv_text(IDA_CSV_HEADER, rows))]
    rows = [("additive_kwh", f, result.additive[f], "", "") for f in result.factors]
    rows += [("multiplicative", f, result.multiplicative[f], "", "") for f in result.factors]
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]


@render.register
def _(result: CalibrationRun, fmt, name=None):
    stem = name or "calibration"
    if fmt == "json":
        return [(f"{stem}.json", json_text(result.to_dict()))]
    if fmt == "csv":
        files = []
        for c in result.chains:
            rows = ((c.burn_in + i, *row, lp)
                    for i, (row, lp) in enumerate(zip(c.samples.tolist(), c.log_posteriors)))
            files.append((f"{stem}_chain_{c.seed}.csv",
                          csv_text(("iteration", *c.names, "log_posterior"), rows)))
        return files
    summary = result.to_dict()
    rows = [(n, "posterior", summary["mean"][n], summary["quantiles"][n]["0.025"],
             summary["quantiles"][n]["0.975"]) for n in summary["names"]]
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]


def _elasticities(result):
    return isinstance(result, list) and all(isinstance(e, Elasticity) for e in result)


@render.register
def _(result: list, fmt, name=None):
    if not _elasticities(result):
        raise ValidationError("list results must be sensitivity elasticities")
    stem = name or "sensitivity"
    if fmt == "json":
        return [(f"{stem}.json", json_text(
            {"elasticities": [e._asdict() for e in result]}))]
    if fmt == "csv":
        return [(f"{stem}.csv", csv_text(("parameter", "elasticity", "baseline"), result))]
    rows = (("elasticity", e.name, e.elasticity, "", "") for e in result)
    return [(f"{stem}_plot.csv", csv_text(PLOT_HEADER, rows))]
