"""LMDI-I index decomposition of the change in energy use between two periods.

Each leaf cell (region, space type, class) carries an ordered chain of
positive factors whose product is the cell's energy. With the log-mean weight
``L(a, b) = (a - b) / (ln a - ln b)`` the additive effect of factor ``k`` is

    sum over cells of L(E_T, E_0) * ln(x_k,T / x_k,0)

and the multiplicative effect is the exponential of the same sum with weights
``L(E_T, E_0) / L(sum E_T, sum E_0)``. Both decompositions are exact: the
additive effects sum to ``E_T - E_0`` and the multiplicative effects multiply
to ``E_T / E_0``.
"""

import csv
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import (FactorMismatch, MalformedRow, MissingFile, NonPositiveInput,
                     ValidationError, ZeroAfterSubstitution)

ZERO_SUBSTITUTE = 1e-10
SIX_FACTORS = ("activity", "regional_share", "space_type_share",
               "equipment_density", "energy_intensity", "pue")
IDA_HEADER = ("period", "region", "space_type", "class_id", "factor_name", "value")


def log_mean(a, b):
    """Logarithmic mean of two positive numbers."""
    if not (a > 0 and b > 0):
        raise NonPositiveInput(f"log_mean needs positive inputs, got {a}, {b}")
    if a == b:
        return float(a)
    r = math.log(a / b)
    if abs(r) < 1e-6:
        # series of (a - b) / ln(a/b) around a == b, avoids cancellation
        value = b * (1.0 + r / 2.0 + r * r / 6.0 + r**3 / 24.0)
    else:
        value = (a - b) / r
    return min(max(value, min(a, b)), max(a, b))


@dataclass
class IdaDataset:
    """Two periods of factor values per leaf cell.

    ``values[period]`` maps a ``(region, space_type, class_id)`` cell to a tuple
    aligned with ``factors``. ``periods`` is ``(start, end)``.
    """

    periods: tuple
    factors: tuple
    values: dict
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.periods) != 2 or self.periods[0] == self.periods[1]:
            raise FactorMismatch("need exactly two distinct periods")
        self.factors = tuple(self.factors)
        if len(set(self.factors)) != len(self.factors) or not self.factors:
            raise FactorMismatch("factor names must be unique and non-empty")
        p0, p1 = self.periods
        if set(self.values) != {p0, p1}:
            raise FactorMismatch(f"values must be keyed by periods {self.periods}")
        if set(self.values[p0]) != set(self.values[p1]):
            raise FactorMismatch("cells differ between periods")
        if not self.values[p0]:
            raise ValidationError("dataset has no cells")
        m = len(self.factors)
        clean = {}
        for p in self.periods:
            clean[p] = {}
            for cell, xs in self.values[p].items():
                xs = tuple(float(x) for x in xs)
                if len(xs) != m:
                    raise FactorMismatch(f"cell {cell} in period {p} has {len(xs)} factors")
                if any(not math.isfinite(x) or x < 0 for x in xs):
                    raise ValidationError(f"factor values must be finite and >= 0 ({cell})")
                if any(x == 0 for x in xs):
                    self.warnings.append(
                        f"zero factor in cell {cell} period {p} replaced by {ZERO_SUBSTITUTE}")
                    xs = tuple(ZERO_SUBSTITUTE if x == 0 else x for x in xs)
                clean[p][tuple(cell)] = xs
        self.values = clean

    @property
    def cells(self):
        return sorted(self.values[self.periods[0]])

    def energy(self, period, cell):
        return math.prod(self.values[period][cell])

    def total(self, period):
        return math.fsum(self.energy(period, c) for c in self.cells)

    def reversed(self):
        return IdaDataset(self.periods[::-1], self.factors,
                          {p: dict(v) for p, v in self.values.items()})

    def reordered(self, factors):
        if sorted(factors) != sorted(self.factors):
            raise FactorMismatch(f"factor order {list(factors)} must be a permutation of "
                                 f"{list(self.factors)}")
        idx = [self.factors.index(f) for f in factors]
        return IdaDataset(self.periods, tuple(factors),
                          {p: {c: tuple(xs[i] for i in idx) for c, xs in v.items()}
                           for p, v in self.values.items()})

    def subset(self, predicate):
        return IdaDataset(self.periods, self.factors,
                          {p: {c: xs for c, xs in v.items() if predicate(c)}
                           for p, v in self.values.items()})

    def check_shares(self, tol=1e-9):
        """For the default six-factor chain, verify share factors sum to 1."""
        if self.factors != SIX_FACTORS:
            return
        for p in self.periods:
            region_share, st_share = {}, defaultdict(dict)
            for (r, st, _), xs in self.values[p].items():
                region_share[r] = xs[1]
                st_share[r][st] = xs[2]
            if abs(math.fsum(region_share.values()) - 1) > tol:
                raise ValidationError(f"regional shares in period {p} do not sum to 1")
            for r, shares in st_share.items():
                if abs(math.fsum(shares.values()) - 1) > tol:
                    raise ValidationError(
                        f"space-type shares of {r} in period {p} do not sum to 1")

    @classmethod
    def from_csv(cls, path):
        path = os.fspath(path)
        if not os.path.isfile(path):
            raise MissingFile(f"IDA dataset not found: {path}")
        raw = defaultdict(dict)
        order = {}
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            if tuple(h.strip() for h in next(reader, ())) != IDA_HEADER:
                raise MalformedRow(1, f"header must be {','.join(IDA_HEADER)}")
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(IDA_HEADER):
                    raise MalformedRow(line, f"expected {len(IDA_HEADER)} fields")
                period, region, st, cid, fname = (c.strip() for c in row[:5])
                try:
                    value = float(row[5])
                except ValueError as exc:
                    raise MalformedRow(line, str(exc)) from None
                cell = (region, st, cid)
                if fname in raw[(period, cell)]:
                    raise MalformedRow(line, f"duplicate factor {fname!r} for {cell}")
                raw[(period, cell)][fname] = value
                order.setdefault((period, cell), []).append(fname)
        periods = sorted({p for p, _ in raw}, key=_period_key)
        if len(periods) != 2:
            raise FactorMismatch(f"need exactly two periods, found {periods}")
        chains = {tuple(v) for v in order.values()}
        if len(chains) != 1:
            raise FactorMismatch("factor chains differ between cells or periods")
        factors = chains.pop()
        values = {_period_value(p): {} for p in periods}
        for (p, cell), fac in raw.items():
            values[_period_value(p)][cell] = tuple(fac[f] for f in factors)
        return cls(tuple(_period_value(p) for p in periods), factors, values)

    def to_csv(self, path):
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(IDA_HEADER)
            for p in self.periods:
                for cell in self.cells:
                    for f, x in zip(self.factors, self.values[p][cell]):
                        w.writerow([p, *cell, f, repr(x)])


def _period_key(p):
    try:
        return (0, float(p), p)
    except ValueError:
        return (1, 0.0, p)


def _period_value(p):
    try:
        return int(p)
    except ValueError:
        return p


@dataclass
class DecompositionResult:
    factors: tuple
    additive: dict
    multiplicative: dict
    delta: float
    ratio: float
    energy_start: float
    energy_end: float
    periods: tuple
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "periods": list(self.periods),
            "energy_start_kwh": self.energy_start, "energy_end_kwh": self.energy_end,
            "delta_kwh": self.delta, "ratio": self.ratio,
            "effects": [{"factor": f, "additive_kwh": self.additive[f],
                         "multiplicative": self.multiplicative[f]} for f in self.factors],
            "warnings": list(self.warnings),
        }


def _weights(data):
    p0, p1 = data.periods
    cells = data.cells
    e0 = np.array([data.energy(p0, c) for c in cells])
    e1 = np.array([data.energy(p1, c) for c in cells])
    if np.any(e0 <= 0) or np.any(e1 <= 0):
        raise ZeroAfterSubstitution("a cell's energy underflows to zero after substitution")
    x0 = np.array([data.values[p0][c] for c in cells])
    x1 = np.array([data.values[p1][c] for c in cells])
    w = np.array([log_mean(b, a) for a, b in zip(e0, e1)])
    return e0, e1, w, np.log(x1 / x0)


def _decompose(data):
    e0, e1, w, logr = _weights(data)
    E0, E1 = math.fsum(e0), math.fsum(e1)
    W = log_mean(E1, E0)
    additive, multiplicative = {}, {}
    for k, f in enumerate(data.factors):
        terms = w * logr[:, k]
        additive[f] = math.fsum(terms)
        multiplicative[f] = math.exp(math.fsum(terms / W))
    return DecompositionResult(data.factors, additive, multiplicative, E1 - E0, E1 / E0,
                               E0, E1, data.periods, list(data.warnings))


def lmdi_additive(data):
    """Additive LMDI-I: effects in energy units summing to the total change.

    ``multiplicative`` on the returned result is filled in as well.
    """
    return _decompose(data)


def lmdi_multiplicative(data):
    """Multiplicative LMDI-I: dimensionless effects multiplying to E_T / E_0."""
    return _decompose(data)


def decompose_by(data, level="region"):
    """Run the decomposition per group and report cross-level consistency.

    ``level`` is ``"region"`` or ``"region_space_type"``. Returns
    ``(per_group_results, max_abs_gap)`` where the gap compares the sum of
    group additive effects with the whole-dataset additive effects.
    """
    if level == "region":
        keyf = lambda c: (c[0],)  # noqa: E731
    elif level == "region_space_type":
        keyf = lambda c: (c[0], c[1])  # noqa: E731
    else:
        raise ValidationError(f"unknown level {level!r}")
    groups = sorted({keyf(c) for c in data.cells})
    results = {g: _decompose(data.subset(lambda c, g=g: keyf(c) == g)) for g in groups}
    whole = _decompose(data)
    gap = max(abs(math.fsum(r.additive[f] for r in results.values()) - whole.additive[f])
              for f in data.factors)
    return results, gap


def six_factor_dataset(periods, activity, devices, it_energy, pue):
    """Build the default six-factor dataset from physical quantities.

    Parameters
    ----------
    periods : (start, end)
    activity : {(period, region, space_type): workload}
        Activity measure (e.g. compute instances) served in each space type.
    devices : {(period, region, space_type, class_id): quantity}
    it_energy : {(period, region, space_type, class_id): kWh}
        IT energy of each class before facility overhead.
    pue : {(period, region, space_type): PUE}

    The chain is activity Q, regional share Q_r/Q, space-type share Q_rj/Q_r,
    equipment density n_rji/Q_rj, energy intensity kWh/n_rji, and PUE; the
    product is IT energy times PUE.
    """
    values = {}
    for p in periods:
        q_rj = {(r, st): a for (pp, r, st), a in activity.items() if pp == p}
        q_r = defaultdict(float)
        for (r, _), a in q_rj.items():
            q_r[r] += a
        q = math.fsum(q_r.values())
        cells = {}
        for (pp, r, st, cid), n in devices.items():
            if pp != p:
                continue
            e = it_energy[(p, r, st, cid)]
            qrj = q_rj[(r, st)]
            cells[(r, st, cid)] = (
                q, q_r[r] / q, qrj / q_r[r],
                n / qrj if qrj > 0 else 0.0,
                e / n if n > 0 else 0.0,
                pue[(p, r, st)],
            )
        values[p] = cells
    return IdaDataset(tuple(periods), SIX_FACTORS, values)


class LmdiDecomposer(BaseEstimator):
    """Estimator wrapper: ``fit`` an :class:`IdaDataset`, read the effects.

    Attributes
    ----------
    result_ : DecompositionResult
    additive_ : dict of factor -> kWh
    multiplicative_ : dict of factor -> ratio
    """

    def fit(self, X, y=None):
        if not isinstance(X, IdaDataset):
            raise ValidationError("LmdiDecomposer.fit expects an IdaDataset")
        self.result_ = _decompose(X)
        self.additive_ = self.result_.additive
        self.multiplicative_ = self.result_.multiplicative
        return self

    def transform(self, X):
        """Additive effects as a 1 x n_factors array."""
        check_is_fitted(self, "result_")
        res = _decompose(X)
        return np.array([[res.additive[f] for f in res.factors]])

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)

