"""Achievable (minimum) annual PUE over a technology frontier.

The discrete economizer modes are searched exhaustively. For each mode the
remaining axes are enumerated in full when the grid is small enough, and
otherwise searched by coordinate descent over the discretised axes. Ties are
broken by the lexicographically smallest candidate encoding, so the answer
does not depend on evaluation order.
"""

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import EmptyFrontier, ValidationError
from .pue import (DataCenterConfig, EconomizerMode, annual_pue, annual_pue_value,
                  reference_config)
from .validation import weather_arrays

MODE_ORDER = {mode: i for i, mode in enumerate(EconomizerMode)}


@dataclass(frozen=True)
class Frontier:
    """Search space around a base configuration.

    ``grid`` lists explicit values per parameter; ``bounds`` gives ``(lo, hi)``
    ranges discretised at ``n_points`` evenly spaced values, endpoints included.
    Parameter names are those accepted by ``DataCenterConfig.with_params``.
    """

    base: object = field(default_factory=reference_config)
    economizer_modes: tuple = tuple(EconomizerMode)
    grid: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    n_points: int = 20

    def __post_init__(self):
        modes = tuple(EconomizerMode.parse(m) for m in self.economizer_modes)
        object.__setattr__(self, "economizer_modes", tuple(dict.fromkeys(modes)))
        overlap = set(self.grid) & set(self.bounds)
        if overlap:
            raise ValidationError(f"parameters in both grid and bounds: {sorted(overlap)}")
        for name, (lo, hi) in self.bounds.items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValidationError(f"bounds for {name} must be finite with lo <= hi")
        for name, values in self.grid.items():
            if len(values) == 0:
                raise ValidationError(f"grid for {name} is empty")
        if self.n_points < 2 and self.bounds:
            raise ValidationError("n_points must be >= 2")
        # unknown names surface here rather than mid-search
        probe = {name: self.axes()[name][0] for name in self.axes()}
        try:
            self.base.with_params(**probe)
        except ValidationError as exc:
            if "unknown config parameter" in str(exc):
                raise

    @classmethod
    def from_dict(cls, data, base=None):
        """Build from JSON-style data.

        Keys: ``base`` (config document), ``economizer_modes``, ``grid``
        (name -> list of values), ``bounds`` (name -> [lo, hi]), ``n_points``.
        An explicit ``base`` argument wins over the document's.
        """
        unknown = set(data) - {"base", "economizer_modes", "grid", "bounds", "n_points"}
        if unknown:
            raise ValidationError(f"unknown frontier keys: {sorted(unknown)}")
        if base is None:
            base = DataCenterConfig.from_dict(data["base"]) if "base" in data else reference_config()
        try:
            bounds = {k: (float(lo), float(hi)) for k, (lo, hi) in data.get("bounds", {}).items()}
        except (TypeError, ValueError):
            raise ValidationError("frontier bounds must be [lo, hi] pairs") from None
        return cls(base=base,
                   economizer_modes=tuple(data.get("economizer_modes", tuple(EconomizerMode))),
                   grid={k: tuple(v) for k, v in data.get("grid", {}).items()},
                   bounds=bounds, n_points=int(data.get("n_points", 20)))

    def to_dict(self):
        return {"base": self.base.to_dict(),
                "economizer_modes": [m.value for m in self.economizer_modes],
                "grid": {k: list(v) for k, v in sorted(self.grid.items())},
                "bounds": {k: list(v) for k, v in sorted(self.bounds.items())},
                "n_points": self.n_points}

    def axes(self):
        out = {}
        for name, values in self.grid.items():
            out[name] = tuple(sorted({float(v) for v in values}))
        for name, (lo, hi) in self.bounds.items():
            out[name] = tuple(float(v) for v in np.unique(np.linspace(lo, hi, self.n_points)))
        return dict(sorted(out.items()))

    def candidate(self, mode, values):
        """Build the config for ``mode`` and an axis-name -> value mapping."""
        return self.base.with_params(economizer_mode=mode, **values)

    def sample(self, rng, max_tries=1000):
        """Draw one feasible configuration uniformly from the frontier."""
        for _ in range(max_tries):
            mode = self.economizer_modes[rng.integers(len(self.economizer_modes))]
            values = {}
            for name in sorted(self.grid):
                options = sorted(self.grid[name])
                values[name] = float(options[rng.integers(len(options))])
            for name in sorted(self.bounds):
                lo, hi = self.bounds[name]
                values[name] = float(rng.uniform(lo, hi))
            try:
                return self.candidate(mode, values)
            except ValidationError:
                continue
        raise EmptyFrontier("could not draw a feasible frontier sample")


class _Search:
    def __init__(self, frontier, dry_bulb, wet_bulb):
        self.frontier = frontier
        self.dry_bulb = dry_bulb
        self.wet_bulb = wet_bulb
        self.axes = frontier.axes()
        self.names = tuple(self.axes)
        self.cache = {}

    def evaluate(self, mode, idx):
        key = (MODE_ORDER[mode], tuple(self.axes[n][i] for n, i in zip(self.names, idx)))
        if key not in self.cache:
            values = dict(zip(self.names, key[1]))
            try:
                cfg = self.frontier.candidate(mode, values)
            except ValidationError:
                self.cache[key] = math.inf
            else:
                self.cache[key] = annual_pue_value(cfg, self.dry_bulb, self.wet_bulb)
        return self.cache[key], key

    def exhaustive(self, mode):
        ranges = [range(len(self.axes[n])) for n in self.names]
        return min(self.evaluate(mode, idx) for idx in product(*ranges))

    def coordinate_descent(self, mode, n_sweeps):
        idx = []
        for name in self.names:
            base_value = _base_value(self.frontier.base, name)
            values = np.asarray(self.axes[name])
            idx.append(int(np.argmin(np.abs(values - base_value))))
        best = self.evaluate(mode, tuple(idx))
        for _ in range(n_sweeps):
            moved = False
            for k, name in enumerate(self.names):
                trials = []
                for j in range(len(self.axes[name])):
                    cand = list(idx)
                    cand[k] = j
                    trials.append((self.evaluate(mode, tuple(cand)), j))
                (score, j) = min(trials)
                if score < best:
                    best = score
                    if j != idx[k]:
                        idx[k] = j
                        moved = True
            if not moved:
                break
        return best


def _base_value(config, name):
    for obj in (config.cooling, config.power_chain, config):
        if hasattr(obj, name):
            return float(getattr(obj, name))
    raise ValidationError(f"unknown config parameter {name!r}")


def achievable_pue(weather, frontier, *, n_sweeps=3, exhaustive_limit=4096,
                   return_evaluations=False):
    """Find the frontier configuration with the lowest annual PUE.

    Parameters
    ----------
    weather : WeatherSeries or array-like of shape (n_hours, 2 or 3)
    frontier : Frontier
    n_sweeps : int, default=3
        Coordinate-descent sweeps when a mode's grid exceeds ``exhaustive_limit``.
    exhaustive_limit : int, default=4096
        Largest per-mode grid that is enumerated in full.
    return_evaluations : bool, default=False
        Also return the ``{candidate encoding: annual PUE}`` map of every
        candidate evaluated.

    Returns
    -------
    (best_config, PueResult) or (best_config, PueResult, evaluations)
    """
    if not frontier.economizer_modes:
        raise EmptyFrontier("frontier has no economizer modes")
    dry_bulb, wet_bulb = weather_arrays(weather)
    search = _Search(frontier, dry_bulb, wet_bulb)
    size = math.prod(len(v) for v in search.axes.values())
    best = None
    for mode in sorted(frontier.economizer_modes, key=MODE_ORDER.get):
        if size <= exhaustive_limit:
            cand = search.exhaustive(mode)
        else:
            cand = search.coordinate_descent(mode, n_sweeps)
        if best is None or cand < best:
            best = cand
    score, key = best
    if not math.isfinite(score):
        raise EmptyFrontier("no feasible candidate in the frontier")
    mode = list(EconomizerMode)[key[0]]
    config = frontier.candidate(mode, dict(zip(search.names, key[1])))
    result = annual_pue(config, weather)
    if return_evaluations:
        return config, result, dict(search.cache)
    return config, result


class AchievablePue(BaseEstimator):
    """Estimator wrapper: ``fit`` on a weather series finds the best configuration.

    Attributes
    ----------
    best_config_ : DataCenterConfig
    result_ : PueResult
    achievable_pue_ : float
    n_evaluations_ : int
    """

    def __init__(self, frontier=None, n_sweeps=3, exhaustive_limit=4096):
        self.frontier = frontier
        self.n_sweeps = n_sweeps
        self.exhaustive_limit = exhaustive_limit

    def fit(self, X, y=None):
        frontier = Frontier() if self.frontier is None else self.frontier
        cfg, result, evals = achievable_pue(
            X, frontier, n_sweeps=self.n_sweeps,
            exhaustive_limit=self.exhaustive_limit, return_evaluations=True)
        self.best_config_ = cfg
        self.result_ = result
        self.achievable_pue_ = result.annual_pue
        self.n_evaluations_ = len(evals)
        return self

    def predict(self, X):
        check_is_fitted(self, "best_config_")
        return annual_pue(self.best_config_, X).hourly_pue
