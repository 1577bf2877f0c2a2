"""Parametric uncertainty: distributions, seeded Monte Carlo, summary statistics.

Draw ``i`` of a run takes its randomness from a Philox generator keyed by the
run seed with the counter set from ``i``. Draw values therefore depend only on
``(seed, i)``, never on worker count or scheduling. Every parameter consumes
exactly one uniform variate per draw (inverse-CDF sampling), in sorted
parameter-name order.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import ModelFailure, ValidationError, ZeroReported

QUANTILE_LEVELS = (0.025, 0.25, 0.5, 0.75, 0.975)
_U64 = 2**64


@dataclass(frozen=True)
class Distribution:
    """One of ``point``, ``uniform``, ``triangular`` or ``trunc_normal``.

    Build instances with the classmethods; ``params`` holds the numbers in
    the order ``(v)``, ``(a, b)``, ``(a, m, b)`` or ``(mu, sigma, lo, hi)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        kind = self.kind
        arity = {"point": 1, "uniform": 2, "triangular": 3, "trunc_normal": 4}
        if kind not in arity:
            raise ValidationError(f"unknown distribution kind {kind!r}")
        if len(p) != arity[kind]:
            raise ValidationError(f"{kind} takes {arity[kind]} parameters, got {len(p)}")
        if kind == "point" and not math.isfinite(p[0]):
            raise ValidationError("point value must be finite")
        elif kind == "uniform" and not (math.isfinite(p[0]) and math.isfinite(p[1])
                                        and p[0] < p[1]):
            raise ValidationError(f"uniform needs finite a < b, got {p}")
        elif kind == "triangular":
            a, m, b = p
            if not (math.isfinite(a) and math.isfinite(b) and a <= m <= b and a < b):
                raise ValidationError(f"triangular needs a <= m <= b and a < b, got {p}")
        elif kind == "trunc_normal":
            mu, sigma, lo, hi = p
            if not (math.isfinite(mu) and sigma > 0 and math.isfinite(sigma) and lo < hi):
                raise ValidationError(f"trunc_normal needs sigma > 0 and lo < hi, got {p}")

    @classmethod
    def point(cls, v):
        return cls("point", (v,))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (a, b))

    @classmethod
    def triangular(cls, a, m, b):
        return cls("triangular", (a, m, b))

    @classmethod
    def trunc_normal(cls, mu, sigma, lo=-math.inf, hi=math.inf):
        return cls("trunc_normal", (mu, sigma, lo, hi))

    @classmethod
    def normal(cls, mu, sigma):
        return cls.trunc_normal(mu, sigma)

    @classmethod
    def from_json(cls, obj):
        """Parse ``3.5``, ``{"point": 3.5}``, ``{"uniform": [a, b]}``,
        ``{"triangular": [a, m, b]}``, ``{"trunc_normal": [mu, sd, lo, hi]}``
        or ``{"normal": [mu, sd]}``. ``null`` bounds mean unbounded."""
        if isinstance(obj, (int, float)) and not isinstance(obj, bool):
            return cls.point(obj)
        if not isinstance(obj, dict) or len(obj) != 1:
            raise ValidationError(f"cannot parse distribution {obj!r}")
        (kind, args), = obj.items()
        kind = kind.lower().replace("-", "_")
        if kind == "truncnormal":
            kind = "trunc_normal"
        if not isinstance(args, (list, tuple)):
            args = [args]
        if kind == "normal":
            return cls.normal(*args)
        if kind == "trunc_normal" and len(args) == 4:
            mu, sd, lo, hi = args
            args = [mu, sd, -math.inf if lo is None else lo, math.inf if hi is None else hi]
        return cls(kind, tuple(args))

    def to_json(self):
        if self.kind == "trunc_normal":
            mu, sd, lo, hi = self.params
            return {"trunc_normal": [mu, sd, lo if math.isfinite(lo) else None,
                                     hi if math.isfinite(hi) else None]}
        return {self.kind: list(self.params)}

    @property
    def is_degenerate(self):
        return self.kind == "point"

    def support(self):
        p = self.params
        if self.kind == "point":
            return p[0], p[0]
        if self.kind == "uniform":
            return p
        if self.kind == "triangular":
            return p[0], p[2]
        return p[2], p[3]

    def contains(self, x):
        lo, hi = self.support()
        return lo <= x <= hi

    def mean(self):
        p = self.params
        if self.kind == "point":
            return p[0]
        if self.kind == "uniform":
            return 0.5 * (p[0] + p[1])
        if self.kind == "triangular":
            return sum(p) / 3.0
        mu, sd, lo, hi = p
        return float(stats.truncnorm.mean((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd))

    def ppf(self, u):
        """Inverse CDF at ``u`` in [0, 1)."""
        p = self.params
        if self.kind == "point":
            return p[0]
        if self.kind == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if self.kind == "triangular":
            a, m, b = p
            fm = (m - a) / (b - a)
            if u < fm:
                return a + math.sqrt(u * (b - a) * (m - a))
            return b - math.sqrt((1.0 - u) * (b - a) * (b - m))
        mu, sd, lo, hi = p
        alpha, beta = (lo - mu) / sd, (hi - mu) / sd
        pa, pb = special.ndtr(alpha), special.ndtr(beta)
        if pb - pa > 1e-6:
            x = mu + sd * special.ndtri(pa + u * (pb - pa))
        else:
            x = float(stats.truncnorm.ppf(u, alpha, beta, loc=mu, scale=sd))
        return min(max(float(x), lo), hi)

    def logpdf(self, x):
        p = self.params
        if not self.contains(x):
            return -math.inf
        if self.kind == "point":
            return 0.0
        if self.kind == "uniform":
            return -math.log(p[1] - p[0])
        if self.kind == "triangular":
            a, m, b = p
            if x < m:
                dens = 2 * (x - a) / ((b - a) * (m - a))
            elif x > m:
                dens = 2 * (b - x) / ((b - a) * (b - m))
            else:
                dens = 2 / (b - a)
            return math.log(dens) if dens > 0 else -math.inf
        mu, sd, lo, hi = p
        z = (x - mu) / sd
        log_mass = _log_normal_mass((lo - mu) / sd, (hi - mu) / sd)
        return -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(sd) - log_mass


def _log_normal_mass(alpha, beta):
    """log(Phi(beta) - Phi(alpha)), computed in whichever tail is accurate."""
    if beta <= 0:
        hi, lo = special.log_ndtr(beta), special.log_ndtr(alpha)
    else:
        hi, lo = special.log_ndtr(-alpha), special.log_ndtr(-beta)
    return float(hi + np.log1p(-np.exp(lo - hi)))


def substream(seed, index):
    """Generator for draw ``index`` of a run seeded with ``seed``."""
    if not 0 <= seed < _U64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(index)]))


def sample(dist, stream):
    """Draw one value from ``dist`` using exactly one uniform from ``stream``."""
    return dist.ppf(stream.random())


def draw_parameters(params, seed, index):
    """The parameter vector of draw ``index``, as a name -> value dict."""
    rng = substream(seed, index)
    return {name: sample(params[name], rng) for name in sorted(params)}


@dataclass(frozen=True)
class McSummary:
    n: int
    seed: int
    mean: object
    std_dev: object
    quantiles: dict
    draws: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def band(self):
        """The 2.5-97.5 percentile uncertainty band."""
        return self.quantiles[0.025], self.quantiles[0.975]

    @property
    def median(self):
        return self.quantiles[0.5]

    def to_dict(self):
        return {"n": self.n, "seed": self.seed, "mean": self.mean, "std_dev": self.std_dev,
                "quantiles": {f"{q:g}": v for q, v in self.quantiles.items()}}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def nearest_rank(sorted_values, q):
    n = len(sorted_values)
    k = max(1, math.ceil(q * n))
    return float(sorted_values[k - 1])


def summarize(draws, seed):
    """Summary statistics of a 1-D draw vector.

    The mean uses ``math.fsum`` and the standard deviation is the ``n - 1``
    sample estimate (0 for a single draw), so the result is independent of
    the order in which draws were produced.
    """
    draws = np.asarray(draws, dtype=np.float64)
    n = len(draws)
    if n < 1:
        raise ValidationError("need at least one draw")
    mean = math.fsum(draws) / n
    var = math.fsum((draws - mean) ** 2) / (n - 1) if n > 1 else 0.0
    ordered = np.sort(draws)
    quantiles = {q: nearest_rank(ordered, q) for q in QUANTILE_LEVELS}
    return McSummary(n, int(seed), mean, math.sqrt(var), quantiles, draws)


def monte_carlo_draws(model, params, n, seed, workers=1):
    """Evaluate ``model`` on ``n`` seeded parameter draws.

    ``model`` receives a name -> value dict and returns a real or a 1-D array.
    Returns an array of shape ``(n,)`` or ``(n, k)``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    params = {name: (d if isinstance(d, Distribution) else Distribution.from_json(d))
              for name, d in params.items()}
    substream(seed, 0)  # validates the seed

    def one(i):
        theta = draw_parameters(params, seed, i)
        try:
            return np.asarray(model(theta), dtype=np.float64)
        except Exception as exc:
            raise ModelFailure(i, exc) from exc

    if workers <= 1:
        out = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(n), chunksize=max(1, n // (4 * workers))))
    return np.stack(out)


def run_monte_carlo(model, params, n, seed, workers=1):
    """Monte Carlo propagation of parameter uncertainty through a scalar model."""
    draws = monte_carlo_draws(model, params, n, seed, workers)
    if draws.ndim != 1:
        raise ValidationError("run_monte_carlo needs a scalar model; use monte_carlo_draws")
    return summarize(draws, seed)


def relative_error(predicted, reported):
    if reported == 0:
        raise ZeroReported("reported value is zero")
    return (predicted - reported) / reported
