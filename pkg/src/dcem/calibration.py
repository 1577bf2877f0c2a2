"""Bayesian calibration of simulator parameters by random-walk Metropolis.

The likelihood is Gaussian with known per-observation noise. When
``discrepancy_enabled`` is set, a constant bias ``delta`` is added to every
simulator prediction and sampled alongside the parameters, which is the
one-number reduction of a model-discrepancy term.
"""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (AllRejected, ConstantChain, MalformedRow, MissingFile,
                     SimulatorFailure, ValidationError)
from .uncertainty import QUANTILE_LEVELS, Distribution, nearest_rank

BURN_IN_FRACTION = 0.2
DELTA = "delta"
_LOG_2PI = math.log(2 * math.pi)


@dataclass
class CalibrationProblem:
    """Simulator, priors and observations.

    ``simulator(x, theta)`` returns the prediction for one input row ``x``
    given a name -> value dict ``theta``. With ``vectorized=True`` it is called
    once with the whole ``(n_obs, n_inputs)`` array and must return ``n_obs``
    predictions.
    """

    simulator: object
    priors: dict
    x: np.ndarray
    y: np.ndarray
    noise_sd: np.ndarray
    discrepancy_enabled: bool = False
    discrepancy_prior: Distribution = field(
        default_factory=lambda: Distribution.normal(0.0, 1.0))
    vectorized: bool = False

    def __post_init__(self):
        self.priors = {k: (v if isinstance(v, Distribution) else Distribution.from_json(v))
                       for k, v in sorted(self.priors.items())}
        if DELTA in self.priors:
            raise ValidationError(f"{DELTA!r} is reserved for the discrepancy term")
        if not self.priors:
            raise ValidationError("need at least one calibration parameter")
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.noise_sd = np.broadcast_to(
            np.asarray(self.noise_sd, dtype=np.float64), self.y.shape).copy()
        if len(self.y) < 1:
            raise ValidationError("need at least one observation")
        if len(self.x) != len(self.y):
            raise ValidationError("x and y lengths differ")
        if np.any(~(self.noise_sd > 0)):
            raise ValidationError("noise_sd must be > 0")
        if not isinstance(self.discrepancy_prior, Distribution):
            self.discrepancy_prior = Distribution.from_json(self.discrepancy_prior)

    @classmethod
    def from_observations(cls, simulator, priors, observations, **kwargs):
        """Build from a list of ``(x, y_observed, noise_sd)`` triples."""
        xs, ys, sds = zip(*observations)
        return cls(simulator, priors, np.array(xs, dtype=float), ys, sds, **kwargs)

    @property
    def names(self):
        names = list(self.priors)
        if self.discrepancy_enabled:
            names.append(DELTA)
        return names

    def prior(self, name):
        return self.discrepancy_prior if name == DELTA else self.priors[name]

    def predict(self, theta):
        params = {k: theta[k] for k in self.priors}
        if self.vectorized:
            try:
                pred = np.asarray(self.simulator(self.x, params), dtype=np.float64).reshape(-1)
            except Exception as exc:
                raise SimulatorFailure(self.x, exc) from exc
            if pred.shape != self.y.shape:
                raise SimulatorFailure(self.x, ValueError(
                    f"simulator returned {pred.size} values for {self.y.size} observations"))
        else:
            pred = np.empty(len(self.y))
            for i, row in enumerate(self.x):
                xi = row[0] if len(row) == 1 else row
                try:
                    pred[i] = self.simulator(xi, params)
                except Exception as exc:
                    raise SimulatorFailure(xi, exc) from exc
        if self.discrepancy_enabled:
            pred = pred + theta[DELTA]
        return pred


def log_prior(problem, theta):
    total = 0.0
    for name in problem.names:
        lp = problem.prior(name).logpdf(theta[name])
        if lp == -math.inf:
            return -math.inf
        total += lp
    return total


def log_likelihood(problem, theta):
    resid = (problem.y - problem.predict(theta)) / problem.noise_sd
    return float(-0.5 * np.sum(resid**2) - np.sum(np.log(problem.noise_sd))
                 - 0.5 * len(resid) * _LOG_2PI)


def log_posterior(problem, theta):
    """Unnormalised log posterior; ``-inf`` outside the prior support."""
    if isinstance(theta, (list, tuple, np.ndarray)):
        theta = dict(zip(problem.names, map(float, theta)))
    lp = log_prior(problem, theta)
    if lp == -math.inf:
        return -math.inf
    return lp + log_likelihood(problem, theta)


def map_estimate(problem, start=None):
    """Posterior mode by Nelder-Mead from the prior means (or ``start``)."""
    names = problem.names
    x0 = np.array([problem.prior(n).mean() for n in names] if start is None else start,
                  dtype=float)

    def neg(v):
        lp = log_posterior(problem, dict(zip(names, v)))
        return 1e300 if lp == -math.inf else -lp

    res = optimize.minimize(neg, x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000,
                                     "maxfev": 40000})
    return dict(zip(names, map(float, res.x)))


@dataclass
class PosteriorChain:
    names: list
    samples: np.ndarray          # (n_kept, n_params)
    log_posteriors: np.ndarray
    acceptance_rate: float
    seed: int
    burn_in: int

    def __len__(self):
        return len(self.samples)

    def column(self, name):
        return self.samples[:, self.names.index(name)]

    def mean(self):
        return {n: float(np.mean(self.column(n))) for n in self.names}

    def sd(self):
        return {n: float(np.std(self.column(n), ddof=1)) if len(self) > 1 else 0.0
                for n in self.names}

    def quantiles(self):
        out = {}
        for n in self.names:
            col = np.sort(self.column(n))
            out[n] = {f"{q:g}": nearest_rank(col, q) for q in QUANTILE_LEVELS}
        return out

    def credible_interval(self, name, level=0.95):
        col = np.sort(self.column(name))
        a = (1 - level) / 2
        return nearest_rank(col, a), nearest_rank(col, 1 - a)

    def summary(self):
        return {"names": list(self.names), "n_samples": len(self), "seed": self.seed,
                "burn_in": self.burn_in, "acceptance_rate": self.acceptance_rate,
                "mean": self.mean(), "sd": self.sd(), "quantiles": self.quantiles()}

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", *self.names, "log_posterior"])
            for i, (row, lp) in enumerate(zip(self.samples, self.log_posteriors)):
                w.writerow([self.burn_in + i, *map(repr, map(float, row)), repr(float(lp))])


def metropolis_calibrate(problem, chain_length, proposal_sd, seed):
    """Random-walk Metropolis with a diagonal Gaussian proposal.

    Parameters with a point-mass prior are held at their value and not
    proposed. The chain starts at the prior means; the first 20% of
    iterations are discarded and the acceptance rate is computed on the rest.

    Parameters
    ----------
    problem : CalibrationProblem
    chain_length : int
        Total iterations including burn-in, >= 100.
    proposal_sd : dict or sequence
        Proposal standard deviation per free parameter (``"delta"`` included
        when the discrepancy term is enabled).
    seed : int
    """
    if chain_length < 100:
        raise ValidationError("chain_length must be >= 100")
    names = problem.names
    free = [n for n in names if not problem.prior(n).is_degenerate]
    if isinstance(proposal_sd, dict):
        missing = [n for n in free if n not in proposal_sd]
        if missing:
            raise ValidationError(f"proposal_sd missing entries for {missing}")
        step = np.array([float(proposal_sd[n]) for n in free])
    else:
        step = np.broadcast_to(np.asarray(proposal_sd, dtype=float), (len(free),)).copy()
    if np.any(~(step > 0)):
        raise ValidationError("proposal_sd must be > 0 for every free parameter")
    free_idx = np.array([names.index(n) for n in free], dtype=int)

    rng = np.random.default_rng(seed)
    current = np.array([problem.prior(n).mean() for n in names], dtype=float)
    current_lp = log_posterior(problem, current)
    if current_lp == -math.inf:
        raise ValidationError("prior means have zero posterior density")
    burn = int(BURN_IN_FRACTION * chain_length)
    kept = chain_length - burn
    samples = np.empty((kept, len(names)))
    lps = np.empty(kept)
    accepted = 0
    for it in range(chain_length):
        if len(free):
            proposal = current.copy()
            proposal[free_idx] += step * rng.standard_normal(len(free))
            lp = log_posterior(problem, proposal)
            if math.log(rng.random()) < lp - current_lp:
                current, current_lp = proposal, lp
                if it >= burn:
                    accepted += 1
        if it >= burn:
            samples[it - burn] = current
            lps[it - burn] = current_lp
    rate = accepted / kept if len(free) else 1.0
    if rate == 0.0:
        raise AllRejected("no proposal accepted after burn-in; proposal_sd is likely too large")
    return PosteriorChain(names, samples, lps, rate, int(seed), burn)


def _autocov(x):
    n = len(x)
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    return acov


def chain_diagnostics(chains):
    """Split-R-hat and effective sample size per parameter.

    R-hat uses the split-chain between/within variance ratio. ESS uses the
    multi-chain autocorrelation estimate truncated at the first non-positive
    sum of adjacent-lag pairs.
    """
    chains = list(chains)
    if len(chains) < 2:
        raise ValidationError("need at least two chains")
    n = len(chains[0])
    if any(len(c) != n for c in chains) or n < 100:
        raise ValidationError("chains must have equal post-burn-in length >= 100")
    names = chains[0].names
    out = {}
    for name in names:
        draws = np.array([c.column(name) for c in chains])     # (m, n)
        half = n // 2
        split = np.concatenate([draws[:, :half], draws[:, n - half:]])
        w_split = split.var(axis=1, ddof=1).mean()
        if w_split == 0 or draws.var(axis=1, ddof=1).min() == 0:
            raise ConstantChain(f"zero within-chain variance for {name!r}; R-hat undefined")
        b_split = half * split.mean(axis=1).var(ddof=1)
        var_plus = (half - 1) / half * w_split + b_split / half
        rhat = math.sqrt(var_plus / w_split)

        m = len(draws)
        acov = np.array([_autocov(d) for d in draws])
        w = draws.var(axis=1, ddof=1).mean()
        vp = (n - 1) / n * w + draws.mean(axis=1).var(ddof=1)
        rho = 1.0 - (w - acov.mean(axis=0)) / vp
        rho[0] = 1.0
        total = 0.0
        t = 0
        while t + 1 < n:
            pair = rho[t] + rho[t + 1]
            if pair <= 0:
                break
            total += pair
            t += 2
        tau = -1.0 + 2.0 * total
        ess = m * n / tau if tau > 0 else float(m * n)
        out[name] = {"rhat": rhat, "ess": ess}
    return out


def load_observations(path):
    """Read an observations CSV: input columns, then ``y`` and ``noise_sd``."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"observations file not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if len(header) < 3 or header[-2:] != ["y", "noise_sd"]:
            raise MalformedRow(1, "header must be <x columns...>,y,noise_sd")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
    if not rows:
        raise ValidationError("observations file has no rows")
    data = np.array(rows)
    return header[:-2], data[:, :-2], data[:, -2], data[:, -1]


def linear_simulator(x, theta):
    """``intercept + sum_k slope_k * x_k`` with parameters ``intercept, slope_0, ...``."""
    x = np.atleast_2d(x)
    out = np.full(len(x), theta.get("intercept", 0.0))
    for k in range(x.shape[1]):
        out = out + theta.get(f"slope_{k}", 0.0) * x[:, k]
    return out


def server_power_simulator(x, theta):
    """Idle-to-peak server power at utilization ``x[:, 0]``."""
    u = np.atleast_2d(x)[:, 0]
    return theta["p_idle"] + (theta["p_max"] - theta["p_idle"]) * u


SIMULATORS = {"linear": linear_simulator, "server_power": server_power_simulator}


class BayesianCalibrator(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`metropolis_calibrate`.

    ``fit(X, y)`` samples the posterior; ``predict`` evaluates the simulator
    at the posterior mean (plus the mean bias when the discrepancy is on).

    Parameters
    ----------
    simulator : callable or str
        Vectorised ``simulator(X, theta)``, or a name in ``SIMULATORS``.
    priors : dict
    noise_sd : float or array-like
    proposal_sd : dict or sequence
    chain_length : int, default=20000
    seed : int, default=0
    discrepancy_prior : Distribution, optional
        Enables the constant bias term when given.
    """

    def __init__(self, simulator="linear", priors=None, noise_sd=1.0, proposal_sd=0.1,
                 chain_length=20000, seed=0, discrepancy_prior=None):
        self.simulator = simulator
        self.priors = priors
        self.noise_sd = noise_sd
        self.proposal_sd = proposal_sd
        self.chain_length = chain_length
        self.seed = seed
        self.discrepancy_prior = discrepancy_prior

    def _problem(self, X, y):
        sim = SIMULATORS[self.simulator] if isinstance(self.simulator, str) else self.simulator
        kwargs = {}
        if self.discrepancy_prior is not None:
            kwargs = {"discrepancy_enabled": True,
                      "discrepancy_prior": self.discrepancy_prior}
        return CalibrationProblem(sim, self.priors or {}, X, y, self.noise_sd,
                                  vectorized=True, **kwargs)

    def fit(self, X, y):
        self.problem_ = self._problem(X, y)
        self.chain_ = metropolis_calibrate(self.problem_, self.chain_length,
                                           self.proposal_sd, self.seed)
        self.posterior_mean_ = self.chain_.mean()
        self.posterior_sd_ = self.chain_.sd()
        return self

    def predict(self, X):
        check_is_fitted(self, "chain_")
        X = np.asarray(X, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        theta = {k: self.posterior_mean_[k] for k in self.problem_.priors}
        pred = np.asarray(self.problem_.simulator(X, theta), dtype=float).reshape(-1)
        if self.problem_.discrepancy_enabled:
            pred = pred + self.posterior_mean_[DELTA]
        return pred


@dataclass
class CalibrationRun:
    """Chains from several seeds plus their convergence diagnostics."""

    chains: list
    diagnostics: dict = None

    def to_dict(self):
        main = self.chains[0]
        pooled = np.concatenate([c.samples for c in self.chains])
        out = {"names": list(main.names), "n_chains": len(self.chains),
               "seeds": [c.seed for c in self.chains],
               "n_samples_per_chain": len(main), "burn_in": main.burn_in,
               "acceptance_rate": {str(c.seed): c.acceptance_rate for c in self.chains},
               "mean": {}, "sd": {}, "quantiles": {}}
        for j, n in enumerate(main.names):
            col = np.sort(pooled[:, j])
            out["mean"][n] = math.fsum(col) / len(col)
            out["sd"][n] = float(np.std(col, ddof=1))
            out["quantiles"][n] = {f"{q:g}": nearest_rank(col, q) for q in QUANTILE_LEVELS}
        if self.diagnostics is not None:
            out["diagnostics"] = self.diagnostics
        return out
