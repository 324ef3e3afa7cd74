"""Synthetic right-censored data from partially linear transformation models.

Linear covariates: ``Z1 ~ Bernoulli(0.5)``, ``Z2 ~ Normal(0.5, sd z2_sd)`` with
``z2_sd = 0.5`` by default (this puts ``Var g0(X) / Var beta0'Z`` in [5, 7] for all
three cases; ``z2_sd = sqrt(0.5)`` gives a variance of 0.5 instead).
Nonparametric covariates: five Uniform[0, 2] coordinates joined by a Gaussian
copula with pairwise correlation 0.5.  Event times come from inverting
``F(t) = F_err(H0(t) + beta0'Z + g0(X))`` and censoring is ``Uniform(0, c0)``.

The true transformation is ``H0(t) = log((exp(r t) - 1) / r)`` (``log t`` at
``r = 0``), i.e. ``log t``, ``log(2 exp(t/2) - 2)`` and ``log(exp(t) - 1)`` for
``r = 0, 0.5, 1``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from .data import SurvivalDataset
from .error_family import R_ZERO_THRESHOLD, ErrorModel

CASES = ("linear", "additive", "deep")

# uniform censoring bounds giving ~40% / ~60% censoring, shared by the three cases
C0_TABLE = {
    (0.0, 0.4): 2.95, (0.0, 0.6): 0.85,
    (0.5, 0.4): 2.75, (0.5, 0.6): 0.9,
    (1.0, 0.4): 2.55, (1.0, 0.6): 1.0,
}

N_X = 5
COPULA_RHO = 0.5
Z2_SD = 0.5


def make_rng(seed, *stream) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *stream)``; identical across platforms."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass
class SimDesign:
    n: int = 1000
    r: float = 0.0
    case: str = "deep"
    beta0: tuple = (1.0, -1.0)
    censoring_target: float | None = 0.4
    c0: float | None = None
    seed: int = 0
    z2_sd: float = Z2_SD

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        self.beta0 = tuple(float(b) for b in self.beta0)
        if len(self.beta0) != 2:
            raise ValueError("beta0 must have two components (Z1, Z2)")
        ErrorModel(self.r)

    @property
    def error(self) -> ErrorModel:
        return ErrorModel(self.r)

    def censoring_bound(self) -> float:
        if self.c0 is not None:
            return float(self.c0)
        key = (float(self.r), float(self.censoring_target))
        if key not in C0_TABLE:
            raise ValueError(f"no tabulated c0 for r={self.r}, target={self.censoring_target}; "
                             "set c0 explicitly or use calibrate_c0")
        return C0_TABLE[key]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta0"] = list(self.beta0)
        return d


def sample_covariates(n: int, rng: np.random.Generator, z2_sd: float = Z2_SD):
    z1 = (rng.random(n) < 0.5).astype(float)
    z2 = 0.5 + z2_sd * rng.standard_normal(n)
    corr = np.full((N_X, N_X), COPULA_RHO)
    np.fill_diagonal(corr, 1.0)
    L = np.linalg.cholesky(corr)
    G = rng.standard_normal((n, N_X)) @ L.T
    X = 2.0 * ndtr(G)
    return np.column_stack([z1, z2]), X


def g0(case: str, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    x1, x2, x3, x4, x5 = (X[..., j] for j in range(5))
    if case == "linear":
        return 0.25 * (x1 + 2 * x2 + 3 * x3 + 4 * x4 + 5 * x5 - 15)
    if case == "additive":
        return 2.5 * (np.sin(2 * x1) + np.cos(x2 / 2) / 2 + np.log(x3 ** 2 + 1) / 3
                      + (x4 - x4 ** 3) / 4 + (np.exp(x5) - 1) / 5 - 1.27)
    if case == "deep":
        return 2.45 * (np.sin(2 * x1 * x2) + np.cos(x2 * x3 / 2) / 2 + np.log(x3 * x4 + 1) / 3
                       + (x4 - x3 * x4 * x5) / 4 + (np.exp(x5) - 1) / 5 - 1.16)
    raise ValueError(f"unknown case {case!r}")


def H0(r: float, t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("H0 is defined for t > 0")
    if r < R_ZERO_THRESHOLD:
        return np.log(t)
    return np.log(np.expm1(r * t) / r)


def H0_inverse(r: float, x):
    x = np.asarray(x, dtype=float)
    if r < R_ZERO_THRESHOLD:
        return np.exp(x)
    # log1p(r e^x) / r, written to avoid overflow for large x
    return np.logaddexp(0.0, np.log(r) + x) / r


def _uniform_open(rng, n):
    v = rng.random(n)
    v[v == 0.0] = np.finfo(float).tiny
    return v


def sample_event_time(design: SimDesign, Z, X, rng, v=None) -> np.ndarray:
    Z = np.atleast_2d(Z)
    X = np.atleast_2d(X)
    if v is None:
        v = _uniform_open(rng, Z.shape[0])
    x = design.error.quantile(v) - Z @ np.asarray(design.beta0) - g0(design.case, X)
    return np.maximum(H0_inverse(design.r, x), np.finfo(float).tiny)


def censor(U, c0: float, rng):
    U = np.asarray(U, dtype=float)
    C = c0 * rng.random(U.shape[0])
    C = np.maximum(C, np.finfo(float).tiny)
    return np.minimum(U, C), (U <= C).astype(float)


@dataclass
class SimTruth:
    u_true: np.ndarray
    g0: np.ndarray
    linpred: np.ndarray
    r: float
    case: str
    beta0: tuple = field(default_factory=tuple)

    def H0(self, t):
        return H0(self.r, t)


def simulate(design: SimDesign, rng=None, n: int | None = None):
    """Draw a dataset; returns ``(SurvivalDataset, SimTruth)``.

    Without ``rng`` the stream is ``make_rng(design.seed)``.
    """
    rng = make_rng(design.seed) if rng is None else rng
    n = design.n if n is None else n
    Z, X = sample_covariates(n, rng, design.z2_sd)
    U = sample_event_time(design, Z, X, rng)
    T, delta = censor(U, design.censoring_bound(), rng)
    g = g0(design.case, X)
    data = SurvivalDataset(T, delta, Z, X)
    return data, SimTruth(U, g, Z @ np.asarray(design.beta0), design.r, design.case, design.beta0)


def signal_ratio(design: SimDesign, draws: int = 100_000, rng=None) -> float:
    """Monte Carlo ``Var g0(X) / Var beta0'Z``."""
    rng = make_rng(design.seed, 1) if rng is None else rng
    Z, X = sample_covariates(draws, rng, design.z2_sd)
    return float(np.var(g0(design.case, X)) / np.var(Z @ np.asarray(design.beta0)))


def calibrate_c0(design: SimDesign, target_rate: float, precision: float = 0.005,
                 draws: int = 100_000, rng=None, c0_max: float = 1e6) -> float:
    """Bisection on the Monte Carlo censoring rate of ``Uniform(0, c0)`` censoring.

    Common random numbers across probes make the estimated rate monotone in ``c0``.
    """
    if not 0.0 <= target_rate < 1.0:
        raise ValueError("target censoring rate must lie in [0, 1)")
    if target_rate == 0.0:
        # event times have unbounded support, so only c0 = inf censors nothing
        raise ValueError(f"censoring rate 0 not reachable with c0 <= {c0_max:g}")
    rng = make_rng(design.seed, 2) if rng is None else rng
    Z, X = sample_covariates(draws, rng, design.z2_sd)
    U = sample_event_time(design, Z, X, rng)
    W = rng.random(draws)

    def rate(c0):
        return float(np.mean(U > c0 * W))

    lo, hi = 0.0, 1.0
    while rate(hi) > target_rate:
        lo, hi = hi, 2.0 * hi
        if hi > c0_max:
            raise ValueError(f"censoring rate {target_rate} not reachable with c0 <= {c0_max:g}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rm = rate(mid)
        if abs(rm - target_rate) <= precision:
            return mid
        if rm > target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
