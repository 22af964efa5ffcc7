"""Stability under KL distribution shift and its dual plug-in estimator.

The stability of a cost distribution P at threshold y is the smallest
KL divergence D(Q || P) over shifted distributions Q with E_Q[R] >= y.  For
y below the essential supremum it equals the convex conjugate of the
cumulant generating function,

    I_y(P) = sup_{lambda >= 0} { lambda * y - log E_P[exp(lambda * R)] },

and the worst-case shift is the exponential tilt dQ/dP ~ exp(lambda* R).
Everything here works on the empirical distribution of a sample, except the
closed forms for the exponential, Gamma and chi-squared families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from ._rng import substream
from .errors import InvalidArgumentError

DEFAULT_TOL = 1e-10
MAX_ITER = 200
# lambda_hi * (max - y) beyond this declares the threshold numerically at the max
LAMBDA_SPAN_CAP = 1e4


class Boundary(str, Enum):
    INTERIOR = "Interior"
    AT_ZERO = "AtZero"
    INFINITE_OR_AT_MAX = "InfiniteOrAtMax"


@dataclass(frozen=True)
class CostSample:
    """Finite multiset of real-valued costs (the empirical distribution)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidArgumentError("cost sample is empty")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("cost sample contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if self.n > 1 else 0.0

    def max_count(self, tol: float = 0.0) -> int:
        """Number of observations tied at the maximum, within ``tol``."""
        m = self.max
        return int(np.count_nonzero(self.values >= m - tol))

    def __len__(self):
        return self.n

    def shifted(self, c: float) -> "CostSample":
        return CostSample(self.values + c)

    def scaled(self, c: float) -> "CostSample":
        return CostSample(self.values * c)


def as_sample(sample) -> CostSample:
    if isinstance(sample, CostSample):
        return sample
    return CostSample(np.asarray(sample, dtype=float))


@dataclass(frozen=True)
class DualSolution:
    """Optimal value and tilt of the dual problem.

    ``stability`` is ``math.inf`` when the threshold exceeds the support; the
    ``boundary`` tag records which regime produced the value.
    """

    stability: float
    lambda_star: float
    iterations: int = 0
    converged: bool = True
    boundary: Boundary = Boundary.INTERIOR

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.stability)

    def to_dict(self) -> dict:
        return {
            "stability": format_real(self.stability),
            "lambda_star": format_real(self.lambda_star),
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary.value,
        }


@dataclass(frozen=True)
class TiltWeights:
    weights: np.ndarray

    def mean_under(self, sample) -> float:
        """Expected cost under the tilted distribution."""
        return float(np.dot(self.weights, as_sample(sample).values))


def format_real(x: float):
    """JSON-safe real: infinities become the lowercase string ``"inf"``."""
    if isinstance(x, (float, np.floating)) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (float, np.floating)) and math.isnan(x):
        return "nan"
    return float(x)


def parse_real(x) -> float:
    if isinstance(x, str):
        return float(x.strip())
    return float(x)


def _check_finite(name: str, x: float) -> float:
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {x!r}") from None
    if not math.isfinite(x):
        raise InvalidArgumentError(f"{name} must be finite, got {x}")
    return x


def _log_mean_exp(lam: float, z: np.ndarray) -> float:
    # z <= 0 with max(z) == 0, so every term is in (0, 1] and one equals 1
    return float(math.log(np.mean(np.exp(lam * z))))


def empirical_cgf(lam: float, sample) -> float:
    """log of the empirical mean of exp(lam * R), overflow-free."""
    s = as_sample(sample)
    lam = _check_finite("lambda", lam)
    m = s.max if lam >= 0 else float(np.min(s.values))
    return lam * m + _log_mean_exp(lam, s.values - m)


def dual_objective(lam: float, sample, y: float) -> float:
    """lam * y - log((1/n) sum exp(lam * R_i)) on the empirical distribution."""
    lam = _check_finite("lambda", lam)
    y = _check_finite("y", y)
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    s = as_sample(sample)
    m = s.max
    return lam * (y - m) - _log_mean_exp(lam, s.values - m)


def _tilted_moments(lam: float, z: np.ndarray):
    e = np.exp(lam * z)
    s0 = e.sum()
    m1 = float(np.dot(e, z) / s0)
    d = z - m1
    var = float(np.dot(e, d * d) / s0)
    return m1, var


def estimate_stability(sample, y: float, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> DualSolution:
    """Dual plug-in estimate of the stability of ``sample`` at threshold ``y``.

    Three regimes:

    * ``y <= mean``: no shift is needed, returns zero with boundary AtZero.
    * ``mean < y < max``: solves kappa'(lambda) = y by safeguarded Newton
      iterations on a doubling bracket and returns the dual value there.
    * ``y >= max``: at the max (within ``tol``) the value is log(n / k) with
      k the number of tied maxima; above it the threshold is infeasible and the
      value is ``math.inf``.
    """
    s = as_sample(sample)
    y = _check_finite("y", y)
    if not (tol > 0):
        raise InvalidArgumentError("tol must be positive")

    mean, m = s.mean, s.max
    if y <= mean:
        return DualSolution(0.0, 0.0, 0, True, Boundary.AT_ZERO)

    z = s.values - m
    t = y - m
    max_tol = tol * max(1.0, abs(m))
    if abs(t) <= max_tol:
        return _at_max(s, z, max_tol, tol, max_iter)
    if t > 0:
        return DualSolution(math.inf, math.inf, 0, True, Boundary.INFINITE_OR_AT_MAX)

    f_tol = tol * max(1.0, abs(y))
    lo, hi = 0.0, 1.0
    it = 0
    while True:
        m1, _ = _tilted_moments(hi, z)
        if m1 - t > 0:
            break
        lo = hi
        if hi * (m - y) > LAMBDA_SPAN_CAP or it >= max_iter:
            # threshold indistinguishable from the maximum at this resolution
            return DualSolution(
                lam_value(hi, z, t), hi, it, False, Boundary.INFINITE_OR_AT_MAX
            )
        hi *= 2.0
        it += 1

    m1, var = _tilted_moments(0.0, z)
    lam = lo + (y - mean) / var if var > 0 else 0.5 * (lo + hi)
    if not (lo < lam < hi):
        lam = 0.5 * (lo + hi)
    converged = False
    polish = 0
    while it < max_iter:
        it += 1
        m1, var = _tilted_moments(lam, z)
        phi = m1 - t
        if phi > 0:
            hi = lam
        elif phi < 0:
            lo = lam
        if abs(phi) <= f_tol:
            converged = True
        step = phi / var if var > 0 else math.inf
        nxt = lam - step
        if not (lo <= nxt <= hi):
            nxt = 0.5 * (lo + hi)
        if converged:
            # a few extra Newton steps bring lambda to working precision
            if polish >= 2 or abs(nxt - lam) <= 4 * np.finfo(float).eps * max(lam, 1e-300):
                break
            polish += 1
        if nxt == lam:
            break
        lam = nxt

    return DualSolution(lam_value(lam, z, t), lam, it, converged, Boundary.INTERIOR)


def lam_value(lam: float, z: np.ndarray, t: float) -> float:
    """Dual objective in the max-shifted coordinates z = R - max, t = y - max."""
    return max(lam * t - _log_mean_exp(lam, z), 0.0)


def _at_max(s: CostSample, z: np.ndarray, max_tol: float, tol: float, max_iter: int) -> DualSolution:
    k = int(np.count_nonzero(z >= -max_tol))
    n = s.n
    value = math.log(n / k)
    rest = z[z < -max_tol]
    lam = 1.0
    it = 0
    while rest.size and it < max_iter:
        # remaining gap between the dual at lam and its limit log(n / k)
        if math.log1p(float(np.exp(lam * rest).sum()) / k) <= tol:
            break
        lam *= 2.0
        it += 1
    return DualSolution(value, lam, it, True, Boundary.INFINITE_OR_AT_MAX)


def exponential_tilt(sample, lam: float) -> TiltWeights:
    """Weights of the exponentially tilted empirical distribution."""
    s = as_sample(sample)
    lam = _check_finite("lambda", lam)
    if lam < 0:
        raise InvalidArgumentError("lambda must be nonnegative")
    e = np.exp(lam * (s.values - s.max))
    return TiltWeights(e / e.sum())


# closed forms ---------------------------------------------------------------

def stability_gamma(alpha: float, sigma: float, y: float) -> DualSolution:
    """Stability of Gamma(shape=alpha, rate=sigma) at threshold y."""
    alpha = _check_finite("alpha", alpha)
    sigma = _check_finite("sigma", sigma)
    y = _check_finite("y", y)
    if alpha <= 0 or sigma <= 0:
        raise InvalidArgumentError("alpha and sigma must be positive")
    if y <= alpha / sigma:
        return DualSolution(0.0, 0.0, 0, True, Boundary.AT_ZERO)
    r = sigma * y / alpha
    return DualSolution(alpha * (r - 1.0 - math.log(r)), sigma - alpha / y)


def stability_exponential(sigma: float, y: float) -> DualSolution:
    """Stability of Exp(sigma): sigma*y - 1 - log(sigma*y) above the mean."""
    sigma = _check_finite("sigma", sigma)
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    return stability_gamma(1.0, sigma, y)


def stability_chi_squared(k: float, y: float) -> DualSolution:
    k = _check_finite("k", k)
    if k <= 0:
        raise InvalidArgumentError("k must be positive")
    return stability_gamma(0.5 * k, 0.5, y)


# deviations probability -----------------------------------------------------

Sampler = Callable[[np.random.Generator, tuple], np.ndarray]


@dataclass(frozen=True)
class CramerSpec:
    m: int
    y: float
    trials: int

    def __post_init__(self):
        if int(self.m) < 1:
            raise InvalidArgumentError("m must be >= 1")
        if int(self.trials) < 1:
            raise InvalidArgumentError("trials must be >= 1")
        _check_finite("y", self.y)


@dataclass(frozen=True)
class CramerResult:
    p_hat: float
    se: float
    successes: int
    trials: int
    rate_proxy: float
    zero_count: bool = field(default=False)

    def to_dict(self) -> dict:
        return {
            "pHat": format_real(self.p_hat),
            "se": format_real(self.se),
            "successes": self.successes,
            "trials": self.trials,
            "rateProxy": format_real(self.rate_proxy),
            "zeroCount": self.zero_count,
        }


def exponential_sampler(sigma: float = 1.0) -> Sampler:
    def draw(rng, size):
        return rng.standard_exponential(size) / sigma
    return draw


def gamma_sampler(alpha: float, sigma: float) -> Sampler:
    def draw(rng, size):
        return rng.standard_gamma(alpha, size) / sigma
    return draw


def chi_squared_sampler(k: float) -> Sampler:
    def draw(rng, size):
        return rng.chisquare(k, size)
    return draw


def cramer_probability(sampler: Sampler, spec: CramerSpec, seed: int, chunk: int = 1 << 16) -> CramerResult:
    """Monte Carlo estimate of P(S_m >= m * y) for an i.i.d. random walk.

    Trials are processed in fixed-size chunks, each drawn from its own
    counter-addressed substream, so results depend only on ``seed``.
    """
    m, trials = int(spec.m), int(spec.trials)
    level = m * float(spec.y)
    hits = 0
    for c, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = substream(seed, c)
        walks = sampler(rng, (size, m)).sum(axis=1)
        hits += int(np.count_nonzero(walks >= level))
    p = hits / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    if hits == 0:
        return CramerResult(0.0, 0.0, 0, trials, math.inf, True)
    return CramerResult(p, se, hits, trials, -math.log(p) / m + 0.0, False)
