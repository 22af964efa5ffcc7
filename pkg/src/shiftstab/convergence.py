"""Monte Carlo harness for the convergence rate of the plug-in estimator.

For a family with known stability I, draw ``replications`` samples at each
size n, estimate I on each and summarize the squared error.  On a log-log
scale the MSE decays like n^{-2 r} with r = min(1/2, gamma / (sigma y)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import child
from .core import Boundary, estimate_stability, stability_exponential, stability_gamma
from .errors import InvalidArgumentError
from .hardpair import (
    GammaTailClass,
    LdHardPair,
    MdHardPair,
    ld_numeric_separation,
    make_ld_pair,
    make_md_pair,
    md_numeric_separation,
    sample_hard_pair,
    solve_splice_point,
)

DEFAULT_SIZES = (1_000, 10_000, 100_000, 1_000_000)
DEFAULT_REPLICATIONS = 40


def rate_exponent(cls_or_sigma, y: float | None = None, gamma: float | None = None) -> float:
    """min(1/2, gamma / (sigma y)).

    Accepts a ``GammaTailClass`` or explicit (sigma, y, gamma).  gamma = 1 is
    allowed in the explicit form: it is the exponent for Exp(sigma) itself.
    """
    if isinstance(cls_or_sigma, GammaTailClass):
        sigma, y, gamma = cls_or_sigma.sigma, cls_or_sigma.y, cls_or_sigma.gamma
    else:
        sigma = float(cls_or_sigma)
        if y is None or gamma is None:
            raise InvalidArgumentError("pass a GammaTailClass or all of sigma, y, gamma")
        if not (sigma > 0 and y > 0 and 0 < gamma <= 1):
            raise InvalidArgumentError("need sigma > 0, y > 0 and gamma in (0, 1]")
    return min(0.5, gamma / (sigma * y))


@dataclass(frozen=True)
class Family:
    """Cost distribution with a known stability value.

    kinds and their parameters:
      exponential: sigma
      gamma: alpha, sigma
      ld: sigma, gamma, which (1 or 2), optional x0 (default: splice solver);
          the class threshold is the experiment's y
      md: sigma, omega, x0, which
    """

    kind: str
    params: dict = field(default_factory=dict)

    _REQUIRED = {
        "exponential": ("sigma",),
        "gamma": ("alpha", "sigma"),
        "ld": ("sigma", "gamma", "which"),
        "md": ("sigma", "omega", "x0", "which"),
    }

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise InvalidArgumentError(f"unknown family kind {self.kind!r}")
        missing = [k for k in self._REQUIRED[self.kind] if k not in self.params]
        if missing:
            raise InvalidArgumentError(f"family {self.kind} needs {', '.join(missing)}")
        if self.kind in ("ld", "md") and int(self.params["which"]) not in (1, 2):
            raise InvalidArgumentError("which must be 1 or 2")

    @classmethod
    def exponential(cls, sigma):
        return cls("exponential", {"sigma": float(sigma)})

    @classmethod
    def gamma(cls, alpha, sigma):
        return cls("gamma", {"alpha": float(alpha), "sigma": float(sigma)})

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)

    def pair(self, y: float):
        p = self.params
        if self.kind == "ld":
            hc = GammaTailClass(float(p["sigma"]), float(y), float(p["gamma"]))
            x0 = p.get("x0")
            x0 = solve_splice_point(hc).x0 if x0 is None else float(x0)
            return make_ld_pair(hc, x0)
        if self.kind == "md":
            return make_md_pair(float(p["sigma"]), float(p["omega"]), float(p["x0"]))
        return None

    def true_stability(self, y: float) -> float:
        p = self.params
        if self.kind == "exponential":
            return stability_exponential(p["sigma"], y).stability
        if self.kind == "gamma":
            return stability_gamma(p["alpha"], p["sigma"], y).stability
        pair = self.pair(y)
        which = int(p["which"])
        if isinstance(pair, LdHardPair):
            sep = ld_numeric_separation(pair)
        else:
            sep = md_numeric_separation(pair, y)
        return sep.stability1 if which == 1 else sep.stability2

    def sampler(self, y: float):
        """Function (seed_sequence, n) -> ndarray of costs."""
        p = self.params
        if self.kind == "exponential":
            scale = 1.0 / p["sigma"]
            return lambda ss, n: np.random.default_rng(ss).exponential(scale, n)
        if self.kind == "gamma":
            a, scale = p["alpha"], 1.0 / p["sigma"]
            return lambda ss, n: np.random.default_rng(ss).gamma(a, scale, n)
        pair = self.pair(y)
        which = int(p["which"])
        return lambda ss, n: sample_hard_pair(pair, which, n, ss).values


@dataclass(frozen=True)
class ConvergenceConfig:
    family: Family
    y: float
    sample_sizes: tuple = DEFAULT_SIZES
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sample_sizes)
        object.__setattr__(self, "sample_sizes", sizes)
        if not sizes or any(n < 1 for n in sizes):
            raise InvalidArgumentError("sample sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise InvalidArgumentError("sample sizes must be strictly increasing")
        if int(self.replications) < 2:
            raise InvalidArgumentError("need at least 2 replications")
        if not math.isfinite(self.y):
            raise InvalidArgumentError("y must be finite")

    def to_dict(self):
        return {
            "name": self.name,
            "family": self.family.to_dict(),
            "y": self.y,
            "sample_sizes": list(self.sample_sizes),
            "replications": int(self.replications),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            Family.from_dict(d["family"]),
            float(d["y"]),
            tuple(d.get("sample_sizes", DEFAULT_SIZES)),
            int(d.get("replications", DEFAULT_REPLICATIONS)),
            int(d.get("seed", 0)),
            d.get("name", ""),
        )


@dataclass(frozen=True)
class SizeSummary:
    n: int
    mse: float
    mean_error: float
    sd_error: float
    boundary_count: int

    def to_dict(self):
        return {
            "n": self.n,
            "mse": self.mse,
            "mean_error": self.mean_error,
            "sd_error": self.sd_error,
            "boundary_count": self.boundary_count,
        }


@dataclass(frozen=True)
class ConvergenceResult:
    per_size: tuple
    fitted_slope: float | None
    true_stability: float
    estimates: dict  # n -> array of estimates (nan for boundary replications)

    def mse(self, n: int) -> float:
        for row in self.per_size:
            if row.n == n:
                return row.mse
        raise KeyError(n)


def fit_loglog_slope(ns, mses) -> float | None:
    """OLS slope of log(mse) against log(n); None when undefined."""
    ns = np.asarray(ns, dtype=float)
    mses = np.asarray(mses, dtype=float)
    if ns.size < 2 or not np.all(np.isfinite(mses)) or np.any(mses <= 0):
        return None
    return float(np.polyfit(np.log(ns), np.log(mses), 1)[0])


def run_convergence(config: ConvergenceConfig) -> ConvergenceResult:
    """Replicate the estimator over the size grid.

    Replication r at size n draws from the substream (seed, n, r), so the
    result does not depend on evaluation order.  Replications whose estimate
    is infinite or at the sample maximum are counted and left out of the MSE.
    """
    truth = config.family.true_stability(config.y)
    draw = config.family.sampler(config.y)
    rows, estimates = [], {}
    for n in config.sample_sizes:
        est = np.full(config.replications, np.nan)
        boundary = 0
        for r in range(config.replications):
            sol = estimate_stability(draw(child(config.seed, n, r), n), config.y)
            if sol.boundary == Boundary.INFINITE_OR_AT_MAX:
                boundary += 1
                continue
            est[r] = sol.stability
        err = est[~np.isnan(est)] - truth
        if err.size:
            mse = float(np.mean(err**2))
            mean_err = float(np.mean(err))
            sd_err = float(np.std(err, ddof=1)) if err.size > 1 else math.nan
        else:
            mse = mean_err = sd_err = math.nan
        rows.append(SizeSummary(n, mse, mean_err, sd_err, boundary))
        estimates[n] = est
    slope = fit_loglog_slope([r.n for r in rows], [r.mse for r in rows])
    return ConvergenceResult(tuple(rows), slope, truth, estimates)
