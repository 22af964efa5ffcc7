"""Two-point hard instances for estimating stability, and their numeric checks.

Two constructions over the Gamma-tail class P(sigma, y, gamma):

* large deviations (LD): P1 = Gamma(1 - eta, sigma) and P2 which agrees with
  P1 below a splice point x0 and has the lighter tail C x^{-1} e^{-sigma x}
  beyond it, with eta = 1 - gamma - 1/(sigma x0);
* moderate deviations (MD): P1 = Exp(sigma) and P2 with rate sigma(1 + omega)
  below x0 and an Exp(sigma) tail, rescaled to stay a density.

The pairs are close in KL divergence but separated in stability.  Every
inequality the lower-bound argument needs is evaluated numerically here:
tail constants, KL divergences, stability gaps and class membership.

Densities are represented through their *shape* f(x) e^{sigma x}, so tilted
moments E[R^k e^{lambda R}] near the abscissa lambda -> sigma are computed
without overflow: the tail integrand becomes shape(x) e^{-(sigma - lambda) x}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from ._rng import substream
from .core import CostSample, stability_gamma
from .errors import (
    ConfigurationError,
    ConstructionInfeasibleError,
    InvalidArgumentError,
    NumericError,
    RegimeError,
)

QUAD_EPSREL = 1e-11
QUAD_EPSABS = 1e-13
# lower limit for log-substituted integrals; exp(-700) is the float floor
_LOG_FLOOR = -700.0


def _quad(f, a, b, epsrel=QUAD_EPSREL, epsabs=QUAD_EPSABS, limit=400):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    if not math.isfinite(val) or err > max(100 * epsabs, 100 * epsrel * abs(val)):
        raise NumericError(
            f"quadrature on [{a}, {b}] did not converge (estimate {val:.6g}, error {err:.3g})",
            achieved=err,
        )
    return val


def _quad_log(g, lo_log, hi_log, **kw):
    """Integrate g over (exp(lo_log), exp(hi_log)) in the variable v = log x."""
    return _quad(lambda v: g(math.exp(v)) * math.exp(v), lo_log, hi_log, **kw)


# --------------------------------------------------------------------------
# class and densities


@dataclass(frozen=True)
class GammaTailClass:
    """Parameters (sigma, y, gamma) of the Gamma-tail distribution class."""

    sigma: float
    y: float
    gamma: float

    def __post_init__(self):
        for name in ("sigma", "y", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if self.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.sigma * self.y <= 1:
            raise InvalidArgumentError(f"need sigma*y > 1, got {self.sigma * self.y:g}")
        if not (0.5 < self.gamma < 1):
            raise InvalidArgumentError(f"need gamma in (1/2, 1), got {self.gamma:g}")

    @property
    def lambda_bar(self) -> float:
        """Largest optimal tilt admitted by the class, sigma - gamma / y."""
        return self.sigma - self.gamma / self.y

    @property
    def large_deviations(self) -> bool:
        return self.sigma * self.y >= 2 * self.gamma


class TailDensity:
    """Density on [0, inf) with exponential tail rate ``sigma``.

    Subclasses provide ``log_shape(x) = log f(x) + sigma * x`` for x > 0, the
    kink locations ``breakpoints`` and ``tail_power`` p such that the shape
    behaves like x^p as x -> inf.
    """

    sigma: float
    breakpoints: tuple = ()
    tail_power: float = 0.0

    def log_shape(self, x: float) -> float:
        raise NotImplementedError

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(np.vectorize(self.log_shape, otypes=[float])(x[pos]) - self.sigma * x[pos])
        return out if out.ndim else float(out)

    def tilted_moment(self, gap: float, k: int = 0, epsrel: float = QUAD_EPSREL) -> float:
        """E[R^k e^{lambda R}] at lambda = sigma - gap (gap > 0)."""
        if not gap > 0:
            raise InvalidArgumentError("tilt must stay below the abscissa (gap > 0)")
        ls = self.log_shape

        def body(x):
            return math.exp(ls(x) - gap * x) * x**k

        total = 0.0
        edges = [0.0, *self.breakpoints]
        for a, b in zip(edges[:-1], edges[1:]):
            if a == 0.0:
                total += _quad_log(body, _LOG_FLOOR, math.log(b), epsrel=epsrel)
            else:
                total += _quad(body, a, b, epsrel=epsrel)
        b = edges[-1]

        # tail in u = gap * (x - b); the [0, 1] part in log u resolves spikes near b
        def tail(u):
            x = b + u / gap
            if x <= 0.0:
                return 0.0
            return math.exp(ls(x) - u) * x**k

        inner = _quad_log(tail, _LOG_FLOOR, 0.0, epsrel=epsrel) + _quad(tail, 1.0, np.inf, epsrel=epsrel)
        return total + math.exp(-gap * b) * inner / gap

    def mgf(self, lam: float) -> float:
        return self.tilted_moment(self.sigma - lam, 0)

    def mean(self) -> float:
        return self.tilted_moment(self.sigma, 1)

    def total_mass(self) -> float:
        return self.tilted_moment(self.sigma, 0)


class GammaDensity(TailDensity):
    def __init__(self, shape: float, rate: float):
        if shape <= 0 or rate <= 0:
            raise InvalidArgumentError("Gamma shape and rate must be positive")
        self.shape = float(shape)
        self.sigma = float(rate)
        self.tail_power = self.shape - 1.0
        self._lognorm = self.shape * math.log(self.sigma) - math.lgamma(self.shape)

    def log_shape(self, x):
        return self._lognorm + (self.shape - 1.0) * math.log(x)

    def __repr__(self):
        return f"GammaDensity(shape={self.shape!r}, rate={self.sigma!r})"


def exponential_density(sigma: float) -> GammaDensity:
    return GammaDensity(1.0, sigma)


class LdTailDensity(TailDensity):
    """Gamma(1 - eta, sigma) body on [0, x0] spliced to C x^p e^{-sigma x}."""

    def __init__(self, sigma, eta, x0, norm_c, tail_power=-1.0):
        self.sigma = sigma
        self.eta = eta
        self.x0 = x0
        self.norm_c = norm_c
        self.tail_power = tail_power
        self.breakpoints = (x0,)
        self._log_a = (1 - eta) * math.log(sigma) - math.lgamma(1 - eta)
        self._log_c = math.log(norm_c)

    def log_shape(self, x):
        if x <= self.x0:
            return self._log_a - self.eta * math.log(x)
        return self._log_c + self.tail_power * math.log(x)


class MdTailDensity(TailDensity):
    """Exp(sigma (1 + omega)) body on [0, x0] with an Exp(sigma)-rate tail."""

    tail_power = 0.0

    def __init__(self, sigma, omega, x0):
        self.sigma = sigma
        self.omega = omega
        self.x0 = x0
        self.breakpoints = (x0,)

    def log_shape(self, x):
        s, w = self.sigma, self.omega
        if x <= self.x0:
            return math.log(s * (1 + w)) - s * w * x
        return math.log(s) - s * w * self.x0


# --------------------------------------------------------------------------
# large-deviations pair


def _scaled_tail_integral(power: float, sigma: float, x0: float) -> float:
    """e^{sigma x0} * int_{x0}^inf x^power e^{-sigma x} dx."""
    def g(u):
        return (x0 + u / sigma) ** power * math.exp(-u)
    return (_quad_log(g, _LOG_FLOOR, 0.0) + _quad(g, 1.0, np.inf)) / sigma


@dataclass(frozen=True)
class LdHardPair:
    cls: GammaTailClass
    x0: float
    eta: float
    norm_c: float
    tail_power: float = -1.0

    @property
    def sigma(self) -> float:
        return self.cls.sigma

    @property
    def body_const(self) -> float:
        """Normalizer sigma^{1-eta} / Gamma(1-eta) shared by both bodies."""
        return math.exp((1 - self.eta) * math.log(self.sigma) - math.lgamma(1 - self.eta))

    def density(self, which: int) -> TailDensity:
        if which == 1:
            return GammaDensity(1 - self.eta, self.sigma)
        if which == 2:
            return LdTailDensity(self.sigma, self.eta, self.x0, self.norm_c, self.tail_power)
        raise InvalidArgumentError("which must be 1 or 2")

    def f1(self, x):
        return self.density(1).pdf(x)

    def f2(self, x):
        return self.density(2).pdf(x)

    def c_bracket(self) -> tuple[float, float]:
        """Closed-form lower and upper bounds on the tail constant C."""
        sx = self.sigma * self.x0
        base = self.body_const * self.x0 ** (1 - self.eta)
        return base * (1 - self.eta / sx), base * (1 + 1 / (sx - 1))

    def splice_ratio(self) -> float:
        """Ratio of the tail branch to the body branch at x0."""
        return self.norm_c * self.x0 ** (self.eta - 1) * math.gamma(1 - self.eta) / self.sigma ** (1 - self.eta)

    def mean(self, which: int) -> float:
        if which == 1:
            return (1 - self.eta) / self.sigma
        return self.density(2).mean()

    def stability_p1(self) -> float:
        return stability_gamma(1 - self.eta, self.sigma, self.cls.y).stability

    def mgf_tail_difference(self, lam: float, epsrel: float = 1e-10) -> float:
        """E[e^{lam R2}] - E[e^{lam R1}], integrated over the tail only.

        The bodies coincide, so the difference is a single tail integral and
        keeps full relative precision even when it is ~1e-10 of either MGF.
        """
        gap = self.sigma - lam
        if not gap > 0:
            raise InvalidArgumentError("lambda must be below sigma")
        a, c, x0, eta, p = self.body_const, self.norm_c, self.x0, self.eta, self.tail_power

        def g(u):
            x = x0 + u / gap
            return (c * x**p - a * x ** (-eta)) * math.exp(-u)

        inner = _quad_log(g, _LOG_FLOOR, 0.0, epsrel=epsrel) + _quad(g, 1.0, np.inf, epsrel=epsrel)
        return math.exp(-gap * x0) * inner / gap


def make_ld_pair(cls: GammaTailClass, x0: float, tail_power: float = -1.0) -> LdHardPair:
    """Build the LD pair for ``cls`` spliced at ``x0``.

    ``tail_power`` other than -1 is for diagnostics only; ``-eta`` reproduces
    P1 exactly.
    """
    x0 = float(x0)
    if not x0 > 1:
        raise ConstructionInfeasibleError(f"splice point must satisfy x0 > 1, got {x0:g}", violated="x0 > 1")
    eta = 1 - cls.gamma - 1 / (cls.sigma * x0)
    if not (0 < eta < 1):
        raise ConstructionInfeasibleError(
            f"eta = 1 - gamma - 1/(sigma x0) = {eta:.6g} is not in (0, 1)", violated="eta in (0,1)"
        )
    a = math.exp((1 - eta) * math.log(cls.sigma) - math.lgamma(1 - eta))
    num = _scaled_tail_integral(-eta, cls.sigma, x0)
    den = _scaled_tail_integral(tail_power, cls.sigma, x0)
    return LdHardPair(cls, x0, eta, a * num / den, tail_power)


def ld_separation_bound(pair: LdHardPair) -> float:
    """Closed-form lower bound on I(P2) - I(P1) for the LD pair."""
    c = pair.cls
    s, y, g, x0 = c.sigma, c.y, c.gamma, pair.x0
    if s * y < 2 * g:
        raise RegimeError(f"bound holds only for sigma*y >= 2*gamma (got {s * y:g} < {2 * g:g})")
    return (
        (y / x0) ** (1 - g)
        / math.gamma(g)
        * math.exp(-(1 - pair.eta) * x0 / y)
        * (s * y - 1)
        / (2 * (s * y + 1) * (s * x0 - 1))
    )


def ld_kl_divergence(pair: LdHardPair, scaled: bool = False) -> float:
    """KL(P1 || P2) by quadrature over the tail, where the densities differ.

    With ``scaled=True`` returns e^{sigma x0} KL, which stays O(1) when the
    divergence itself is far below double precision relative to 1.
    """
    s, x0, eta = pair.sigma, pair.x0, pair.eta
    a = pair.body_const
    log_ac = math.log(a / pair.norm_c)
    slope = -eta - pair.tail_power

    def g(u):
        x = x0 + u / s
        return a * x ** (-eta) * math.exp(-u) * (log_ac + slope * math.log(x))

    if slope == 0.0 and abs(log_ac) < 1e-14:
        val = 0.0
    else:
        val = (_quad_log(g, _LOG_FLOOR, 0.0, epsrel=1e-10, epsabs=1e-13)
               + _quad(g, 1.0, np.inf, epsrel=1e-10, epsabs=1e-13)) / s
    val = max(val, 0.0)
    return val if scaled else val * math.exp(-s * x0)


# --------------------------------------------------------------------------
# moderate-deviations pair


@dataclass(frozen=True)
class MdHardPair:
    sigma: float
    omega: float
    x0: float

    def density(self, which: int) -> TailDensity:
        if which == 1:
            return exponential_density(self.sigma)
        if which == 2:
            return MdTailDensity(self.sigma, self.omega, self.x0)
        raise InvalidArgumentError("which must be 1 or 2")

    def f1(self, x):
        return self.density(1).pdf(x)

    def f2(self, x):
        return self.density(2).pdf(x)

    def total_mass2(self) -> float:
        """Closed-form integral of f2: body mass plus tail mass."""
        r = self.sigma * (1 + self.omega) * self.x0
        return -math.expm1(-r) + math.exp(-r)

    def mean(self, which: int) -> float:
        s, w = self.sigma, self.omega
        if which == 1:
            return 1 / s
        return (1 + w * math.exp(-s * (1 + w) * self.x0)) / (s * (1 + w))

    def mgf2(self, lam: float) -> float:
        s, w, x0 = self.sigma, self.omega, self.x0
        r = s * (1 + w) - lam
        return s / (s - lam) * (1 - w * lam / r * -math.expm1(-r * x0))

    def tail_mass2(self) -> float:
        return math.exp(-self.sigma * (1 + self.omega) * self.x0)

    def mgf_difference(self, lam: float, epsrel: float = 1e-11) -> float:
        """E[e^{lam R2}] - E[e^{lam R1}] by quadrature of f2 - f1."""
        s, w, x0 = self.sigma, self.omega, self.x0
        if self.omega == 0:
            return 0.0
        gap = s - lam

        def body(x):
            return (s * (1 + w) * math.exp(-(s * (1 + w) - lam) * x) - s * math.exp(-gap * x))

        tail_factor = math.expm1(-s * w * x0)  # f2/f1 - 1 beyond x0
        tail = tail_factor * s * math.exp(-gap * x0) / gap  # elementary exponential tail
        return _quad(body, 0.0, x0, epsrel=epsrel) + tail


def make_md_pair(sigma: float, omega: float, x0: float) -> MdHardPair:
    for name, v in (("sigma", sigma), ("x0", x0)):
        if not (math.isfinite(v) and v > 0):
            raise InvalidArgumentError(f"{name} must be positive")
    if not (math.isfinite(omega) and omega >= 0):
        raise InvalidArgumentError("omega must be nonnegative")
    return MdHardPair(float(sigma), float(omega), float(x0))


def md_kl_divergence(pair: MdHardPair, method: str = "closed") -> float:
    """KL(P1 || P2) = (omega - log(1 + omega)) (1 - e^{-sigma x0})."""
    s, w, x0 = pair.sigma, pair.omega, pair.x0
    if method == "closed":
        return (w - math.log1p(w)) * -math.expm1(-s * x0)
    if method != "quadrature":
        raise InvalidArgumentError("method must be 'closed' or 'quadrature'")
    if w == 0:
        return 0.0
    # log(f1/f2) = sigma w x - log(1+w) on the body, sigma w x0 on the tail
    body = _quad(lambda x: s * math.exp(-s * x) * (s * w * x - math.log1p(w)), 0.0, x0, epsabs=1e-15)
    tail = math.exp(-s * x0) * s * w * x0
    return body + tail


def md_separation_bound(pair: MdHardPair, y: float) -> float:
    s, w, x0 = pair.sigma, pair.omega, pair.x0
    if s * y <= 1:
        raise RegimeError(f"bound requires sigma*y > 1 (got {s * y:g})")
    return (s * y - 1) / (w * s * y + 1) * -math.expm1(-(s * w + 1 / y) * x0) * w


# --------------------------------------------------------------------------
# stability separation


@dataclass(frozen=True)
class Separation:
    """Numeric I(P2) - I(P1) together with its ingredients."""

    gap: float
    stability1: float
    stability2: float
    lambda1: float
    lambda2: float
    first_order: float  # kappa1(lambda1) - kappa2(lambda1), a lower bound on gap


def _separation_vs_gamma(shape, sigma, y, mgf_diff) -> Separation:
    """I(P2) - I(P1) when P1 = Gamma(shape, sigma) and mgf_diff = M2 - M1.

    Writes lambda = lambda1 + d, so that
        lambda y - kappa2(lambda) - I1 = d y + a log1p(-d / s) - log1p(D / M1)
    with a = shape, s = sigma - lambda1 = a / y.  Both terms are evaluated
    without cancellation, so gaps near 1e-12 are resolved.
    """
    lam1 = sigma - shape / y
    s = shape / y
    i1 = stability_gamma(shape, sigma, y).stability

    def h(lam):
        m1 = (sigma / (sigma - lam)) ** shape
        return -math.log1p(mgf_diff(lam) / m1)

    def objective(d):
        return d * y + shape * math.log1p(-d / s) + h(lam1 + d)

    first = h(lam1)
    lo, hi = max(-lam1, -0.5 * s), 0.5 * s
    res = optimize.minimize_scalar(
        lambda d: -objective(d), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12 * max(s, 1e-300), "maxiter": 500},
    )
    d = float(res.x)
    val = max(objective(d), first)
    return Separation(val, i1, i1 + val, lam1, lam1 + d, first)


def ld_numeric_separation(pair: LdHardPair) -> Separation:
    """I(P2) - I(P1) for the LD pair via tail quadrature."""
    return _separation_vs_gamma(1 - pair.eta, pair.sigma, pair.cls.y, pair.mgf_tail_difference)


def md_numeric_separation(pair: MdHardPair, y: float) -> Separation:
    if pair.sigma * y <= 1:
        raise RegimeError("separation is only defined for sigma*y > 1")
    return _separation_vs_gamma(1.0, pair.sigma, y, pair.mgf_difference)


def direct_stability(density: TailDensity, y: float) -> float:
    """Stability of a density by quadrature MGF and 1-D maximization.

    Direct route, accurate to about the quadrature tolerance; used as an
    independent cross-check of the difference-based separations.
    """
    s = density.sigma

    def neg(lam):
        return -(lam * y - math.log(density.mgf(lam)))

    res = optimize.minimize_scalar(neg, bounds=(0.0, s * (1 - 1e-9)), method="bounded",
                                   options={"xatol": 1e-11})
    return max(-float(res.fun), 0.0)


# --------------------------------------------------------------------------
# hypotheses on x0 and omega


@dataclass(frozen=True)
class Requirement:
    name: str
    lower: float  # x0 must be at least this (nan when not an x0 bound)
    satisfied: bool
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "lower": self.lower, "satisfied": self.satisfied, "detail": self.detail}


def _class_inclusion_rhs(cls: GammaTailClass, x0: float) -> float:
    s, y, g = cls.sigma, cls.y, cls.gamma
    return max(y / g * (2 * math.log(x0) + math.log(4 * s * max(g / y, 1.0) / (1 - g))), 2.0)


def ld_requirements(cls: GammaTailClass, x0: float) -> list[Requirement]:
    """Every lower bound on x0 used by the LD construction, evaluated at x0."""
    s, y, g = cls.sigma, cls.y, cls.gamma
    out = []
    out.append(Requirement("x0 > 1", 1.0, x0 > 1))
    eta = 1 - g - 1 / (s * x0)
    out.append(Requirement("eta in (0,1)", 1 / (s * (1 - g)), 0 < eta < 1, f"eta={eta:.6g}"))
    out.append(Requirement("sigma*x0 >= 2/(1-gamma)", 2 / (s * (1 - g)), s * x0 >= 2 / (1 - g)))
    rhs = _class_inclusion_rhs(cls, x0) if x0 > 0 else math.inf
    out.append(Requirement("class inclusion", rhs, x0 >= rhs, "x0 >= (y/gamma)(2 log x0 + log(4 sigma (gamma/y v 1)/(1-gamma))) v 2"))
    sep = max(2 / g**2 * (s * y + 1) / (s * y - 1), 2 / g, 4 / (s * y - 1)) * y
    regime = s * y >= 2 * g
    out.append(Requirement("separation", sep, regime and x0 >= sep,
                           "" if regime else "requires sigma*y >= 2*gamma"))
    kl = max(math.log(3 * max(1.0, s**-2)) / (0.5 * (1 - g)), 1 + 1 / s)
    out.append(Requirement("kl closeness", kl, x0 >= kl))
    return out


@dataclass(frozen=True)
class SpliceSolution:
    x0: float
    converged: bool
    iterations: int
    requirements: list = field(default_factory=list)

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.requirements)


def solve_splice_point(cls: GammaTailClass, max_iter: int = 500) -> SpliceSolution:
    """Smallest x0 meeting every LD requirement.

    The class-inclusion bound couples x0 to log x0; iterating
    x <- rhs(x) upward from 2 increases monotonically to the larger root
    because rhs is concave and increasing, and stops once rhs(x) <= x holds
    in floating point.  Non-convergence is reported, not guessed.
    """
    x = 2.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = _class_inclusion_rhs(cls, x)
        if nxt <= x:
            converged = True
            break
        x = nxt
    # the other bounds are explicit; the fixed point stays admissible above it
    others = [r.lower for r in ld_requirements(cls, x) if r.name not in ("class inclusion",)]
    x0 = max([x, *others])
    x0 = math.nextafter(x0, math.inf) if x0 == 1.0 else x0
    return SpliceSolution(x0, converged, it, ld_requirements(cls, x0))


def x0_schedule(n: int, sigma: float, delta: float = 0.0) -> float:
    """Splice point log(c n) / sigma with c = 1 / (2 (1 - 2 delta)^2)."""
    if not (0 <= delta < 0.5):
        raise InvalidArgumentError("delta must be in [0, 1/2)")
    c = 1.0 / (2.0 * (1 - 2 * delta) ** 2)
    return math.log(c * n) / sigma


def md_requirements(pair: MdHardPair, cls: GammaTailClass) -> list[Requirement]:
    s, y, g = cls.sigma, cls.y, cls.gamma
    limit = min((1 - g) / (s * y), (2 - s * y) / (s * y))
    return [
        Requirement("sigma matches class", math.nan, abs(pair.sigma - s) <= 1e-15 * s),
        Requirement("omega bound", math.nan, pair.omega <= limit, f"omega <= {limit:.6g}"),
    ]


# --------------------------------------------------------------------------
# membership


@dataclass(frozen=True)
class MembershipReport:
    condition1: bool
    condition2: bool
    condition3: bool
    details: dict = field(default_factory=dict)

    @property
    def member(self) -> bool:
        return self.condition1 and self.condition2 and self.condition3

    def to_dict(self):
        return {
            "condition1": self.condition1,
            "condition2": self.condition2,
            "condition3": self.condition3,
            "member": self.member,
            "details": self.details,
        }


def check_membership(density: TailDensity, cls: GammaTailClass, n_grid: int = 50, rtol: float = 1e-9) -> MembershipReport:
    """Check the three Gamma-tail class conditions for ``density``.

    1. Nonnegative support and a divergent MGF at sigma: certified from the
       tail power (shape ~ x^p with p >= -1 is not integrable); partial
       integrals on doubling truncations are reported alongside.
    2. E[e^{lambda R}] <= sigma / (sigma - lambda) on the grid
       lambda_j = sigma (1 - 2^{-j}), j = 0..n_grid-1, and E[R] <= 1/sigma.
    3. E[R e^{lambda_bar R}] >= y E[e^{lambda_bar R}] with lambda_bar = sigma - gamma/y.

    Comparisons allow a relative slack ``rtol`` for quadrature error, so
    boundary members (Exp, Gamma(gamma, sigma)) pass with equality.
    """
    s, y, g = cls.sigma, cls.y, cls.gamma
    if abs(density.sigma - s) > 1e-12 * s:
        raise InvalidArgumentError("density tail rate differs from the class sigma")

    # condition 1
    cond1 = density.tail_power >= -1.0
    ref = max(density.breakpoints, default=1.0 / s)
    partial = []
    acc = 0.0
    lo = 0.0
    for k in range(6):
        hi = ref * 2.0**k
        if lo == 0.0:
            acc += _quad_log(lambda x: math.exp(density.log_shape(x)), _LOG_FLOOR, math.log(hi))
        else:
            acc += _quad(lambda x: math.exp(density.log_shape(x)), lo, hi)
        partial.append(acc)
        lo = hi

    # condition 2
    worst = math.inf
    worst_j = None
    for j in range(n_grid):
        gap = s * 2.0**-j
        m = density.tilted_moment(gap, 0)
        margin = (s / gap) / m - 1.0
        if margin < worst:
            worst, worst_j = margin, j
    mean = density.mean()
    mean_margin = 1.0 / (s * mean) - 1.0 if mean > 0 else math.inf
    cond2 = worst >= -rtol and mean_margin >= -rtol

    # condition 3 at lambda_bar
    gap3 = g / y
    m0 = density.tilted_moment(gap3, 0)
    m1 = density.tilted_moment(gap3, 1)
    margin3 = m1 / (y * m0) - 1.0
    cond3 = margin3 >= -rtol

    details = {
        "tail_power": density.tail_power,
        "truncated_mgf_at_sigma": partial,
        "mgf_bound_min_relative_margin": worst,
        "mgf_bound_worst_grid_index": worst_j,
        "mean": mean,
        "mean_relative_margin": mean_margin,
        "lambda_bar": cls.lambda_bar,
        "first_order_relative_margin": margin3,
    }
    return MembershipReport(cond1, cond2, cond3, details)


# --------------------------------------------------------------------------
# sampling

MIN_ACCEPTANCE = 1e-3


def _rejection(rng, n, propose, accept_prob, what):
    out = np.empty(n)
    filled = 0
    tried = accepted = 0
    while filled < n:
        k = max(2 * (n - filled), 64)
        x = propose(k)
        keep = x[rng.random(k) < accept_prob(x)]
        tried += k
        accepted += keep.size
        if tried >= 10_000 and accepted / tried < MIN_ACCEPTANCE:
            raise ConfigurationError(f"{what}: acceptance rate {accepted / tried:.2e} below {MIN_ACCEPTANCE}")
        take = min(keep.size, n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


def sample_hard_pair(pair, which: int, n: int, seed) -> CostSample:
    """Draw ``n`` i.i.d. costs from member ``which`` of a hard pair.

    MD: exact inversion of the piecewise-exponential CDF.  LD: P1 directly
    from the Gamma law; P2 as a mixture of the Gamma body truncated to
    [0, x0] (rejection) and the tail x^{-1} e^{-sigma x} on (x0, inf)
    (proposal x0 + Exp(sigma), accepted with probability x0 / x).
    """
    n = int(n)
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if which not in (1, 2):
        raise InvalidArgumentError("which must be 1 or 2")
    rng = substream(seed, which)

    if isinstance(pair, MdHardPair):
        s, w, x0 = pair.sigma, pair.omega, pair.x0
        e = rng.standard_exponential(n)
        if which == 1:
            return CostSample(e / s)
        r = s * (1 + w)
        return CostSample(np.where(e <= r * x0, e / r, (e - s * w * x0) / s))

    if not isinstance(pair, LdHardPair):
        raise InvalidArgumentError("pair must be an LdHardPair or MdHardPair")
    s, eta, x0 = pair.sigma, pair.eta, pair.x0
    shape = 1 - eta
    if which == 1:
        return CostSample(rng.standard_gamma(shape, n) / s)
    if pair.tail_power != -1.0:
        raise InvalidArgumentError("sampling supports the x^{-1} tail only")
    p_body = float(special.gammainc(shape, s * x0))
    n_body = int(rng.binomial(n, p_body))
    body = _rejection(
        rng, n_body,
        lambda k: rng.standard_gamma(shape, k) / s,
        lambda x: (x <= x0).astype(float),
        "truncated Gamma body",
    )
    tail = _rejection(
        rng, n - n_body,
        lambda k: x0 + rng.standard_exponential(k) / s,
        lambda x: x0 / x,
        "x^-1 tail",
    )
    out = np.concatenate([body, tail])
    rng.shuffle(out)
    return CostSample(out)


__all__ = [
    "GammaTailClass", "TailDensity", "GammaDensity", "LdTailDensity", "MdTailDensity",
    "exponential_density", "LdHardPair", "MdHardPair", "make_ld_pair", "make_md_pair",
    "ld_separation_bound", "ld_kl_divergence", "md_kl_divergence", "md_separation_bound",
    "ld_numeric_separation", "md_numeric_separation", "direct_stability", "Separation",
    "Requirement", "ld_requirements", "md_requirements", "solve_splice_point", "SpliceSolution",
    "x0_schedule", "MembershipReport", "check_membership", "sample_hard_pair",
    "ld_report", "md_report",
]


# --------------------------------------------------------------------------
# verification reports


def _check(value, bound, holds):
    return {"value": value, "bound": bound, "margin": value - bound if holds is not None else None,
            "pass": holds}


def ld_report(cls: GammaTailClass, x0: float | None = None) -> tuple[dict, bool]:
    """Evaluate every LD inequality at ``x0`` (default: the splice solver).

    Returns (report, feasible).  When a hypothesis on x0 fails the report
    names it and the pair inequalities are not evaluated.
    """
    if x0 is None:
        sol = solve_splice_point(cls)
        x0, source = sol.x0, "solver"
    else:
        x0, source = float(x0), "given"
    reqs = ld_requirements(cls, x0)
    report = {
        "kind": "ld",
        "class": {"sigma": cls.sigma, "y": cls.y, "gamma": cls.gamma},
        "x0": x0,
        "x0_source": source,
        "requirements": [r.to_dict() for r in reqs],
        "violated": [r.name for r in reqs if not r.satisfied],
    }
    if report["violated"]:
        report["asserted"] = False
        return report, False
    pair = make_ld_pair(cls, x0)
    lo, hi = pair.c_bracket()
    kl_scaled = ld_kl_divergence(pair, scaled=True)
    sep = ld_numeric_separation(pair)
    bound = ld_separation_bound(pair)
    report.update(
        asserted=True,
        eta=pair.eta,
        norm_c=pair.norm_c,
        c_bracket={"lower": lo, "upper": hi, "pass": lo <= pair.norm_c <= hi},
        splice_ratio=pair.splice_ratio(),
        kl={
            "value": kl_scaled * math.exp(-cls.sigma * x0),
            "bound": math.exp(-cls.sigma * x0),
            "scaled_value": kl_scaled,
            "pass": kl_scaled <= 1.0,
        },
        separation={**_check(sep.gap, bound, sep.gap >= bound),
                    "stability1": sep.stability1, "stability2": sep.stability2},
        membership={"p1": check_membership(pair.density(1), cls).to_dict(),
                    "p2": check_membership(pair.density(2), cls).to_dict()},
    )
    report["all_pass"] = bool(
        report["c_bracket"]["pass"] and report["kl"]["pass"] and report["separation"]["pass"]
        and report["membership"]["p1"]["member"] and report["membership"]["p2"]["member"]
    )
    return report, True


def md_report(sigma: float, omega: float, x0: float, y: float, gamma: float | None = None) -> tuple[dict, bool]:
    """Closed-form vs quadrature KL, separation vs its bound, and membership.

    ``gamma`` adds the class checks (omega bound, membership of P2); they need
    a valid class (sigma*y > 1, gamma in (1/2, 1)).
    """
    report = {"kind": "md", "sigma": sigma, "omega": omega, "x0": x0, "y": y, "gamma": gamma}
    try:
        pair = make_md_pair(sigma, omega, x0)
    except InvalidArgumentError as exc:
        report.update(violated=[str(exc)], asserted=False)
        return report, False
    reqs = []
    cls = None
    if gamma is not None:
        try:
            cls = GammaTailClass(sigma, y, gamma)
        except InvalidArgumentError as exc:
            report.update(violated=[f"class: {exc}"], asserted=False)
            return report, False
        reqs = md_requirements(pair, cls)
    report["requirements"] = [r.to_dict() for r in reqs]
    report["violated"] = [r.name for r in reqs if not r.satisfied]
    if report["violated"]:
        report["asserted"] = False
        return report, False
    closed = md_kl_divergence(pair, "closed")
    quad = md_kl_divergence(pair, "quadrature")
    half_sq = 0.5 * omega**2 * -math.expm1(-sigma * x0)
    report["asserted"] = True
    report["kl"] = {
        "quadrature": quad,
        "closed_form": closed,
        "abs_diff": abs(quad - closed),
        "pass": abs(quad - closed) <= 1e-8,
        "quadratic_bound": half_sq,
        "quadratic_bound_pass": closed <= half_sq,
    }
    passes = [report["kl"]["pass"], report["kl"]["quadratic_bound_pass"]]
    if sigma * y > 1:
        sep = md_numeric_separation(pair, y)
        bound = md_separation_bound(pair, y)
        report["separation"] = {**_check(sep.gap, bound, sep.gap >= bound),
                                "stability1": sep.stability1, "stability2": sep.stability2}
        passes.append(report["separation"]["pass"])
    else:
        report["separation"] = {"pass": None, "detail": "needs sigma*y > 1"}
    if cls is not None:
        report["membership"] = {"p2": check_membership(pair.density(2), cls).to_dict()}
        passes.append(report["membership"]["p2"]["member"])
    report["all_pass"] = bool(all(passes))
    return report, True
