from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import optimize, special

from shiftstab.core import (
    Boundary,
    CostSample,
    CramerSpec,
    cramer_probability,
    dual_objective,
    empirical_cgf,
    estimate_stability,
    exponential_sampler,
    exponential_tilt,
    format_real,
    gamma_sampler,
    chi_squared_sampler,
    stability_chi_squared,
    stability_exponential,
    stability_gamma,
)
from shiftstab.errors import InvalidArgumentError

from oracles import primal_kl_convex, primal_kl_tilt_bisection

LN3_HALF = math.log(3) / 2
# KL(Bern(0.75) || Bern(0.5)), the primal optimum for {0, 2} at y = 1.5
TWO_POINT_KL = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)


# -- CostSample ---------------------------------------------------------------


def test_cost_sample_rejects_empty_and_nonfinite():
    with pytest.raises(InvalidArgumentError):
        CostSample([])
    with pytest.raises(InvalidArgumentError):
        CostSample([1.0, math.nan])
    with pytest.raises(InvalidArgumentError):
        CostSample([1.0, math.inf])


def test_cost_sample_is_read_only():
    s = CostSample([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0] = 5.0


def test_max_count_counts_ties_at_max():
    s = CostSample([0, 2, 2, 1, 2])
    assert s.max_count() == 3
    assert s.n == 5 and s.max == 2.0


# -- dual objective ----------------------------------------------------------


@pytest.mark.parametrize("y", [-3.0, 0.0, 1.5, 10.0])
def test_dual_objective_zero_at_zero_tilt(y):
    assert dual_objective(0.0, [0.3, 5.0, 2.0], y) == 0.0


def test_dual_objective_degenerate_sample():
    assert dual_objective(3.0, [2.0, 2.0, 2.0], 5.0) == pytest.approx(9.0, abs=1e-14)


def test_dual_objective_two_point():
    expected = 0.75 * math.log(3) - math.log(2)
    assert dual_objective(LN3_HALF, [0.0, 2.0], 1.5) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(TWO_POINT_KL, abs=1e-15)


@pytest.mark.parametrize("lam", [math.nan, math.inf, -1.0])
def test_dual_objective_rejects_bad_tilt(lam):
    with pytest.raises(InvalidArgumentError):
        dual_objective(lam, [0.0, 1.0], 0.5)


def test_dual_objective_rejects_nonfinite_threshold():
    with pytest.raises(InvalidArgumentError):
        dual_objective(1.0, [0.0, 1.0], math.nan)


def test_cgf_does_not_overflow_for_large_costs():
    s = [1e6, 1e6 + 1.0]
    val = empirical_cgf(10.0, s)
    assert val == pytest.approx(1e7 + 10 + math.log((math.exp(-10) + 1) / 2), rel=1e-14)


# -- estimate_stability -------------------------------------------------------


def test_constant_sample_at_its_value():
    sol = estimate_stability([2.0] * 4, 2.0)
    assert sol.stability == 0.0 and sol.lambda_star == 0.0
    assert sol.boundary == Boundary.AT_ZERO


def test_two_point_interior():
    sol = estimate_stability([0.0, 2.0], 1.5)
    assert sol.boundary == Boundary.INTERIOR and sol.converged
    assert sol.lambda_star == pytest.approx(LN3_HALF, abs=1e-12)
    assert sol.stability == pytest.approx(TWO_POINT_KL, abs=1e-14)


def test_two_point_at_max():
    sol = estimate_stability([0.0, 2.0], 2.0)
    assert sol.boundary == Boundary.INFINITE_OR_AT_MAX
    assert sol.stability == pytest.approx(math.log(2), abs=1e-12)
    assert math.isfinite(sol.lambda_star) and sol.lambda_star > 0


def test_at_max_uses_multiplicity():
    sol = estimate_stability([0.0, 1.0, 3.0, 3.0, 3.0], 3.0)
    assert sol.stability == pytest.approx(math.log(5 / 3), abs=1e-12)


def test_beyond_max_is_infinite():
    sol = estimate_stability([0.0, 2.0], 2.5)
    assert sol.is_infinite and sol.boundary == Boundary.INFINITE_OR_AT_MAX
    assert sol.to_dict()["stability"] == "inf"


@pytest.mark.parametrize("y", [-1.0, 0.5, 1.0])
def test_below_mean_is_zero(y):
    sol = estimate_stability([0.0, 2.0], y)
    assert (sol.stability, sol.lambda_star, sol.boundary) == (0.0, 0.0, Boundary.AT_ZERO)


def test_estimate_validates_inputs():
    with pytest.raises(InvalidArgumentError):
        estimate_stability([], 1.0)
    with pytest.raises(InvalidArgumentError):
        estimate_stability([1.0, 2.0], math.inf)


def _random_discrete(rng):
    k = int(rng.integers(2, 7))
    support = np.sort(rng.normal(size=k) * rng.uniform(0.1, 10.0) + rng.normal() * 5)
    counts = rng.integers(1, 20, size=k)
    p = counts / counts.sum()
    y = float(rng.uniform(p @ support, support.max()))
    return support, counts, p, y


@pytest.mark.parametrize("seed", range(5))
def test_dual_matches_primal_oracles(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        support, counts, p, y = _random_discrete(rng)
        est = estimate_stability(np.repeat(support, counts), y).stability
        assert est == pytest.approx(primal_kl_tilt_bisection(support, p, y), abs=1e-9)
        assert est == pytest.approx(primal_kl_convex(support, p, y), abs=1e-6)


def test_weak_duality_on_tilt_grid():
    rng = np.random.default_rng(11)
    x = rng.gamma(2.0, 1.0, 500)
    y = float(np.mean(x) + 1.0)
    best = estimate_stability(x, y).stability
    for lam in np.linspace(0, 3, 31):
        assert dual_objective(float(lam), x, y) <= best + 1e-12


def test_exponential_sample_near_closed_form():
    x = np.random.default_rng(0).exponential(1.0, 200_000)
    sol = estimate_stability(x, 2.0)
    assert sol.stability == pytest.approx(1 - math.log(2), abs=0.02)
    assert sol.lambda_star == pytest.approx(0.5, abs=0.05)


def test_rescaling_costs_rescales_tilt():
    x = np.random.default_rng(3).exponential(1.0, 1000)
    a = estimate_stability(x, 2.0)
    b = estimate_stability(x * 1e-3, 2e-3)
    assert b.stability == pytest.approx(a.stability, rel=1e-9)
    assert b.lambda_star == pytest.approx(a.lambda_star * 1e3, rel=1e-9)


# -- tilt ---------------------------------------------------------------------


def test_zero_tilt_is_uniform():
    w = exponential_tilt([0.1, 5.0, 2.0, 7.0], 0.0).weights
    np.testing.assert_allclose(w, 0.25, rtol=0, atol=1e-16)


def test_two_point_tilt_weights():
    w = exponential_tilt([0.0, 2.0], LN3_HALF).weights
    np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-15)


def test_tilt_at_optimum_hits_threshold():
    s = [0.0, 2.0]
    sol = estimate_stability(s, 1.5)
    assert exponential_tilt(s, sol.lambda_star).mean_under(s) == pytest.approx(1.5, abs=1e-8)


def test_tilt_rejects_empty_sample():
    with pytest.raises(InvalidArgumentError):
        exponential_tilt([], 1.0)


# -- closed forms -------------------------------------------------------------


def _legendre_gamma(alpha, sigma, y):
    """sup_lam lam y + alpha log(1 - lam/sigma), maximized numerically."""
    res = optimize.minimize_scalar(
        lambda lam: -(lam * y + alpha * math.log1p(-lam / sigma)),
        bounds=(0.0, sigma * (1 - 1e-12)),
        method="bounded",
        options={"xatol": 1e-13},
    )
    return -res.fun, res.x


@pytest.mark.parametrize(
    "sigma,y,value,lam",
    [
        (1.0, 1.0, 0.0, 0.0),
        (1.0, 2.0, 1 - math.log(2), 0.5),
        (2.0, 1.0, 1 - math.log(2), 1.0),
    ],
)
def test_stability_exponential(sigma, y, value, lam):
    sol = stability_exponential(sigma, y)
    assert sol.stability == pytest.approx(value, abs=1e-15)
    assert sol.lambda_star == pytest.approx(lam, abs=1e-15)


@pytest.mark.parametrize(
    "k,y,value,lam",
    [
        (2.0, 2.0, 0.0, 0.0),
        (1.0, 2.0, 0.5 * (1 + math.log(0.5)), 0.25),
        (3.0, 6.0, 0.5 * (3 + 3 * math.log(0.5)), 0.25),
    ],
)
def test_stability_chi_squared(k, y, value, lam):
    sol = stability_chi_squared(k, y)
    assert sol.stability == pytest.approx(value, abs=1e-15)
    assert sol.lambda_star == pytest.approx(lam, abs=1e-15)


def test_gamma_reduces_to_exponential():
    a, b = stability_gamma(1.0, 1.0, 2.0), stability_exponential(1.0, 2.0)
    assert (a.stability, a.lambda_star) == pytest.approx((b.stability, b.lambda_star), abs=1e-15)


def test_gamma_example_value():
    sol = stability_gamma(0.75, 1.0, 3.0)
    assert sol.lambda_star == pytest.approx(0.75, abs=1e-15)
    assert sol.stability == pytest.approx(3 - 0.75 - 0.75 * math.log(4), abs=1e-14)
    assert stability_gamma(2.0, 1.0, 2.0).stability == 0.0


@pytest.mark.parametrize("alpha,sigma,y", [(0.75, 1.0, 3.0), (2.5, 0.7, 9.0), (0.3, 4.0, 0.5), (5.0, 2.0, 2.6)])
def test_gamma_matches_numeric_legendre_transform(alpha, sigma, y):
    value, lam = _legendre_gamma(alpha, sigma, y)
    sol = stability_gamma(alpha, sigma, y)
    assert sol.stability == pytest.approx(value, abs=1e-10)
    assert sol.lambda_star == pytest.approx(lam, abs=1e-5)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, math.nan)])
def test_gamma_rejects_bad_parameters(args):
    with pytest.raises(InvalidArgumentError):
        stability_gamma(*args)


def test_closed_form_rejects_nonpositive_rate():
    with pytest.raises(InvalidArgumentError):
        stability_exponential(0.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        stability_chi_squared(-1.0, 1.0)


# -- Cramer -------------------------------------------------------------------


def test_cramer_certain_event():
    res = cramer_probability(exponential_sampler(1.0), CramerSpec(1, 0.0, 1000), seed=0)
    assert res.p_hat == 1.0 and res.rate_proxy == 0.0


def test_cramer_single_step_tail():
    res = cramer_probability(exponential_sampler(1.0), CramerSpec(1, 2.0, 1_000_000), seed=1)
    assert abs(res.p_hat - math.exp(-2)) <= 3 * res.se


@pytest.mark.slow
def test_cramer_rate_at_m20():
    res = cramer_probability(exponential_sampler(1.0), CramerSpec(20, 2.0, 10_000_000), seed=2)
    exact = special.gammaincc(20, 40.0)
    assert abs(res.p_hat - exact) <= 4 * res.se
    assert abs(res.rate_proxy - (1 - math.log(2))) <= 0.25


def test_cramer_zero_hits_flagged():
    res = cramer_probability(exponential_sampler(1.0), CramerSpec(5, 50.0, 1000), seed=0)
    assert res.zero_count and math.isinf(res.rate_proxy)
    assert res.to_dict()["rateProxy"] == "inf"


@pytest.mark.parametrize(
    "sampler,m,y,exact",
    [
        (gamma_sampler(2.0, 1.0), 3, 3.0, special.gammaincc(6, 9.0)),
        (chi_squared_sampler(2.0), 4, 3.0, special.gammaincc(4, 6.0)),
    ],
)
def test_cramer_other_families_match_gamma_tail(sampler, m, y, exact):
    res = cramer_probability(sampler, CramerSpec(m, y, 400_000), seed=5)
    assert abs(res.p_hat - exact) <= 4 * res.se


def test_cramer_is_seed_deterministic():
    spec = CramerSpec(4, 1.5, 200_000)
    a = cramer_probability(exponential_sampler(1.0), spec, seed=9)
    b = cramer_probability(exponential_sampler(1.0), spec, seed=9)
    assert a == b


@pytest.mark.parametrize("bad", [dict(m=0, y=1.0, trials=10), dict(m=1, y=math.nan, trials=10), dict(m=1, y=1.0, trials=0)])
def test_cramer_spec_validation(bad):
    with pytest.raises(InvalidArgumentError):
        CramerSpec(**bad)


def test_format_real_sentinels():
    assert format_real(math.inf) == "inf"
    assert format_real(-math.inf) == "-inf"
    assert format_real(1.5) == 1.5
