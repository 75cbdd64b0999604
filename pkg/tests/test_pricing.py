import math

import numpy as np
import pytest
from scipy import integrate

from baleq.errors import InconsistentMomentsError, InputError
from baleq.imbalance import Deterministic, HalfNormal, IIDNormal
from baleq.pricing import (
    Degenerate,
    atom_mass,
    expected_prices,
    sample_price,
    solve_market,
    solve_pricing,
    strategy_cdf,
    strategy_density,
    verify_best_response,
)
from baleq.seeding import stream
from baleq.throughput import ThroughputMoments, closed_form_half_normal, units_from_caps

EXAMPLE = ThroughputMoments((1.5, 1.0), (1.0, 0.5))
GRID = np.round(np.arange(0.0, 1.005, 0.01), 12)


@pytest.fixture(scope="module")
def eq():
    return solve_pricing(EXAMPLE, 1.0)


def random_moment_sets(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        s1, s2 = sorted(rng.uniform(0.05, 3.0, 2), reverse=True)
        yield closed_form_half_normal(s1, s2), rng.uniform(0.2, 5.0)


# --- closed-form equilibrium ----------------------------------------------

def test_example_payoffs(eq):
    assert eq.payoff_large == pytest.approx(1.0, abs=1e-15)
    assert eq.payoff_small == pytest.approx(2 / 3, abs=1e-15)
    assert eq.support_low == pytest.approx(2 / 3, abs=1e-15)
    assert eq.atom_mass_large == pytest.approx(1 / 3, abs=1e-15)
    assert eq.degenerate_flag is Degenerate.NONE


def test_example_cdfs(eq):
    assert strategy_cdf(eq, "small", 2 / 3) == pytest.approx(0.0, abs=1e-12)
    assert strategy_cdf(eq, "small", 1.0) == 1.0
    assert strategy_cdf(eq, "small", 0.8) == pytest.approx(0.5, abs=1e-12)
    assert strategy_cdf(eq, "large", 1.0 - 1e-12) == pytest.approx(2 / 3, abs=1e-9)
    assert strategy_cdf(eq, "large", 1.0) == 1.0
    assert strategy_cdf(eq, "large", 0.1) == 0.0


def test_example_samples(eq):
    assert sample_price(eq, "small", 0.5) == pytest.approx(0.8, abs=1e-12)
    assert sample_price(eq, "large", 0.5) == pytest.approx(8 / 9, abs=1e-12)
    assert sample_price(eq, "large", 0.9) == 1.0


def test_example_expected_prices(eq):
    rho1, rho2 = expected_prices(eq)
    assert rho2 == pytest.approx(2 * math.log(1.5), abs=1e-12)
    assert rho1 == pytest.approx(0.8740, abs=1e-4)


@pytest.mark.parametrize("role", ["large", "small"])
def test_normalization(eq, role):
    mass, _ = integrate.quad(lambda x: strategy_density(eq, role, x), eq.support_low, eq.support_high,
                             epsabs=1e-13, epsrel=1e-13)
    assert abs(mass + atom_mass(eq, role) - 1.0) < 1e-9


def test_normalization_on_random_moments():
    for m, R in random_moment_sets(50, 1):
        e = solve_pricing(m, R)
        for role in ("large", "small"):
            mass, _ = integrate.quad(lambda x: strategy_density(e, role, x), e.support_low, R,
                                     epsabs=1e-13, epsrel=1e-13)
            assert abs(mass + atom_mass(e, role) - 1.0) < 1e-9


def test_only_large_firm_has_atom():
    for m, R in random_moment_sets(100, 2):
        e = solve_pricing(m, R)
        assert atom_mass(e, "small") == 0.0
        assert 0.0 <= e.atom_mass_large <= 1.0


def test_expected_prices_match_quadrature_and_lie_in_support():
    for m, R in random_moment_sets(100, 3):
        e = solve_pricing(m, R)
        rhos = expected_prices(e)
        for role, rho in zip(("large", "small"), rhos):
            mean, _ = integrate.quad(lambda x: x * strategy_density(e, role, x), e.support_low, R, epsabs=1e-13)
            mean += atom_mass(e, role) * R
            assert rho == pytest.approx(mean, rel=1e-8)
            assert e.support_low - 1e-12 <= rho <= R + 1e-12


def test_payoff_ordering():
    for m, R in random_moment_sets(100, 4):
        e = solve_pricing(m, R)
        assert e.payoff_large >= e.payoff_small - 1e-15


def test_sample_mean_matches_expected_price(eq):
    for role, rho in zip(("large", "small"), expected_prices(eq)):
        x = sample_price(eq, role, stream(0, "test", role).random(100_000))
        assert abs(x.mean() - rho) < 3 * x.std(ddof=1) / math.sqrt(x.size)


def test_limit_moments_push_prices_to_reservation():
    m = ThroughputMoments((1.0, 0.8), (1.0 - 1e-6, 0.8 - 1e-6))
    rho = expected_prices(solve_pricing(m, 1.0))
    assert rho[0] == pytest.approx(1.0, abs=1e-5)
    assert rho[1] == pytest.approx(1.0, abs=1e-5)


# --- degenerate cases ------------------------------------------------------

def test_saturated_demand_prices_at_reservation():
    e = solve_market(units_from_caps((1.5, 1.0)), Deterministic((3.0,)), reservation=1.0)
    assert e.degenerate_flag is Degenerate.ALL_RESERVATION_PRICE
    assert e.pure_price == 1.0
    assert e.payoffs == (1.5, 1.0)
    assert expected_prices(e) == (1.0, 1.0)


def test_no_second_throughput_prices_at_zero():
    e = solve_market(units_from_caps((1.5, 1.0)), Deterministic((0.5,)))
    assert e.degenerate_flag is Degenerate.ALL_ZERO_PRICE
    assert e.pure_price == 0.0
    assert e.payoffs == (0.0, 0.0)
    assert sample_price(e, "large", 0.3) == 0.0


def test_inconsistent_moments_rejected():
    with pytest.raises(InconsistentMomentsError):
        solve_pricing(ThroughputMoments((1.0, 1.0), (1.2, 0.5)))
    with pytest.raises(InconsistentMomentsError):
        solve_pricing(ThroughputMoments((1.0, 1.0), (1.0, 0.5)))


def test_bad_reservation_rejected():
    with pytest.raises(InputError):
        solve_pricing(EXAMPLE, 0.0)


def test_roles_follow_capacity():
    e = solve_market(units_from_caps((1.0, 1.5)), Deterministic((2.0,)))
    assert e.order == (1, 0)
    assert e.payoffs_by_firm() == pytest.approx((2 / 3, 1.0))


# --- best response ---------------------------------------------------------

def test_best_response_deterministic():
    units = units_from_caps((1.5, 1.0))
    model = Deterministic((2.0,))
    e = solve_market(units, model)
    rep = verify_best_response(e, units, model, 0, GRID, 20_000, seed=0)
    assert rep.passed()
    for f in rep.firms:
        assert f.max_on_support_deviation < 0.02 * f.equilibrium_payoff + 3 * f.max_std_err


def test_best_response_half_normal():
    units = units_from_caps((1.5, 1.0))
    e = solve_market(units, HalfNormal(), 0, 100_000, seed=1)
    assert verify_best_response(e, units, HalfNormal(), 0, GRID, 20_000, seed=2).passed()


def test_best_response_dynamic():
    units = units_from_caps((1.5, 1.0), charge_fraction=0.5)
    model = IIDNormal(0.25)
    e = solve_market(units, model, 5, 100_000, seed=3)
    assert verify_best_response(e, units, model, 5, GRID, 100_000, seed=4).passed()


def test_best_response_reservation_case_peaks_at_r():
    units = units_from_caps((1.5, 1.0))
    model = Deterministic((3.0,))
    e = solve_market(units, model)
    rep = verify_best_response(e, units, model, 0, GRID, 1000)
    assert all(f.best_price == 1.0 for f in rep.firms)
    assert rep.passed()


def test_best_response_zero_case_earns_nothing_above_rival():
    units = units_from_caps((1.5, 1.0))
    model = Deterministic((0.5,))
    e = solve_market(units, model)
    rep = verify_best_response(e, units, model, 0, GRID, 1000)
    for f in rep.firms:
        assert np.all(f.payoff[f.grid > 0] == 0.0)
    assert rep.passed()


def test_grid_must_cover_support(eq):
    with pytest.raises(InputError):
        verify_best_response(eq, units_from_caps((1.5, 1.0)), Deterministic((2.0,)), 0, [0.5, 1.0], 10)
