import math

import numpy as np
import pytest

from baleq.capacity import (
    CapacityGameConfig,
    build_candidate,
    check_nash,
    deterministic_equilibrium_set,
    dpi_large_dS,
    dpi_small_dS,
    golden_max,
    lambda1,
    lambda2,
    net_payoff,
    net_payoffs,
    payoff_pair,
    solve_capacity_equilibria,
)
from baleq.errors import DomainError, InputError, NoRootError
from baleq.imbalance import Deterministic, HalfNormal, IIDNormal, half_normal_pdf

HN = CapacityGameConfig((0.5, 0.5))
DET2 = CapacityGameConfig((0.5, 0.5), 1.0, Deterministic((2.0,)))


def sign_changes(values):
    s = np.sign(values)
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


# --- configuration ---------------------------------------------------------

@pytest.mark.parametrize("gamma", [(0.0, 0.5), (0.5, 1.2), (-0.1, 0.5)])
def test_gamma_outside_range_rejected(gamma):
    with pytest.raises(DomainError, match="nontrivial"):
        CapacityGameConfig(gamma)


def test_unsupported_demand_rejected():
    with pytest.raises(InputError):
        CapacityGameConfig((0.5, 0.5), 1.0, IIDNormal(1.0))
    with pytest.raises(InputError):
        CapacityGameConfig((0.5, 0.5), 1.0, Deterministic((1.0, 2.0)))


# --- payoffs ---------------------------------------------------------------

def test_payoff_pair_deterministic():
    assert payoff_pair(1.5, 1.0, DET2) == pytest.approx((1.0, 2 / 3), abs=1e-15)


def test_payoff_pair_without_small_firm():
    big, small = payoff_pair(0.8, 0.0, HN)
    assert small == 0.0 and big > 0


def test_payoff_pair_half_normal():
    big, small = payoff_pair(0.5, 0.3, HN)
    assert big == pytest.approx(0.29311, abs=1e-5)
    assert small == pytest.approx(0.19261, abs=1e-5)


def test_net_payoff_examples():
    assert net_payoffs((0.0, 0.0), HN) == (0.0, 0.0)
    psi = net_payoffs((1.5, 1.0), DET2)
    assert psi == pytest.approx((0.25, 1 / 6), abs=1e-15)


@pytest.mark.parametrize("s", [0.1, 0.4, 0.9, 1.7])
def test_net_payoff_continuous_at_kink(s):
    for firm in (0, 1):
        left = net_payoff(s - 1e-9, s, firm, HN)
        right = net_payoff(s + 1e-9, s, firm, HN)
        assert left == pytest.approx(right, abs=1e-6)


def test_negative_capacity_rejected():
    with pytest.raises(InputError):
        net_payoff(-0.1, 0.2, 0, HN)


# --- deterministic demand --------------------------------------------------

def test_segment_symmetric_costs():
    cfg = CapacityGameConfig((0.5, 0.5), 1.0, Deterministic((1.0,)))
    seg = deterministic_equilibrium_set(1.0, cfg)
    assert seg.s1_min == pytest.approx(1 / 3) and seg.s1_max == pytest.approx(2 / 3)


def test_segment_at_full_cost():
    cfg = CapacityGameConfig((1.0, 1.0), 1.0, Deterministic((1.0,)))
    seg = deterministic_equilibrium_set(1.0, cfg)
    assert seg.lower_bounds == (0.0, 0.0)
    assert (seg.s1_min, seg.s1_max) == (0.0, 1.0)


def test_segment_payoffs():
    cfg = CapacityGameConfig((0.3, 0.6), 1.0, Deterministic((0.8,)))
    seg = deterministic_equilibrium_set(0.8, cfg)
    caps = seg.point(0.4)
    assert sum(caps) == pytest.approx(0.8)
    assert seg.net_payoffs(caps, cfg) == pytest.approx((0.7 * caps[0], 0.4 * caps[1]))
    assert net_payoffs(caps, cfg) == pytest.approx(seg.net_payoffs(caps, cfg), abs=1e-12)


def test_segment_requires_positive_demand():
    with pytest.raises(InputError):
        deterministic_equilibrium_set(0.0, CapacityGameConfig((0.5, 0.5), 1.0, Deterministic((1.0,))))


@pytest.mark.parametrize("gamma", [(0.5, 0.5), (0.2, 0.7), (0.9, 0.1)])
def test_segment_points_are_equilibria_and_points_below_are_not(gamma):
    b = 1.0
    cfg = CapacityGameConfig(gamma, 1.0, Deterministic((b,)))
    seg = deterministic_equilibrium_set(b, cfg)
    for t in np.linspace(0, 1, 11):
        assert check_nash(seg.point(t), cfg).is_equilibrium
    for firm in (0, 1):
        lb = seg.lower_bounds[firm]
        for short in (0.25 * lb, 0.5 * lb):
            caps = [0.0, 0.0]
            caps[firm] = short
            caps[1 - firm] = b - short
            assert not check_nash(tuple(caps), cfg).is_equilibrium


# --- random demand ---------------------------------------------------------

def test_lambda1_values():
    assert lambda1(1.0, HN) == 0.0
    assert lambda1(0.5, HN) == pytest.approx(0.67449, abs=1e-5)
    assert lambda1(0.25, HN) == pytest.approx(1.15035, abs=1e-5)
    with pytest.raises(DomainError):
        lambda1(0.0, HN)


def test_large_branch_second_difference():
    h = 1e-3
    for s_other in (0.0, 0.3, 0.8):
        for s in np.linspace(s_other + 0.05, s_other + 2.0, 25):
            f = lambda x: payoff_pair(x, s_other, HN)[0] - 0.5 * x
            second = (f(s + h) - 2 * f(s) + f(s - h)) / h ** 2
            assert second == pytest.approx(-half_normal_pdf(s + s_other), abs=1e-4)


def test_large_branch_slope_and_zero():
    h = 1e-5
    for s_other in (0.1, 0.3):
        for s in np.linspace(s_other + 0.05, 2.0, 20):
            fd = (payoff_pair(s + h, s_other, HN)[0] - payoff_pair(s - h, s_other, HN)[0]) / (2 * h)
            assert fd == pytest.approx(dpi_large_dS(s, s_other, HN), abs=1e-4)
    lam = lambda1(0.5, HN)
    assert dpi_large_dS(lam - 0.2, 0.2, HN) - 0.5 == pytest.approx(0.0, abs=1e-12)


def test_small_slope_starts_at_big_payoff_over_throughput():
    big = 0.9
    assert dpi_small_dS(0.0, big, HN) > 0


@pytest.mark.parametrize("s_big,gamma", [(1.0, 0.5), (0.6745, 0.3), (2.0, 0.1), (1.5, 0.2)])
def test_small_slope_single_sign_change(s_big, gamma):
    xs = np.linspace(0.0, s_big, 1000)
    g = np.array([dpi_small_dS(x, s_big, HN) - gamma for x in xs])
    assert g[0] > 0
    assert sign_changes(g) == 1


def test_small_slope_matches_finite_difference():
    rng = np.random.default_rng(8)
    h = 1e-4
    for _ in range(100):
        s_big = rng.uniform(0.2, 2.5)
        s = rng.uniform(0.01, s_big - h - 0.01)
        fd = (payoff_pair(s_big, s + h, HN)[1] - payoff_pair(s_big, s - h, HN)[1]) / (2 * h)
        an = dpi_small_dS(s, s_big, HN)
        assert an == pytest.approx(fd, rel=1e-3, abs=1e-9)


def test_small_slope_example():
    assert dpi_small_dS(0.3, 0.5, HN) == pytest.approx(0.333, abs=1e-3)


def test_small_slope_needs_large_capacity():
    with pytest.raises(DomainError):
        dpi_small_dS(0.0, 0.0, HN)


def test_no_ridge_at_symmetric_points():
    for s in np.linspace(0.02, 3.0, 50):
        assert dpi_small_dS(s, s, HN) <= dpi_large_dS(s, s, HN) + 1e-12


def test_lambda2_root():
    lam1 = lambda1(0.5, HN)
    res = lambda2(0.5, lam1, HN)
    assert res.sign_changes == 1
    assert res.residual < 1e-9
    assert 0 < res.value < lam1 / 2


def test_lambda2_near_max_slope():
    lam1 = lambda1(0.5, HN)
    res = lambda2(0.99, lam1, HN)
    assert res.residual < 1e-9


def test_lambda2_no_root():
    with pytest.raises(NoRootError):
        lambda2(1.0, 1e-3, HN)


def test_golden_max():
    x, v = golden_max(lambda s: -(s - 0.3) ** 2, 0.0, 1.0)
    assert x == pytest.approx(0.3, abs=1e-8)


# --- equilibria ------------------------------------------------------------

def test_symmetric_costs_give_mirror_equilibria():
    out = solve_capacity_equilibria(HN)
    eqs = out.equilibria
    assert len(eqs) == 2
    assert eqs[0].capacities == pytest.approx(eqs[1].capacities[::-1], abs=1e-12)


def test_unequal_costs_favour_cheap_firm():
    out = solve_capacity_equilibria(CapacityGameConfig((0.2, 0.8)))
    eqs = out.equilibria
    assert len(eqs) == 1
    assert eqs[0].large_firm_index == 0


def test_full_cost_gives_zero_capacity():
    out = solve_capacity_equilibria(CapacityGameConfig((1.0, 1.0)))
    for c in out.candidates:
        assert c.capacities == (0.0, 0.0)


@pytest.mark.parametrize("gamma", [(0.1, 0.5), (0.4, 0.5), (0.5, 0.7), (0.3, 0.3), (0.9, 0.5)])
def test_candidate_ordering(gamma):
    cfg = CapacityGameConfig(gamma)
    for big in (0, 1):
        c = build_candidate(big, cfg)
        if c.valid:
            assert c.s_large >= c.s_small >= 0
            assert c.s_large + c.s_small == pytest.approx(c.lambda1, abs=1e-12)


def test_check_nash_rejects_obvious_non_equilibrium():
    v = check_nash((0.05, 0.05), HN)
    assert not v.is_equilibrium
    assert v.worst_deviation_gain > 0


def test_requires_half_normal_for_random_solver():
    with pytest.raises(InputError):
        solve_capacity_equilibria(DET2)
