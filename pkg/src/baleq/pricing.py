"""Mixed-strategy price equilibrium of the storage duopoly.

Given priority-ordered throughputs, the large firm (index 0 after sorting
by capacity) earns ``R * x_high[0]`` and the small firm
``R * x_high[0] * x_low[1] / x_low[0]``. Both randomise over ``[L, R]``
with ``L = R * x_high[0] / x_low[0]``; only the large firm keeps an atom,
located at ``R``. Two corner cases collapse to pure strategies: all
prices at zero when the second-ranked firm never sells, and all prices at
``R`` when every firm sells its full throughput regardless of rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .dispatch import priority_throughput
from .errors import InconsistentMomentsError, InputError
from .imbalance import sample_sequences
from .seeding import stream
from .throughput import ThroughputMoments, estimate_moments_mc

LARGE, SMALL = 0, 1
DEGENERATE_TOL = 1e-9


class Degenerate(str, Enum):
    NONE = "none"
    ALL_ZERO_PRICE = "all_zero_price"
    ALL_RESERVATION_PRICE = "all_reservation_price"


@dataclass(frozen=True)
class PricingEquilibrium:
    payoff_large: float
    payoff_small: float
    support_low: float
    support_high: float
    atom_mass_large: float
    moments: ThroughputMoments  # large firm first
    reservation: float
    degenerate_flag: Degenerate = Degenerate.NONE
    order: tuple = (0, 1)  # original firm index of (large, small)

    @property
    def payoffs(self):
        return (self.payoff_large, self.payoff_small)

    @property
    def pure_price(self) -> Optional[float]:
        if self.degenerate_flag is Degenerate.ALL_ZERO_PRICE:
            return 0.0
        if self.degenerate_flag is Degenerate.ALL_RESERVATION_PRICE:
            return self.reservation
        return None

    def payoff(self, role):
        return self.payoffs[_role(role)]

    def payoffs_by_firm(self):
        """Payoffs indexed by the caller's original firm numbering."""
        out = [0.0, 0.0]
        out[self.order[LARGE]] = self.payoff_large
        out[self.order[SMALL]] = self.payoff_small
        return tuple(out)

    def as_dict(self):
        rho = expected_prices(self)
        return {
            "payoff_large": self.payoff_large,
            "payoff_small": self.payoff_small,
            "support_low": self.support_low,
            "support_high": self.support_high,
            "atom_mass_large": self.atom_mass_large,
            "expected_price_large": rho[0],
            "expected_price_small": rho[1],
            "degenerate_flag": self.degenerate_flag.value,
            "reservation": self.reservation,
            "large_firm": self.order[LARGE],
            "moments": self.moments.as_dict(),
        }


def _role(role):
    if role in (LARGE, "large"):
        return LARGE
    if role in (SMALL, "small"):
        return SMALL
    raise InputError("firm role must be 'large'/'small' or 0/1, got %r" % (role,))


def _noise(moments, *pairs):
    """Three relative standard errors of the listed estimates (0 for exact)."""
    worst = 0.0
    for value, se in pairs:
        if se > 0 and value > 0:
            worst = max(worst, se / value)
    return 3.0 * worst


def solve_pricing(moments: ThroughputMoments, reservation=1.0, order=(0, 1)) -> PricingEquilibrium:
    """Equilibrium payoffs and strategies; firm 0 of ``moments`` is the large firm."""
    R = float(reservation)
    if not (R > 0 and math.isfinite(R)):
        raise InputError("reservation price must be positive")
    lo1, lo2 = moments.x_low
    hi1, hi2 = moments.x_high
    for i in range(2):
        slack = 3.0 * math.hypot(moments.se_low[i], moments.se_high[i]) + DEGENERATE_TOL
        if moments.x_high[i] - moments.x_low[i] > slack or moments.x_high[i] < 0:
            raise InconsistentMomentsError(
                "firm %d has x_high %.6g above x_low %.6g" % (i, moments.x_high[i], moments.x_low[i])
            )

    def pure(flag, p1, p2, price):
        return PricingEquilibrium(p1, p2, price, price, 1.0, moments, R, flag, tuple(order))

    if hi1 < DEGENERATE_TOL:
        return pure(Degenerate.ALL_ZERO_PRICE, 0.0, 0.0, 0.0)
    gap1 = lo1 - hi1
    gap2 = lo2 - hi2
    tight1 = gap1 < DEGENERATE_TOL * max(1.0, lo1)
    tight2 = gap2 < DEGENERATE_TOL * max(1.0, lo2)
    if tight1 and tight2:
        return pure(Degenerate.ALL_RESERVATION_PRICE, R * hi1, R * hi2, R)
    if tight1 or tight2:
        raise InconsistentMomentsError(
            "only one firm's throughput is rank-independent (gaps %.3g, %.3g)" % (gap1, gap2)
        )

    pay1 = R * hi1
    pay2 = R * hi1 * lo2 / lo1
    low = R * hi1 / lo1
    atom = (lo2 * hi1 - hi2 * lo1) / (lo1 * gap2)
    slack = _noise(moments, (lo1, moments.se_low[0]), (hi1, moments.se_high[0]),
                   (lo2, moments.se_low[1]), (hi2, moments.se_high[1])) + DEGENERATE_TOL
    if atom < -slack or atom > 1.0 + slack:
        raise InconsistentMomentsError("atom mass %.6g outside [0, 1]" % atom)
    atom = min(max(atom, 0.0), 1.0)
    return PricingEquilibrium(pay1, pay2, low, R, atom, moments, R, Degenerate.NONE, tuple(order))


def solve_market(units, model, horizon=0, count=100_000, seed=0, reservation=1.0, moments=None):
    """Estimate moments for ``units`` and solve, assigning roles by capacity.

    Ties in capacity keep the input order (the firms are interchangeable).
    """
    if len(units) != 2:
        raise InputError("the pricing equilibrium is solved for two firms")
    if moments is None:
        moments = estimate_moments_mc(units, model, horizon, count, seed)
    if units[1].capacity > units[0].capacity:
        return solve_pricing(moments.swapped(), reservation, order=(1, 0))
    return solve_pricing(moments, reservation, order=(0, 1))


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------

def _coefficients(eq, role):
    """(x_low, gap, payoff numerator) of the *opponent's* indifference condition."""
    m = eq.moments
    if role == SMALL:
        # small firm's cdf keeps the large firm indifferent
        return m.x_low[0], m.x_low[0] - m.x_high[0], eq.payoff_large
    return m.x_low[1], m.x_low[1] - m.x_high[1], eq.payoff_small


def strategy_cdf(eq: PricingEquilibrium, role, x):
    """Cumulative distribution of a firm's price at ``x``.

    Below the support the cdf is 0 and from ``R`` upward it is 1, so the
    large firm's atom shows up as a jump at ``R``.
    """
    role = _role(role)
    x = float(x)
    if eq.pure_price is not None:
        return 1.0 if x >= eq.pure_price else 0.0
    if x < eq.support_low:
        return 0.0
    if x >= eq.support_high:
        return 1.0
    lo, gap, pay = _coefficients(eq, role)
    return min(max(lo / gap - pay / (gap * x), 0.0), 1.0)


def strategy_density(eq: PricingEquilibrium, role, x):
    """Continuous part of the price density (the atom is excluded)."""
    role = _role(role)
    if eq.pure_price is not None or not (eq.support_low <= x <= eq.support_high):
        return 0.0
    _, gap, pay = _coefficients(eq, role)
    return pay / (gap * x * x)


def atom_mass(eq: PricingEquilibrium, role):
    if eq.pure_price is not None:
        return 1.0
    return eq.atom_mass_large if _role(role) == LARGE else 0.0


def sample_price(eq: PricingEquilibrium, role, u):
    """Inverse-transform draw(s) of a firm's equilibrium price."""
    role = _role(role)
    u = np.asarray(u, dtype=float)
    if eq.pure_price is not None:
        out = np.full(u.shape, eq.pure_price)
        return out if out.ndim else float(out)
    lo, gap, pay = _coefficients(eq, role)
    cut = 1.0 - atom_mass(eq, role)
    with np.errstate(divide="ignore"):
        out = pay / (lo - np.minimum(u, cut) * gap)
    out = np.clip(out, eq.support_low, eq.support_high)
    if role == LARGE:
        out = np.where(u >= cut, eq.support_high, out)
    return out if out.ndim else float(out)


def expected_prices(eq: PricingEquilibrium):
    """Mean price of the (large, small) firm."""
    if eq.pure_price is not None:
        return (eq.pure_price, eq.pure_price)
    m = eq.moments
    R = eq.reservation
    lo1, lo2 = m.x_low
    hi1, hi2 = m.x_high
    log_ratio = math.log(lo1 / hi1)
    rho2 = R * hi1 / (lo1 - hi1) * log_ratio
    rho1 = R / (lo1 * (lo2 - hi2)) * (hi1 * lo2 * (1.0 + log_ratio) - hi2 * lo1)
    # clamp rounding spill outside the support
    rho1 = min(max(rho1, eq.support_low), R)
    rho2 = min(max(rho2, eq.support_low), R)
    return (rho1, rho2)


# ---------------------------------------------------------------------------
# Best-response verification
# ---------------------------------------------------------------------------

@dataclass
class FirmCheck:
    role: int
    firm: int
    equilibrium_payoff: float
    max_on_support_deviation: float
    max_off_support_gain: float
    max_std_err: float
    best_price: float
    grid: np.ndarray = field(repr=False)
    payoff: np.ndarray = field(repr=False)
    std_err: np.ndarray = field(repr=False)


@dataclass
class BestResponseReport:
    firms: list

    @property
    def max_on_support_deviation(self):
        return max(f.max_on_support_deviation for f in self.firms)

    @property
    def max_off_support_gain(self):
        return max(f.max_off_support_gain for f in self.firms)

    def passed(self, rel_tol=0.02, n_se=3.0):
        """Flat payoff on the support and no off-support gain beyond noise."""
        for f in self.firms:
            scale = max(abs(f.equilibrium_payoff), 1e-12)
            if f.max_on_support_deviation > rel_tol * scale + n_se * f.max_std_err:
                return False
            if f.max_off_support_gain > n_se * f.max_std_err + 1e-12:
                return False
        return True

    def as_dict(self):
        return {
            "max_on_support_deviation": self.max_on_support_deviation,
            "max_off_support_gain": self.max_off_support_gain,
            "firms": [
                {
                    "firm": f.firm,
                    "role": "large" if f.role == LARGE else "small",
                    "equilibrium_payoff": f.equilibrium_payoff,
                    "max_on_support_deviation": f.max_on_support_deviation,
                    "max_off_support_gain": f.max_off_support_gain,
                    "max_std_err": f.max_std_err,
                    "best_price": f.best_price,
                }
                for f in self.firms
            ],
        }


def verify_best_response(eq: PricingEquilibrium, units, model, horizon, price_grid: Sequence[float],
                         count=20_000, seed=0) -> BestResponseReport:
    """Monte Carlo payoff of every grid price against the rival's mixture.

    Each sampled imbalance path is simulated once with each firm first,
    the rival's price is drawn from its equilibrium strategy, and the
    ranking decides which of the two totals the deviating firm collects.
    Grid points where the rival has an atom are left out of the on-support
    deviation because the payoff jumps there.
    """
    grid = np.asarray(sorted(float(p) for p in price_grid))
    if grid.size == 0 or grid[0] > 0 or grid[-1] < eq.reservation:
        raise InputError("price grid must cover [0, R]")
    paths = sample_sequences(model, horizon, count, seed).paths
    order = eq.order
    tp_first = np.empty((count, 2))
    tp_second = np.empty((count, 2))
    for role in (LARGE, SMALL):
        me, rival = order[role], order[1 - role]
        tot = priority_throughput(units, paths, (me, rival))
        tp_first[:, role] = tot[:, me]
        tp_second[:, 1 - role] = tot[:, rival]
    coin = stream(seed, "ties", "verify").random(count) < 0.5

    checks = []
    for role in (LARGE, SMALL):
        rival = 1 - role
        u = stream(seed, "strategy", rival).random(count)
        q = np.asarray(sample_price(eq, rival, u))
        pstar = eq.payoff(role)
        pay = np.empty(grid.size)
        se = np.empty(grid.size)
        for k, p in enumerate(grid):
            if p > eq.reservation:
                pay[k], se[k] = 0.0, 0.0
                continue
            first = (p < q) | ((p == q) & coin)
            sample = p * np.where(first, tp_first[:, role], tp_second[:, role])
            pay[k] = sample.mean()
            se[k] = sample.std(ddof=1) / math.sqrt(count) if count > 1 else 0.0
        rival_atom = atom_mass(eq, rival)
        atom_at = eq.support_high if eq.pure_price is None else eq.pure_price
        lo_sup = eq.support_low if eq.pure_price is None else eq.pure_price
        hi_sup = eq.support_high if eq.pure_price is None else eq.pure_price
        tol = 1e-12
        on = (grid >= lo_sup - tol) & (grid <= hi_sup + tol)
        if rival_atom > 0 and eq.pure_price is None:
            on &= np.abs(grid - atom_at) > tol
        off = ~((grid >= lo_sup - tol) & (grid <= hi_sup + tol))
        on_dev = float(np.max(np.abs(pay[on] - pstar))) if on.any() else 0.0
        off_gain = float(np.max(pay[off] - pstar)) if off.any() else -math.inf
        checks.append(FirmCheck(role, order[role], pstar, on_dev, off_gain, float(se.max()),
                                float(grid[int(np.argmax(pay))]), grid, pay, se))
    return BestResponseReport(checks)
