"""Capacity competition ahead of the pricing stage (single period).

Firms pick capacities, then play the price equilibrium. With deterministic
demand ``B`` the equilibria form a segment on ``S1 + S2 = B``. With
half-normal demand the only pure candidates are

    large firm i:  Lambda1_i - Lambda2_{-i}
    small firm:    Lambda2_{-i}

where ``Lambda1_i = F^{-1}(1 - gamma_i / R)`` and ``Lambda2`` solves the
small firm's first-order condition along ``S_small + S_big = Lambda1_big``.
Candidates are checked against the definition of a Nash equilibrium by
searching each firm's unilateral deviations directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AmbiguousRootError, DomainError, InputError, NoRootError
from .imbalance import Deterministic, HalfNormal
from .throughput import closed_form_single_period

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LAMBDA2_FLOOR = 1e-9
SCAN_POINTS = 1000


@dataclass(frozen=True)
class CapacityGameConfig:
    gamma: tuple = (0.5, 0.5)
    reservation: float = 1.0
    demand: object = field(default_factory=HalfNormal)

    def __post_init__(self):
        g = tuple(float(v) for v in self.gamma)
        R = float(self.reservation)
        if len(g) != 2:
            raise InputError("gamma needs one value per firm")
        if not (R > 0 and math.isfinite(R)):
            raise InputError("reservation price must be positive")
        for i, v in enumerate(g):
            if not (0.0 < v <= R):
                raise DomainError(
                    "gamma_%d = %g: opportunity cost must satisfy 0 < gamma <= R = %g "
                    "for the capacity game to be nontrivial" % (i + 1, v, R)
                )
        if isinstance(self.demand, Deterministic) and not self.demand.is_single_period:
            raise InputError("capacity game uses a single-period demand")
        if not isinstance(self.demand, (Deterministic, HalfNormal)):
            raise InputError("capacity game supports HalfNormal or single-value Deterministic demand")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "reservation", R)

    def with_gamma(self, gamma):
        return CapacityGameConfig(tuple(gamma), self.reservation, self.demand)


# ---------------------------------------------------------------------------
# Payoffs
# ---------------------------------------------------------------------------

def payoff_pair(s_big, s_small, config: CapacityGameConfig):
    """Price-stage payoffs ``(large, small)`` for capacities ``s_big >= s_small``."""
    m = closed_form_single_period(config.demand, s_big, s_small)
    R = config.reservation
    big = R * m.x_high[0]
    small = big * m.x_low[1] / m.x_low[0] if m.x_low[0] > 0 else 0.0
    return big, small


def net_payoff(s_own, s_other, firm, config: CapacityGameConfig):
    """Expected profit net of opportunity cost for ``firm`` (0 or 1)."""
    if s_own < 0 or s_other < 0:
        raise InputError("capacities must be >= 0")
    cost = config.gamma[firm] * s_own
    if s_own >= s_other:
        return payoff_pair(s_own, s_other, config)[0] - cost
    return payoff_pair(s_other, s_own, config)[1] - cost


def net_payoffs(caps, config):
    return (net_payoff(caps[0], caps[1], 0, config), net_payoff(caps[1], caps[0], 1, config))


# ---------------------------------------------------------------------------
# Deterministic demand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeterministicSegment:
    demand: float
    lower_bounds: tuple
    s1_min: float
    s1_max: float
    note: str = (
        "implemented as S1 + S2 = B with S_i >= B (R - gamma_i) / (2R - gamma_i); "
        "the literal extra clause S_i <= S_-i for both firms would force S1 = S2"
    )

    def point(self, t):
        """Capacities at fraction ``t`` in [0, 1] along the segment."""
        s1 = self.s1_min + t * (self.s1_max - self.s1_min)
        return (s1, self.demand - s1)

    def net_payoffs(self, caps, config):
        R = config.reservation
        return tuple((R - g) * s for g, s in zip(config.gamma, caps))

    def total_profit_range(self, config):
        """(min, midpoint, max) of total net profit over the segment."""
        vals = [sum(self.net_payoffs(self.point(t), config)) for t in (0.0, 0.5, 1.0)]
        return min(vals), vals[1], max(vals)


def deterministic_equilibrium_set(b, config: CapacityGameConfig) -> DeterministicSegment:
    if not b > 0:
        raise InputError("deterministic demand must be positive")
    R = config.reservation
    lb = tuple(b * (R - g) / (2.0 * R - g) for g in config.gamma)
    return DeterministicSegment(float(b), lb, lb[0], b - lb[1])


# ---------------------------------------------------------------------------
# Random demand: Lambda1, Lambda2 and the slope of the small firm's payoff
# ---------------------------------------------------------------------------

def _require_half_normal(config):
    if not isinstance(config.demand, HalfNormal):
        raise InputError("this operation needs a positive, decreasing demand density (HalfNormal)")


def lambda1(gamma, config: CapacityGameConfig):
    """Total capacity at which the large firm's marginal revenue equals ``gamma``."""
    _require_half_normal(config)
    R = config.reservation
    if not (0.0 < gamma <= R):
        raise DomainError("lambda1 needs 0 < gamma <= R, got gamma = %g" % gamma)
    u = 1.0 - gamma / R
    return 0.0 if u <= 0 else config.demand.quantile(u)


def dpi_large_dS(s_big, s_small, config):
    """Slope of the large firm's price-stage payoff in its own capacity."""
    _require_half_normal(config)
    return config.reservation * (1.0 - config.demand.cdf(s_big + s_small))


def dpi_small_dS(s_small, s_big, config):
    """Slope of the small firm's price-stage payoff in its own capacity."""
    _require_half_normal(config)
    m = closed_form_single_period(config.demand, s_big, s_small)
    low_big, low_small = m.x_low
    if low_big <= 0:
        raise DomainError("slope undefined for a zero-capacity large firm")
    F = config.demand.cdf
    R = config.reservation
    big_pay = R * m.x_high[0]
    return ((1.0 - F(s_small)) * big_pay + R * (F(s_small) - F(s_small + s_big)) * low_small) / low_big


@dataclass(frozen=True)
class Lambda2Result:
    value: float
    sign_changes: int
    residual: float


def _bisect(g, a, b, ga, tol):
    while b - a > tol:
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b = mid
    return 0.5 * (a + b)


def lambda2(gamma_small, lambda1_big, config: CapacityGameConfig, tol=1e-10, scan_points=SCAN_POINTS) -> Lambda2Result:
    """Small firm's capacity on the line ``S_small + S_big = lambda1_big``.

    Solves ``dpi_small_dS(S, lambda1_big - S) = gamma_small`` on
    ``[1e-9, lambda1_big / 2]``. A grid scan counts sign changes first,
    since uniqueness of the root is not guaranteed in general.
    """
    if not lambda1_big > 0:
        raise DomainError("lambda2 needs a positive lambda1 for the large firm")

    def g(s):
        return dpi_small_dS(s, lambda1_big - s, config) - gamma_small

    lo, hi = LAMBDA2_FLOOR, 0.5 * lambda1_big
    xs = np.linspace(lo, hi, scan_points)
    gs = np.array([g(x) for x in xs])
    sign = np.sign(gs)
    brackets = [k for k in range(len(xs) - 1) if sign[k] != 0 and sign[k] * sign[k + 1] <= 0 and sign[k + 1] != sign[k]]
    if not brackets:
        raise NoRootError(
            "no root of the small-firm condition on [%g, %g] (gamma=%g, lambda1=%g)"
            % (lo, hi, gamma_small, lambda1_big)
        )
    roots = [_bisect(g, xs[k], xs[k + 1], gs[k], tol) for k in brackets]
    if len(roots) > 1:
        raise AmbiguousRootError("small-firm condition has %d roots: %s" % (len(roots), roots), roots)
    return Lambda2Result(roots[0], len(brackets), abs(g(roots[0])))


# ---------------------------------------------------------------------------
# Nash verification
# ---------------------------------------------------------------------------

def golden_max(fn, a, b, tol=1e-10, max_iter=200):
    """Maximise a unimodal ``fn`` on ``[a, b]``; returns ``(x, fn(x))``."""
    if b <= a:
        return a, fn(a)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


@dataclass(frozen=True)
class NashVerdict:
    is_equilibrium: bool
    worst_deviation_gain: float
    best_deviation_point: tuple  # (firm, capacity)
    gains: tuple  # per firm
    tolerance: float


def _search_upper(s_other, firm, config):
    if isinstance(config.demand, Deterministic):
        return s_other + max(config.demand.values[0], 0.0) + 1.0
    lam = lambda1(config.gamma[firm], config)
    return 1.5 * max(s_other, lam) + 1.0


def best_deviation(caps, firm, config: CapacityGameConfig, grid_points=SCAN_POINTS):
    """Best reply of ``firm`` to the rival's capacity in ``caps``: ``(S', psi)``."""
    other = caps[1 - firm]

    def psi(s):
        return net_payoff(s, other, firm, config)

    upper = _search_upper(other, firm, config)
    cands = [(s, psi(s)) for s in np.linspace(0.0, upper, grid_points)]
    cands.append((other, psi(other)))
    # each side of the kink is quasiconcave
    cands.append(golden_max(psi, 0.0, other))
    cands.append(golden_max(psi, other, upper))
    return max(cands, key=lambda c: c[1])


def check_nash(caps, config: CapacityGameConfig, tol=None, scale=None) -> NashVerdict:
    """Definitional equilibrium check: no firm gains by changing its capacity.

    ``tol`` defaults to ``1e-4 * R * scale`` where ``scale`` is the large
    firm's lambda1 (random demand) or the demand itself (deterministic).
    """
    R = config.reservation
    if tol is None:
        if scale is None:
            if isinstance(config.demand, Deterministic):
                scale = config.demand.values[0]
            else:
                big = 0 if caps[0] >= caps[1] else 1
                scale = lambda1(config.gamma[big], config)
        tol = 1e-4 * R * scale + 1e-12
    current = net_payoffs(caps, config)
    gains = []
    points = []
    for firm in (0, 1):
        s_best, v_best = best_deviation(caps, firm, config)
        gains.append(v_best - current[firm])
        points.append((firm, s_best))
    worst = int(np.argmax(gains))
    gains = [float(g) for g in gains]
    points = [(f, float(s)) for f, s in points]
    return NashVerdict(bool(gains[worst] <= tol), gains[worst], points[worst], tuple(gains), float(tol))


@dataclass(frozen=True)
class CapacityCandidate:
    capacities: tuple  # (S1, S2) in firm order
    large_firm_index: int
    lambda1: float
    lambda2: float
    valid: bool
    reason: str = ""

    @property
    def s_large(self):
        return self.capacities[self.large_firm_index]

    @property
    def s_small(self):
        return self.capacities[1 - self.large_firm_index]


@dataclass
class CapacityOutcome:
    candidates: list
    nash_verdicts: list  # NashVerdict or None for invalid candidates
    payoffs: list  # (psi1, psi2) or None

    @property
    def equilibria(self):
        return [c for c, v in zip(self.candidates, self.nash_verdicts) if v is not None and v.is_equilibrium]

    def as_dict(self):
        rows = []
        for c, v, p in zip(self.candidates, self.nash_verdicts, self.payoffs):
            rows.append({
                "large_firm": c.large_firm_index,
                "capacities": list(c.capacities),
                "lambda1": c.lambda1,
                "lambda2": c.lambda2,
                "valid": c.valid,
                "reason": c.reason,
                "net_payoffs": None if p is None else list(p),
                "is_equilibrium": None if v is None else bool(v.is_equilibrium),
                "worst_deviation_gain": None if v is None else v.worst_deviation_gain,
                "best_deviation_point": None if v is None else list(v.best_deviation_point),
            })
        return {"candidates": rows}


def build_candidate(big, config: CapacityGameConfig) -> CapacityCandidate:
    """Candidate in which firm ``big`` commits the larger capacity."""
    small = 1 - big
    lam1 = lambda1(config.gamma[big], config)
    caps = [0.0, 0.0]
    if lam1 == 0.0:
        return CapacityCandidate(tuple(caps), big, 0.0, 0.0, True, "zero total capacity")
    reason = ""
    try:
        lam2 = lambda2(config.gamma[small], lam1, config).value
    except NoRootError as exc:
        # marginal value of the first unit is R, so gamma_small = R leaves the
        # small firm at the corner S = 0 rather than at an interior root
        if dpi_small_dS(LAMBDA2_FLOOR, lam1 - LAMBDA2_FLOOR, config) > config.gamma[small]:
            return CapacityCandidate(tuple(caps), big, lam1, math.nan, False, str(exc))
        lam2, reason = 0.0, "corner: small firm commits nothing"
    caps[big] = float(lam1 - lam2)
    caps[small] = float(lam2)
    valid = caps[big] >= caps[small] >= 0
    if not valid:
        reason = "ordering violated"
    return CapacityCandidate(tuple(caps), big, float(lam1), float(lam2), valid, reason)


def solve_capacity_equilibria(config: CapacityGameConfig) -> CapacityOutcome:
    _require_half_normal(config)
    candidates, verdicts, payoffs = [], [], []
    for big in (0, 1):
        cand = build_candidate(big, config)
        candidates.append(cand)
        if cand.valid:
            scale = cand.lambda1
            verdicts.append(check_nash(cand.capacities, config, scale=scale))
            payoffs.append(net_payoffs(cand.capacities, config))
        else:
            verdicts.append(None)
            payoffs.append(None)
    return CapacityOutcome(candidates, verdicts, payoffs)
