"""Merit-order allocation of imbalances across leaky storage units.

Each period the imbalance ``B`` is split among the firms in ascending price
order, with an infinite-capacity backstop priced at ``R`` taking whatever
is left. Leakage is applied first: a firm holding ``s`` enters the period
with ``alpha * s``, can absorb up to ``capacity - alpha * s`` and release up
to ``alpha * s``. A firm priced exactly at ``R`` is still dispatched ahead
of the backstop; a firm priced above ``R`` is never dispatched.

Greedy dispatch solves the per-period allocation LP

    minimize    sum_i p_i |X_i| + R |X_backstop|
    subject to  sum_i X_i + X_backstop = B
                0 <= alpha_i s_i + X_i <= capacity_i

and :func:`lp_oracle_check` confirms it against a vertex enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import InputError, PreconditionError
from .seeding import stream

_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class StorageUnit:
    capacity: float
    leakage_retention: float = 1.0
    initial_charge: float = 0.0

    def __post_init__(self):
        if not (self.capacity >= 0 and math.isfinite(self.capacity)):
            raise InputError("capacity must be finite and >= 0, got %r" % self.capacity)
        if not (0.0 <= self.leakage_retention <= 1.0):
            raise InputError("leakage retention must lie in [0, 1], got %r" % self.leakage_retention)
        if not (0.0 <= self.initial_charge <= self.capacity):
            raise InputError(
                "initial charge %r outside [0, %r]" % (self.initial_charge, self.capacity)
            )

    @classmethod
    def from_fraction(cls, capacity, leakage_retention=1.0, charge_fraction=0.0):
        """Unit whose initial charge is ``charge_fraction * capacity``."""
        if not 0.0 <= charge_fraction <= 1.0:
            raise InputError("initial charge fraction must lie in [0, 1]")
        return cls(capacity, leakage_retention, charge_fraction * capacity)


@dataclass(frozen=True)
class StorageState:
    charge_per_firm: tuple

    @classmethod
    def initial(cls, units: Sequence[StorageUnit]):
        return cls(tuple(u.initial_charge for u in units))

    def validate(self, units):
        if len(self.charge_per_firm) != len(units):
            raise PreconditionError("state has %d entries for %d units" % (len(self.charge_per_firm), len(units)))
        for i, (s, u) in enumerate(zip(self.charge_per_firm, units)):
            if not (-_FEAS_TOL <= s <= u.capacity + _FEAS_TOL):
                raise PreconditionError("firm %d charge %r outside [0, %r]" % (i, s, u.capacity))


@dataclass(frozen=True)
class PriceProfile:
    firm_prices: tuple
    backstop_price: float = 1.0

    def __post_init__(self):
        prices = tuple(float(p) for p in self.firm_prices)
        if any(not math.isfinite(p) or p < 0 for p in prices):
            raise InputError("firm prices must be finite and nonnegative")
        if not (self.backstop_price > 0 and math.isfinite(self.backstop_price)):
            raise InputError("backstop price must be positive")
        object.__setattr__(self, "firm_prices", prices)


@dataclass(frozen=True)
class AllocationStep:
    firm_allocations: tuple
    backstop_allocation: float
    next_state: StorageState


def merit_order(prices: PriceProfile, tie_draw: Optional[Sequence[int]] = None) -> List[int]:
    """Firm indices eligible for dispatch, cheapest first.

    ``tie_draw`` is a permutation of firm indices; among equal prices the
    firm appearing earlier in it goes first. Firms priced above the
    backstop are dropped.
    """
    n = len(prices.firm_prices)
    if tie_draw is None:
        tie_draw = range(n)
    rank = {firm: pos for pos, firm in enumerate(tie_draw)}
    if sorted(rank) != list(range(n)):
        raise PreconditionError("tie_draw must be a permutation of range(%d)" % n)
    eligible = [i for i in range(n) if prices.firm_prices[i] <= prices.backstop_price]
    return sorted(eligible, key=lambda i: (prices.firm_prices[i], rank[i]))


def _allocate_in_order(units, charges, order, imbalance):
    """Greedy allocation; returns (allocations, backstop, next_charges)."""
    n = len(units)
    base = [u.leakage_retention * s for u, s in zip(units, charges)]
    alloc = [0.0] * n
    nxt = list(base)
    residual = imbalance
    for i in order:
        if residual > 0:
            room = units[i].capacity - base[i]
            if residual >= room:
                alloc[i] = room
                nxt[i] = units[i].capacity
            else:
                alloc[i] = residual
                nxt[i] = base[i] + residual
        elif residual < 0:
            if -residual >= base[i]:
                alloc[i] = -base[i]
                nxt[i] = 0.0
            else:
                alloc[i] = residual
                nxt[i] = base[i] + residual
        else:
            break
        residual = residual - alloc[i]
    return alloc, residual, nxt


def leak_and_allocate(units, state: StorageState, prices: PriceProfile, imbalance, tie_draw=None) -> AllocationStep:
    """Apply one period of leakage and merit-order dispatch."""
    if not math.isfinite(imbalance):
        raise InputError("imbalance must be finite, got %r" % imbalance)
    state.validate(units)
    if len(prices.firm_prices) != len(units):
        raise PreconditionError("price profile does not match the number of units")
    order = merit_order(prices, tie_draw)
    alloc, backstop, nxt = _allocate_in_order(units, state.charge_per_firm, order, float(imbalance))
    return AllocationStep(tuple(alloc), backstop, StorageState(tuple(nxt)))


@dataclass
class HorizonResult:
    throughput: np.ndarray  # per firm, sum over periods of |X_i^t|
    profits: np.ndarray
    trajectory: list  # StorageState for t = 0..T+1
    allocations: np.ndarray  # (T+1, N)
    backstop: np.ndarray  # (T+1,)


def simulate_horizon(units, prices: PriceProfile, imbalance_sequence, tie_seed=0, tie_mode="period") -> HorizonResult:
    """Run dispatch over ``t = 0..T`` with prices held fixed.

    ``tie_mode`` selects whether the tie-breaking permutation is redrawn
    every period (``"period"``) or drawn once for the horizon
    (``"horizon"``).
    """
    seq = [float(b) for b in imbalance_sequence]
    if not seq:
        raise InputError("imbalance sequence is empty")
    if tie_mode not in ("period", "horizon"):
        raise InputError("tie_mode must be 'period' or 'horizon'")
    n = len(units)
    rng = stream(tie_seed, "ties")
    state = StorageState.initial(units)
    trajectory = [state]
    allocs = np.zeros((len(seq), n))
    backstop = np.zeros(len(seq))
    draw = rng.permutation(n)
    for t, b in enumerate(seq):
        if tie_mode == "period" and t > 0:
            draw = rng.permutation(n)
        step = leak_and_allocate(units, state, prices, b, draw)
        allocs[t] = step.firm_allocations
        backstop[t] = step.backstop_allocation
        state = step.next_state
        trajectory.append(state)
    throughput = np.abs(allocs).sum(axis=0)
    profits = np.asarray(prices.firm_prices) * throughput
    return HorizonResult(throughput, profits, trajectory, allocs, backstop)


# ---------------------------------------------------------------------------
# Vectorised engine for fixed priority orders
# ---------------------------------------------------------------------------

def priority_throughput(units, paths, order, checkpoints=None):
    """Absolute throughput of every firm on many paths under a fixed order.

    Args:
        units: storage units.
        paths: array ``(n_paths, T + 1)`` of imbalances.
        order: firm indices in dispatch priority (all ahead of the backstop).
        checkpoints: optional sorted horizons ``T_k <= T``; when given, the
            result has shape ``(len(checkpoints), n_paths, N)`` holding the
            running totals through each ``T_k``.

    Returns:
        ``(n_paths, N)`` totals over the full horizon, or the checkpoint
        stack described above.
    """
    paths = np.atleast_2d(np.asarray(paths, dtype=float))
    n_paths, periods = paths.shape
    n = len(units)
    caps = np.array([u.capacity for u in units])
    alphas = np.array([u.leakage_retention for u in units])
    charge = np.tile(np.array([u.initial_charge for u in units]), (n_paths, 1))
    total = np.zeros((n_paths, n))
    snaps = None
    want = {}
    if checkpoints is not None:
        checkpoints = list(checkpoints)
        if any(t < 0 or t >= periods for t in checkpoints):
            raise InputError("checkpoint horizon outside the sampled paths")
        snaps = np.empty((len(checkpoints), n_paths, n))
        for k, t in enumerate(checkpoints):
            want.setdefault(t, []).append(k)
    last = max(checkpoints) if checkpoints else periods - 1
    for t in range(last + 1):
        residual = paths[:, t].copy()
        base = alphas * charge
        for i in order:
            x = np.clip(residual, -base[:, i], caps[i] - base[:, i])
            charge[:, i] = np.clip(base[:, i] + x, 0.0, caps[i])
            residual -= x
            total[:, i] += np.abs(x)
        for i in set(range(n)) - set(order):
            charge[:, i] = base[:, i]
        for k in want.get(t, ()):
            snaps[k] = total
    return total if snaps is None else snaps


# ---------------------------------------------------------------------------
# LP oracle
# ---------------------------------------------------------------------------

def _objective(prices, backstop_price, alloc, backstop):
    return sum(p * abs(x) for p, x in zip(prices, alloc)) + backstop_price * abs(backstop)


def lp_optimum(units, state, prices: PriceProfile, imbalance):
    """Exact optimum of the allocation LP by vertex enumeration (N <= 3).

    Splitting each ``X_i`` into positive and negative parts gives a box-
    constrained LP with one equality, so some optimal vertex has every
    variable but one at a bound. Enumerating those vertices is exact.
    """
    n = len(units)
    if n > 3:
        raise PreconditionError("vertex enumeration is limited to 3 firms")
    base = [u.leakage_retention * s for u, s in zip(units, state.charge_per_firm)]
    lo = [-b for b in base]
    hi = [u.capacity - b for u, b in zip(units, base)]
    p = prices.firm_prices
    R = prices.backstop_price
    best = math.inf
    choices = [sorted({0.0, lo[i], hi[i], lo[i] + hi[i]}) for i in range(n)]
    for combo in itertools.product(*choices):
        # backstop basic
        best = min(best, _objective(p, R, combo, imbalance - sum(combo)))
        # one firm basic, backstop at zero
        for j in range(n):
            xj = imbalance - (sum(combo) - combo[j])
            if lo[j] - _FEAS_TOL <= xj <= hi[j] + _FEAS_TOL:
                alloc = list(combo)
                alloc[j] = xj
                best = min(best, _objective(p, R, alloc, 0.0))
    return best


def lp_oracle_check(units, state, prices: PriceProfile, imbalance, tie_draw=None, tol=1e-9) -> bool:
    """True iff greedy dispatch attains the LP optimum within ``tol``."""
    step = leak_and_allocate(units, state, prices, imbalance, tie_draw)
    greedy = _objective(prices.firm_prices, prices.backstop_price, step.firm_allocations, step.backstop_allocation)
    return abs(greedy - lp_optimum(units, state, prices, imbalance)) <= tol * max(1.0, abs(greedy))
