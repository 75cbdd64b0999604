"""Expected absolute throughput of each firm by dispatch priority.

For two firms, ``x_low[i]`` is the expected total ``sum_t |X_i^t|`` when
firm ``i`` is first in merit order and ``x_high[i]`` when it is second.
Monte Carlo estimates reuse the same sample paths for all four numbers;
single-period cases with zero initial charge have closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dispatch import StorageUnit, priority_throughput
from .errors import InputError
from .imbalance import (
    CHUNK_SIZE,
    Deterministic,
    HalfNormal,
    half_normal_cdf,
    half_normal_partial_mean,
    sample_sequences,
)

DEFAULT_COUNT = 100_000
DEFAULT_BATCHES = 10


@dataclass(frozen=True)
class ThroughputMoments:
    """Priority-ordered expected throughputs for a two-firm market.

    ``batch_low`` / ``batch_high`` hold the same estimates computed on
    disjoint batches of paths (shape ``(n_batches, 2)``); they are empty for
    closed forms.
    """

    x_low: tuple
    x_high: tuple
    se_low: tuple = (0.0, 0.0)
    se_high: tuple = (0.0, 0.0)
    sample_count: int = 0
    batch_low: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    batch_high: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for name in ("x_low", "x_high", "se_low", "se_high"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    def swapped(self):
        """The same moments with the firm labels exchanged."""
        flip = (lambda a: None if a is None else a[:, ::-1].copy())
        return ThroughputMoments(
            self.x_low[::-1], self.x_high[::-1], self.se_low[::-1], self.se_high[::-1],
            self.sample_count, flip(self.batch_low), flip(self.batch_high),
        )

    def batch(self, k):
        """Moments estimated from batch ``k`` alone."""
        return ThroughputMoments(self.batch_low[k], self.batch_high[k])

    @property
    def n_batches(self):
        return 0 if self.batch_low is None else len(self.batch_low)

    def as_dict(self):
        return {
            "x_low": list(self.x_low),
            "x_high": list(self.x_high),
            "se_low": list(self.se_low),
            "se_high": list(self.se_high),
            "sample_count": self.sample_count,
        }


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _check_two(units):
    if len(units) != 2:
        raise InputError("throughput moments are defined for exactly two firms")


def estimate_moments_horizons(units, model, horizons: Sequence[int], count=DEFAULT_COUNT, seed=0,
                              n_batches=DEFAULT_BATCHES):
    """Moments for several horizons from one simulation of the longest.

    Sample paths for horizon ``T`` are prefixes of those for longer horizons,
    so every entry uses common random numbers.
    """
    _check_two(units)
    horizons = [int(t) for t in horizons]
    if not horizons or min(horizons) < 0:
        raise InputError("horizons must be nonempty and >= 0")
    count = int(count)
    if count < 1:
        raise InputError("count must be >= 1")
    if isinstance(model, Deterministic):
        # identical paths: one simulation is exact and noise-free
        count = 1
        n_batches = 1
    n_batches = max(1, min(int(n_batches), count))
    t_max = max(horizons)
    paths = sample_sequences(model, t_max, count, seed).paths

    uniq = sorted(set(horizons))
    # per checkpoint, per batch: sum and sum of squares of (first, second) totals
    sums = np.zeros((2, len(uniq), n_batches, 2))
    sqs = np.zeros_like(sums)
    edges = np.linspace(0, count, n_batches + 1).round().astype(int)
    batch_of = np.searchsorted(edges, np.arange(count), side="right") - 1

    for lo in range(0, count, CHUNK_SIZE):
        hi = min(count, lo + CHUNK_SIZE)
        chunk = paths[lo:hi]
        b_idx = batch_of[lo:hi]
        for k, order in enumerate(((0, 1), (1, 0))):
            snaps = priority_throughput(units, chunk, order, checkpoints=uniq)
            # snaps[c, path, firm]; keep the first-in-order and second-in-order firm
            first, second = order
            vals = np.stack([snaps[:, :, first], snaps[:, :, second]], axis=-1)
            for b in np.unique(b_idx):
                m = b_idx == b
                sums[k, :, b] += vals[:, m].sum(axis=1)
                sqs[k, :, b] += np.square(vals[:, m]).sum(axis=1)

    sizes = np.diff(edges).astype(float)
    out = {}
    for c, t in enumerate(uniq):
        # k=0: firm 0 first -> low_0, high_1 ; k=1: firm 1 first -> low_1, high_0
        tot = sums[:, c].sum(axis=1)  # (2 orders, 2 slots)
        tot_sq = sqs[:, c].sum(axis=1)
        mean = tot / count
        if count > 1:
            var = np.maximum(tot_sq / count - mean ** 2, 0.0) * count / (count - 1)
            se = np.sqrt(var / count)
        else:
            se = np.zeros_like(mean)
        bmean = sums[:, c] / sizes[None, :, None]
        out[t] = ThroughputMoments(
            x_low=(mean[0, 0], mean[1, 0]),
            x_high=(mean[1, 1], mean[0, 1]),
            se_low=(se[0, 0], se[1, 0]),
            se_high=(se[1, 1], se[0, 1]),
            sample_count=int(paths.shape[0]),
            batch_low=np.stack([bmean[0, :, 0], bmean[1, :, 0]], axis=1),
            batch_high=np.stack([bmean[1, :, 1], bmean[0, :, 1]], axis=1),
        )
    return [out[t] for t in horizons]


def estimate_moments_mc(units, model, horizon=0, count=DEFAULT_COUNT, seed=0, n_batches=DEFAULT_BATCHES):
    """Monte Carlo estimate of ``(x_low, x_high)`` for both firms."""
    return estimate_moments_horizons(units, model, [horizon], count, seed, n_batches)[0]


# ---------------------------------------------------------------------------
# Closed forms (single period, zero initial charge, B >= 0)
# ---------------------------------------------------------------------------

def _clamp(x, lo, hi):
    return min(max(x, lo), hi)


def closed_form_deterministic(b, s1, s2):
    if b < 0:
        raise InputError("closed form needs B >= 0; use the Monte Carlo path for signed imbalances")
    caps = (float(s1), float(s2))
    low = tuple(_clamp(b, 0.0, s) for s in caps)
    high = tuple(_clamp(b - _clamp(b, 0.0, caps[1 - i]), 0.0, caps[i]) for i in range(2))
    return ThroughputMoments(low, high, sample_count=0)


def half_normal_expected_min(s):
    """E[min(s, B)] for standard half-normal ``B``."""
    if s <= 0:
        return 0.0
    return half_normal_partial_mean(0.0, s) + s * (1.0 - half_normal_cdf(s))


def half_normal_expected_second(s, other):
    """E[min(s, max(B - other, 0))]: throughput when ranked behind ``other``."""
    if s <= 0:
        return 0.0
    top = s + other
    integral = half_normal_partial_mean(other, top) - other * (half_normal_cdf(top) - half_normal_cdf(other))
    return integral + s * (1.0 - half_normal_cdf(top))


def closed_form_half_normal(s1, s2):
    if s1 < 0 or s2 < 0:
        raise InputError("capacities must be >= 0")
    caps = (float(s1), float(s2))
    low = tuple(half_normal_expected_min(s) for s in caps)
    high = (half_normal_expected_second(caps[0], caps[1]), half_normal_expected_second(caps[1], caps[0]))
    return ThroughputMoments(low, high, sample_count=0)


def closed_form_single_period(model, s1, s2):
    """Closed-form moments for a single-period Deterministic or HalfNormal model."""
    if isinstance(model, HalfNormal):
        return closed_form_half_normal(s1, s2)
    if isinstance(model, Deterministic) and model.is_single_period:
        return closed_form_deterministic(model.values[0], s1, s2)
    raise InputError("no closed form for %r" % (model,))


def units_from_caps(caps, alphas=(1.0, 1.0), charge_fraction=0.0):
    """Two units sharing one initial charge fraction."""
    return [StorageUnit.from_fraction(c, a, charge_fraction) for c, a in zip(caps, alphas)]
