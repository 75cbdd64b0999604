"""Imbalance processes: distributions, sampling, and sequence files.

Four model families are supported:

* :class:`Deterministic` - a fixed value per period.
* :class:`IIDNormal` - independent zero-mean Gaussians. ``variance`` is a
  variance, so draws use standard deviation ``sqrt(variance)``.
* :class:`HalfNormal` - ``|Z|`` for standard normal ``Z``; density
  ``sqrt(2/pi) * exp(-b**2 / 2)`` on ``b >= 0``.
* :class:`ExternalSequence` - user-supplied paths, one per line.

Sampling is keyed by ``(seed, chunk, period)`` so that a batch for horizon
``T`` is a prefix of the batch for any longer horizon, and the chunk size is
fixed so that parallel generation never changes the numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import special

from .errors import DomainError, InputError
from .seeding import stream

CHUNK_SIZE = 8192

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# ---------------------------------------------------------------------------
# Half-normal distribution
# ---------------------------------------------------------------------------

def half_normal_pdf(b):
    b = np.asarray(b, dtype=float)
    out = SQRT_2_OVER_PI * np.exp(-0.5 * b * b)
    out = np.where(b < 0, 0.0, out)
    return out if out.ndim else float(out)


def half_normal_cdf(b):
    """P(B <= b) for the standard half-normal; 0 for negative ``b``."""
    b = np.asarray(b, dtype=float)
    out = np.where(b <= 0, 0.0, special.erf(np.maximum(b, 0.0) / math.sqrt(2.0)))
    return out if out.ndim else float(out)


def half_normal_quantile(u):
    """Inverse of :func:`half_normal_cdf` on ``[0, 1)``.

    ``u = 0`` maps to 0. The inverse is undefined at 1.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr >= 1):
        raise DomainError("half-normal quantile is defined on [0, 1) only, got %r" % (u,))
    out = math.sqrt(2.0) * special.erfinv(arr)
    return out if out.ndim else float(out)


def half_normal_partial_mean(a, b):
    """Integral of ``x f(x)`` over ``[a, b]`` with ``0 <= a <= b``."""
    return SQRT_2_OVER_PI * (math.exp(-0.5 * a * a) - math.exp(-0.5 * b * b))


def bisect_quantile(cdf, u, lo, hi, tol=1e-12, max_iter=200):
    """Invert a nondecreasing ``cdf`` by bisection on ``[lo, hi]``."""
    if cdf(hi) < u:
        raise DomainError("quantile %g lies above the bracket [%g, %g]" % (u, lo, hi))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < u:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Deterministic:
    """One fixed imbalance per period; ``values`` has length ``T + 1``."""

    values: tuple = (0.0,)

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        if not vals or not all(math.isfinite(v) for v in vals):
            raise InputError("deterministic imbalance values must be finite and nonempty")
        object.__setattr__(self, "values", vals)

    @property
    def label(self):
        return "det:" + ",".join(repr(v) for v in self.values)

    @property
    def is_single_period(self):
        return len(self.values) == 1


@dataclass(frozen=True)
class IIDNormal:
    """Independent N(0, variance) imbalance in every period."""

    variance: float = 0.25

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise InputError("IIDNormal variance must be positive, got %r" % self.variance)

    @property
    def std(self):
        return math.sqrt(self.variance)

    @property
    def label(self):
        return "normal:%r" % float(self.variance)


@dataclass(frozen=True)
class HalfNormal:
    """Standard half-normal imbalance (i.i.d. per period when ``T > 0``)."""

    @property
    def label(self):
        return "halfnormal"

    pdf = staticmethod(half_normal_pdf)
    cdf = staticmethod(half_normal_cdf)
    quantile = staticmethod(half_normal_quantile)

    @property
    def mean(self):
        return SQRT_2_OVER_PI


@dataclass(frozen=True)
class ExternalSequence:
    """Imbalance paths read from a text file (see :func:`read_sequences`)."""

    path: str
    sequences: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.sequences:
            object.__setattr__(self, "sequences", tuple(map(tuple, read_sequences(self.path))))

    @property
    def label(self):
        return "file:%s" % Path(self.path).name


ImbalanceModel = Union[Deterministic, IIDNormal, HalfNormal, ExternalSequence]


@dataclass(frozen=True)
class SampleBatch:
    paths: np.ndarray  # shape (count, T + 1)
    seed: int
    count: int

    @property
    def horizon(self):
        return self.paths.shape[1] - 1


def _standard_normal_block(seed, n, periods):
    """Normals keyed by (chunk, period); prefix-stable in both n and periods."""
    out = np.empty((n, periods))
    n_chunks = -(-n // CHUNK_SIZE)
    for k in range(n_chunks):
        lo = k * CHUNK_SIZE
        hi = min(n, lo + CHUNK_SIZE)
        for t in range(periods):
            rng = stream(seed, "imbalance", k, t)
            out[lo:hi, t] = rng.standard_normal(CHUNK_SIZE)[: hi - lo]
    return out


def sample_sequences(model, horizon, count, seed=0):
    """Draw ``count`` imbalance paths of length ``horizon + 1``."""
    horizon = int(horizon)
    count = int(count)
    if horizon < 0:
        raise InputError("horizon must be >= 0")
    if count < 1:
        raise InputError("count must be >= 1")
    periods = horizon + 1

    if isinstance(model, Deterministic):
        if len(model.values) != periods:
            raise InputError(
                "deterministic model has %d values but horizon %d needs %d"
                % (len(model.values), horizon, periods)
            )
        paths = np.tile(np.asarray(model.values, dtype=float), (count, 1))
    elif isinstance(model, IIDNormal):
        paths = model.std * _standard_normal_block(seed, count, periods)
    elif isinstance(model, HalfNormal):
        paths = np.abs(_standard_normal_block(seed, count, periods))
    elif isinstance(model, ExternalSequence):
        seqs = model.sequences
        if count > len(seqs):
            raise InputError("requested %d paths but %s holds %d" % (count, model.path, len(seqs)))
        short = [i for i, s in enumerate(seqs[:count]) if len(s) < periods]
        if short:
            raise InputError("sequence on line %d is shorter than %d periods" % (short[0] + 1, periods))
        paths = np.array([s[:periods] for s in seqs[:count]], dtype=float)
    else:
        raise InputError("unknown imbalance model %r" % (model,))
    return SampleBatch(paths=paths, seed=int(seed), count=count)


# ---------------------------------------------------------------------------
# Sequence files
# ---------------------------------------------------------------------------

def read_sequences(path) -> list:
    """Parse one comma-separated sequence per line (UTF-8, blank lines skipped)."""
    seqs = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            seq = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise InputError("%s:%d: %s" % (path, lineno, exc)) from None
        if not all(math.isfinite(v) for v in seq):
            raise InputError("%s:%d: non-finite value" % (path, lineno))
        seqs.append(seq)
    if not seqs:
        raise InputError("%s contains no sequences" % path)
    return seqs


def write_sequences(path, sequences: Sequence[Sequence[float]]):
    lines = [",".join(repr(float(v)) for v in seq) for seq in sequences]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_model(text: str) -> ImbalanceModel:
    """Build a model from ``halfnormal``, ``det:v[,v...]``, ``normal:var`` or ``file:path``."""
    from .util import parse_number

    text = text.strip()
    if text == "halfnormal":
        return HalfNormal()
    kind, _, arg = text.partition(":")
    if kind == "det" and arg:
        return Deterministic(tuple(parse_number(v) for v in arg.split(",")))
    if kind == "normal" and arg:
        return IIDNormal(parse_number(arg))
    if kind == "file" and arg:
        return ExternalSequence(arg)
    raise InputError("unrecognised demand model %r" % text)
