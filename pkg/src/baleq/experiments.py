"""Scenario runner for the horizon, leakage, capacity and pricing-format sweeps.

Each ``run_*`` function returns a :class:`ResultTable`; :func:`run_scenario`
also writes ``<scenario>.csv`` and a matplotlib script ``<scenario>_plot.py``
next to it. Imbalance draws depend only on the master seed (not on the grid
point), so every point of a sweep sees the same sample paths.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .capacity import (
    CapacityGameConfig,
    build_candidate,
    check_nash,
    deterministic_equilibrium_set,
    net_payoffs,
)
from .errors import AmbiguousRootError, InconsistentMomentsError, InputError
from .imbalance import SQRT_2_OVER_PI, Deterministic, HalfNormal, IIDNormal
from .pricing import Degenerate, expected_prices, solve_market
from .seeding import max_workers
from .throughput import estimate_moments_horizons, units_from_caps

SCENARIOS = ("fig1", "fig2", "fig3", "fig4")

DEGENERATE_CODE = {Degenerate.NONE: 0, Degenerate.ALL_ZERO_PRICE: 1, Degenerate.ALL_RESERVATION_PRICE: 2}

# candidate status codes in the capacity tables
OK, NO_ROOT, AMBIGUOUS, ORDERING, CORNER = 0, 1, 2, 3, 4

# dense near alpha = 1, where the low-variance curve turns over
DEFAULT_ALPHAS = [round(0.05 * k, 10) for k in range(19)] + [0.92, 0.94, 0.96, 0.97, 0.98, 0.99, 0.995, 1.0]
DEFAULT_GAMMAS = [round(0.05 * k, 10) for k in range(1, 21)]


@dataclass
class ScenarioConfig:
    scenario: str = "fig1"
    horizons: List[int] = field(default_factory=lambda: list(range(0, 101)))
    variances: List[float] = field(default_factory=lambda: [0.25, 4.0])
    s0_fracs: List[float] = field(default_factory=lambda: [0.0, 0.25, 0.5])
    alphas: List[float] = field(default_factory=lambda: [1.0])
    gamma1_grid: List[float] = field(default_factory=lambda: list(DEFAULT_GAMMAS))
    gamma2: float = 0.5
    caps: List[float] = field(default_factory=lambda: [1.5, 1.0])
    reservation: float = 1.0
    count: int = 10_000
    seed: int = 0
    n_batches: int = 10
    out_dir: str = "runs"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError("unknown scenario %r" % self.scenario)
        for name in ("horizons", "variances", "s0_fracs", "alphas", "gamma1_grid"):
            if not getattr(self, name):
                raise InputError("%s grid must be nonempty" % name)
        if self.count < 1:
            raise InputError("count must be >= 1")

    @classmethod
    def default(cls, scenario, **overrides):
        base = {"scenario": scenario}
        if scenario == "fig2":
            base.update(horizons=[100], variances=[0.1, 1.0, 10.0], s0_fracs=[0.5], alphas=list(DEFAULT_ALPHAS))
        cfg = dict(base)
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**cfg)

    @classmethod
    def from_file(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        scenario = data.pop("scenario", "fig1")
        return cls.default(scenario, **data)

    def to_dict(self):
        return asdict(self)


@dataclass
class ResultTable:
    columns: List[str]
    rows: List[list]
    metadata: dict

    def column(self, name):
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def select(self, **match):
        """Rows whose named columns equal the given values."""
        idx = [self.columns.index(k) for k in match]
        vals = list(match.values())
        return [r for r in self.rows if all(math.isclose(r[i], v, rel_tol=0, abs_tol=1e-12) for i, v in zip(idx, vals))]

    def to_csv(self) -> str:
        lines = ["# %s: %s" % (k, json.dumps(self.metadata[k], sort_keys=True)) for k in sorted(self.metadata)]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        Path(path).write_bytes(self.to_csv().encode("utf-8"))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("non-finite cell in result table")
    return repr(v)


def _metadata(cfg: ScenarioConfig, **extra):
    meta = {"scenario": cfg.scenario, "seed": cfg.seed, "count": cfg.count, "version": __version__}
    meta.update(extra)
    return meta


def _pmap(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Energy-pricing sweeps
# ---------------------------------------------------------------------------

def _price_point(units, moments, reservation):
    """(rho_large, rho_small, se_large, se_small, degenerate code)."""
    eq = solve_market(units, None, moments=moments, reservation=reservation)
    rho = expected_prices(eq)
    batch = []
    for k in range(moments.n_batches):
        try:
            beq = solve_market(units, None, moments=moments.batch(k), reservation=reservation)
        except InconsistentMomentsError:
            continue
        batch.append(expected_prices(beq))
    if len(batch) > 1:
        arr = np.array(batch)
        se = arr.std(axis=0, ddof=1) / math.sqrt(len(batch))
    else:
        se = np.zeros(2)
    return rho[0], rho[1], float(se[0]), float(se[1]), DEGENERATE_CODE[eq.degenerate_flag]


def run_horizon_sweep(cfg: ScenarioConfig) -> ResultTable:
    """Expected prices against horizon for each variance and initial charge."""
    horizons = sorted(set(int(t) for t in cfg.horizons))
    alpha = cfg.alphas[0] if len(cfg.alphas) == 1 else 1.0
    points = [(var, frac) for var in cfg.variances for frac in cfg.s0_fracs]

    def curve(point):
        var, frac = point
        units = units_from_caps(cfg.caps, (alpha, alpha), frac)
        moms = estimate_moments_horizons(units, IIDNormal(var), horizons, cfg.count, cfg.seed, cfg.n_batches)
        return [[t, var, frac, *_price_point(units, m, cfg.reservation)] for t, m in zip(horizons, moms)]

    rows = []
    for block in _pmap(curve, points):
        rows.extend(block)
    cols = ["T", "sigma", "s0_frac", "rho1", "rho2", "se1", "se2", "degenerate"]
    return ResultTable(cols, rows, _metadata(cfg, alpha=alpha, caps=cfg.caps, reservation=cfg.reservation))


def run_leakage_sweep(cfg: ScenarioConfig) -> ResultTable:
    """Expected prices at a long horizon against leakage retention."""
    horizon = int(max(cfg.horizons))
    frac = cfg.s0_fracs[0]
    points = [(var, a) for var in cfg.variances for a in cfg.alphas]

    def one(point):
        var, a = point
        units = units_from_caps(cfg.caps, (a, a), frac)
        m = estimate_moments_horizons(units, IIDNormal(var), [horizon], cfg.count, cfg.seed, cfg.n_batches)[0]
        return [a, var, *_price_point(units, m, cfg.reservation)]

    rows = _pmap(one, points)
    cols = ["alpha", "sigma", "rho1", "rho2", "se1", "se2", "degenerate"]
    return ResultTable(cols, rows, _metadata(cfg, horizon=horizon, s0_frac=frac, caps=cfg.caps,
                                             reservation=cfg.reservation))


# ---------------------------------------------------------------------------
# Capacity sweeps
# ---------------------------------------------------------------------------

def _capacity_rows(cfg, gamma1):
    config = CapacityGameConfig((gamma1, cfg.gamma2), cfg.reservation, HalfNormal())
    rows = []
    for big in (0, 1):
        try:
            cand = build_candidate(big, config)
        except AmbiguousRootError:
            rows.append([gamma1, big + 1, 0.0, 0.0, 0.0, 0.0, False, False, AMBIGUOUS])
            continue
        if not cand.valid:
            code = NO_ROOT if math.isnan(cand.lambda2) else ORDERING
            rows.append([gamma1, big + 1, 0.0, 0.0, 0.0, 0.0, False, False, code])
            continue
        verdict = check_nash(cand.capacities, config, scale=cand.lambda1)
        psi = net_payoffs(cand.capacities, config)
        code = CORNER if cand.reason.startswith("corner") else OK
        rows.append([gamma1, big + 1, cand.s_large, cand.s_small, psi[0], psi[1], verdict.is_equilibrium, True, code])
    return rows


def run_capacity_sweep(cfg: ScenarioConfig) -> ResultTable:
    """Both capacity candidates and their Nash verdicts for each gamma1.

    ``candidate_id`` names the firm committing the larger capacity.
    """
    rows = []
    for block in _pmap(lambda g: _capacity_rows(cfg, g), cfg.gamma1_grid):
        rows.extend(block)
    cols = ["gamma1", "candidate_id", "S_large", "S_small", "psi1", "psi2", "is_nash", "valid", "status"]
    return ResultTable(cols, rows, _metadata(cfg, gamma2=cfg.gamma2, reservation=cfg.reservation,
                                             demand="halfnormal"))


def run_format_comparison(cfg: ScenarioConfig, capacity_table: Optional[ResultTable] = None) -> ResultTable:
    """Total profit under energy pricing against capacity pricing.

    The capacity requirement is the mean imbalance. When two energy-pricing
    equilibria coexist the larger total profit is reported.
    """
    table = capacity_table or run_capacity_sweep(cfg)
    b = SQRT_2_OVER_PI
    col = {name: k for k, name in enumerate(table.columns)}
    rows = []
    for g in cfg.gamma1_grid:
        eqs = [r for r in table.rows if r[col["gamma1"]] == g and r[col["is_nash"]]]
        if eqs:
            best = max(eqs, key=lambda r: r[col["psi1"]] + r[col["psi2"]])
            e_profit = best[col["psi1"]] + best[col["psi2"]]
            e_cap = best[col["S_large"]] + best[col["S_small"]]
        else:
            e_profit, e_cap = 0.0, 0.0
        config = CapacityGameConfig((g, cfg.gamma2), cfg.reservation, Deterministic((b,)))
        seg = deterministic_equilibrium_set(b, config)
        lo, mid, hi = seg.total_profit_range(config)
        rows.append([g, e_profit, lo, mid, hi, e_cap, seg.demand, len(eqs)])
    cols = ["gamma1", "energy_total_profit", "capacity_profit_min", "capacity_profit_mid",
            "capacity_profit_max", "energy_total_capacity", "capacity_total_capacity", "n_energy_equilibria"]
    return ResultTable(cols, rows, _metadata(cfg, gamma2=cfg.gamma2, reservation=cfg.reservation,
                                             capacity_requirement=b))


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

_PLOT_SPECS = {
    "fig1": ("T", ["rho1", "rho2"], ["sigma", "s0_frac"], "market horizon T", "expected price"),
    "fig2": ("alpha", ["rho1", "rho2"], ["sigma"], "leakage retention alpha", "expected price"),
    "fig3": ("gamma1", ["S_large", "S_small", "psi1", "psi2"], ["candidate_id"], "gamma_1", "capacity / net payoff"),
    "fig4": ("gamma1", ["energy_total_profit", "capacity_profit_min", "capacity_profit_max"], [],
             "gamma_1", "total profit"),
}

_PLOT_TEMPLATE = '''"""Plot {csv} (generated)."""
import csv
import itertools

import matplotlib.pyplot as plt

with open({csv!r}, newline="") as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))

x_col, y_cols, group_cols = {x!r}, {ys!r}, {groups!r}
key = lambda r: tuple(r[g] for g in group_cols)
fig, ax = plt.subplots()
for group, members in itertools.groupby(sorted(rows, key=key), key=key):
    members = sorted(members, key=lambda r: float(r[x_col]))
    xs = [float(r[x_col]) for r in members]
    for y in y_cols:
        label = y + ("" if not group_cols else " " + ",".join(group))
        ax.plot(xs, [float(r[y]) for r in members], label=label)
ax.set_xlabel({xlabel!r})
ax.set_ylabel({ylabel!r})
ax.legend(fontsize="small")
fig.savefig({png!r}, dpi=150)
'''


def plot_script(scenario, csv_name):
    x, ys, groups, xlabel, ylabel = _PLOT_SPECS[scenario]
    return _PLOT_TEMPLATE.format(csv=csv_name, x=x, ys=ys, groups=groups, xlabel=xlabel, ylabel=ylabel,
                                 png=csv_name.replace(".csv", ".png"))


RUNNERS = {
    "fig1": run_horizon_sweep,
    "fig2": run_leakage_sweep,
    "fig3": run_capacity_sweep,
    "fig4": run_format_comparison,
}


def run_scenario(cfg: ScenarioConfig, write=True) -> ResultTable:
    table = RUNNERS[cfg.scenario](cfg)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_name = "%s.csv" % cfg.scenario
        table.write_csv(out / csv_name)
        (out / ("%s_plot.py" % cfg.scenario)).write_text(plot_script(cfg.scenario, csv_name), encoding="utf-8")
    return table
