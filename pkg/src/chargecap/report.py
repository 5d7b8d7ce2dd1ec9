"""Verification reports for the ternary example and the four-curve table.

Each report entry compares an expected number with a computed one. The
``source`` field says where the expected number comes from: ``closed-form``
(analytic capacity or dual), ``exact`` (a value fixed by the model itself, such
as an integer count), or ``cross-check`` (a second, independent computation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .channel import ChannelSpec, replay, ternary_example
from .closed_forms import (
    LOG3,
    c0_closed,
    cm_closed,
    cx_closed,
    gamma_closed,
    j_closed,
    ub_capacity,
    zeta_root,
)
from .graphs import build_graphs
from .mdp.cognitive import cognitive_reduced_vi, minimal_charging_policy
from .mdp.common import SoftmaxPolicy, StateCapExceeded
from .oracle import (
    BRUTEFORCE,
    count_via_graphs,
    enumerate_feasible,
    exhaustive_min_costs,
    minimal_energy_for,
    rate_bracket,
)
from .sweep import CapacityCurve, Engine, chord_violation, sweep, upper_bound_curve

DEFAULT_TOLERANCES = {
    "closed_form": 1e-4,
    "identity": 1e-8,
    "dual": 1e-6,
    "ordering": 1e-6,
    "concavity": 1e-8,
    "simulation": 1e-3,
    "count": 0,
}

CLOSED = {"generic": c0_closed, "adjacent": cx_closed, "cognitive": cm_closed}


@dataclass
class Entry:
    check: str
    expected: float
    actual: float
    tolerance: float
    source: str
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(abs(self.expected - self.actual) <= self.tolerance)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (
            f"{mark} {self.check}: expected={self.expected:.12g} actual={self.actual:.12g} "
            f"tol={self.tolerance:g} source={self.source}"
        )


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    def add(self, check, expected, actual, tolerance, source) -> Entry:
        e = Entry(check, float(expected), float(actual), float(tolerance), source)
        self.entries.append(e)
        return e

    @property
    def n_passed(self) -> int:
        return sum(e.passed for e in self.entries)

    @property
    def n_failed(self) -> int:
        return len(self.entries) - self.n_passed

    @property
    def ok(self) -> bool:
        return self.n_failed == 0

    def summary(self) -> str:
        return f"{self.n_passed} passed, {self.n_failed} failed, {len(self.entries)} checks"

    def to_text(self) -> str:
        return "\n".join([e.line() for e in self.entries] + [self.summary()]) + "\n"

    def failures(self) -> list:
        return [e for e in self.entries if not e.passed]


def _gamma_grid(step: Fraction, top: Fraction = Fraction(2)) -> list[Fraction]:
    n = int(top / step)
    return [k * step for k in range(n + 1)]


def simulate_chain(policy: SoftmaxPolicy, steps: int, seed: int = 0, start: int = 0) -> float:
    """Average edge cost along one sampled path of a single-action policy."""
    prob = policy.problem
    rng = np.random.default_rng(seed)
    cums, nexts, costs = [], [], []
    for s in range(prob.n_states):
        ks = list(policy.edges_of(s))
        p = policy.edge_prob[ks]
        cums.append(np.cumsum(p / p.sum()))
        nexts.append(prob.edge_next[ks])
        costs.append(prob.edge_cost[ks])
    u = rng.random(steps)
    s = start
    total = 0.0
    for t in range(steps):
        k = min(int(np.searchsorted(cums[s], u[t], side="right")), len(cums[s]) - 1)
        total += costs[s][k]
        s = int(nexts[s][k])
    return total / steps


def verify_ternary_example(tolerances: dict | None = None, *, seed: int = 0,
                           sim_steps: int = 1_000_000) -> VerificationReport:
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    spec = ternary_example()
    rep = VerificationReport()
    grid = _gamma_grid(Fraction(1, 12))

    curves = {m: sweep(spec, m) for m in CLOSED}
    for m, f in CLOSED.items():
        for g in grid:
            rep.add(f"{m} capacity at gamma={g}", f(g), curves[m].value_at(float(g)),
                    tol["closed_form"], "closed-form")
        rep.add(f"{m} curve concavity", 0.0, chord_violation(curves[m].gammas, curves[m].capacities),
                tol["concavity"], "exact")

    # closed-form identities
    rep.add("generic capacity at gamma=1", math.log2(6) / 2, c0_closed(1), tol["identity"], "closed-form")
    rep.add("cognitive capacity at gamma=10/9", LOG3, cm_closed(Fraction(10, 9)), tol["identity"], "closed-form")
    rep.add("cubic root at gamma=10/9", 3, float(zeta_root(Fraction(10, 9))), 0, "exact")
    rep.add("adjacent dual branches agree at rho=1/2", 1.0, j_closed("adjacent", 0.5), tol["identity"], "closed-form")
    rep.add("adjacent time-share segment at gamma=5/6", 5 / 12 + 1, cx_closed(Fraction(5, 6)),
            tol["identity"], "closed-form")

    # engine duals against closed forms
    engines = {m: Engine(spec, m) for m in CLOSED}
    for rho in (0.25, 0.5, 1.0, 2.0):
        for m, eng in engines.items():
            s = eng(rho)
            rep.add(f"{m} dual at rho={rho:g}", j_closed(m, rho), s.J, tol["dual"], "closed-form")

    # ordering on the grid
    for g in grid:
        c0, cx, cm = (curves[m].value_at(float(g)) for m in CLOSED)
        ub = ub_capacity(spec, g)
        worst = max(c0 - cx, cx - cm, cm - ub, 0.0)
        rep.add(f"ordering at gamma={g}", 0.0, worst, tol["ordering"], "exact")

    # oracle checks: exact counts and finite-horizon brackets
    for n in (4, 6, 8):
        for g in (None, Fraction(2, 3), Fraction(1)):
            label = "free" if g is None else str(g)
            rep.add(f"pair count n={n} gamma={label}", enumerate_feasible(spec, n, g).pairs,
                    count_via_graphs(spec, n, g), tol["count"], "cross-check")
        for m in CLOSED:
            for rho in (0.25, 0.5, 1.0):
                br = rate_bracket(spec, m, rho, n)
                lam = j_closed(m, rho)
                outside = max(br.lower - lam, lam - br.upper, 0.0)
                rep.add(f"{m} horizon-{n} bracket at rho={rho:g}", 0.0, outside, 1e-9, "cross-check")
                # starting full instead of empty is worth at most one full charge
                excess = max(br.gap - rho * spec.battery_capacity / n, 0.0)
                rep.add(f"{m} horizon-{n} bracket width at rho={rho:g}", 0.0, excess, 1e-9, "cross-check")

    # long-run charge of the cognitive policy at rho=1
    gs = build_graphs(spec)
    sol = cognitive_reduced_vi(gs, 1.0, rule=minimal_charging_policy(gs))
    expected = gamma_closed("cognitive", 1.0)
    rep.add("cognitive stationary gamma at rho=1", expected, sol.gamma, tol["identity"], "closed-form")
    sim = simulate_chain(sol.policy, sim_steps, seed=seed)
    rep.add("cognitive simulated gamma at rho=1", expected, sim, tol["simulation"], "cross-check")
    return rep


def verify_spec(spec: ChannelSpec, depth: int = 6, *, rhos=(0.25, 0.5, 1.0),
                state_cap: int = 20_000) -> VerificationReport:
    """Oracle checks that make sense for any valid spec.

    Counts, minimal charging, finite-horizon ordering of the three chargers,
    and horizon brackets around each engine's dual value. A generic engine
    whose state graph had to be truncated only gives a lower bound, so only
    the upper side of its bracket is checked.
    """
    if depth < 1:
        raise ValueError("oracle depth must be at least 1")
    rep = VerificationReport()
    half = Fraction(spec.max_energy, 2)
    for n in range(1, depth + 1):
        for g in (None, half):
            label = "free" if g is None else str(g)
            rep.add(f"pair count n={n} gamma={label}", enumerate_feasible(spec, n, g).pairs,
                    count_via_graphs(spec, n, g), 0, "cross-check")

    for n in range(1, min(depth, 6) + 1):
        best = exhaustive_min_costs(spec, n)
        worst_gap, bad = 0, 0
        for xs, c in best.items():
            found = minimal_energy_for(spec, xs)
            if found is None or not replay(xs, found[0], spec).feasible:
                bad += 1
                continue
            worst_gap = max(worst_gap, found[1] - c)
        rep.add(f"minimal charge optimal n={n}", 0, worst_gap, 0, "cross-check")
        rep.add(f"minimal charge feasible n={n}", 0, bad, 0, "cross-check")

    for n in range(1, depth + 1):
        for rho in rhos:
            v = {m: f(spec, rho, n).value for m, f in BRUTEFORCE.items()}
            worst = max(v["generic"] - v["adjacent"], v["adjacent"] - v["cognitive"], 0.0)
            rep.add(f"horizon-{n} ordering at rho={rho:g}", 0.0, worst, 1e-9, "exact")

    for m in BRUTEFORCE:
        try:
            eng = Engine(spec, m, state_cap=state_cap, on_cap="truncate")
        except StateCapExceeded:
            continue
        for rho in rhos:
            lam = eng(rho).J
            br = rate_bracket(spec, m, rho, depth)
            below = 0.0 if eng.truncated else br.lower - lam
            outside = max(below, lam - br.upper, 0.0)
            rep.add(f"{m} horizon-{depth} bracket at rho={rho:g}", 0.0, outside, 1e-8, "cross-check")
    return rep


# ---------------------------------------------------------------------------
# four-curve table


class ShapeError(RuntimeError):
    pass


@dataclass
class Fig8Table:
    curves: dict  # mode -> CapacityCurve
    gammas: list  # exact grid
    rows: list  # (gamma, c_generic, c_adjacent, c_cognitive, c_ub)

    def to_csv(self) -> str:
        lines = ["gamma,c_generic,c_adjacent,c_cognitive,c_ub"]
        for row in self.rows:
            lines.append(",".join(f"{float(v):.12g}" for v in row))
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> np.ndarray:
        idx = {"generic": 1, "adjacent": 2, "cognitive": 3, "upper_bound": 4}[name]
        return np.array([r[idx] for r in self.rows])


def reproduce_fig8(resolution=Fraction(1, 48), spec: ChannelSpec | None = None,
                   curve_tol: float = 1e-5) -> Fig8Table:
    """Capacity of the ternary example for all charger types on one grid.

    Raises :class:`ShapeError` if a column is not monotone, not concave, or
    the columns are out of order.
    """
    spec = spec or ternary_example()
    step = Fraction(resolution)
    if step <= 0:
        raise ValueError("resolution must be positive")
    grid = _gamma_grid(step, Fraction(spec.max_energy))
    curves: dict[str, CapacityCurve] = {
        m: sweep(spec, m, curve_tol=curve_tol) for m in ("generic", "adjacent", "cognitive")
    }
    curves["upper_bound"] = upper_bound_curve(spec, grid)
    rows = []
    for g in grid:
        gf = float(g)
        rows.append((gf,) + tuple(curves[m].value_at(gf) for m in ("generic", "adjacent", "cognitive"))
                    + (ub_capacity(spec, g),))
    table = Fig8Table(curves, grid, rows)
    _check_shape(table)
    return table


def _check_shape(table: Fig8Table, tol: float = 1e-6) -> None:
    g = np.array([float(x) for x in table.gammas])
    cols = [table.column(m) for m in ("generic", "adjacent", "cognitive", "upper_bound")]
    for name, c in zip(("generic", "adjacent", "cognitive", "upper_bound"), cols):
        if np.any(np.diff(c) < -tol):
            raise ShapeError(f"{name} column decreases")
        if chord_violation(g, c) > tol:
            raise ShapeError(f"{name} column is not concave")
    for lo, hi in zip(cols, cols[1:]):
        if np.any(lo > hi + tol):
            raise ShapeError("columns out of order")
