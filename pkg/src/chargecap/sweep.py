"""From Lagrangian duals to capacity-cost curves.

A solve at multiplier ``rho`` returns ``J(rho)`` and the average charge
``Gamma(rho)`` of its optimal policy; ``(Gamma, J + rho * Gamma)`` is then a
point on the capacity curve and ``C(G) <= J(rho) + rho * G`` bounds it from
above everywhere. Between two such points the chord is achievable by time
sharing. The sweep inserts new multipliers at chord slopes until the gap
between chord and the tangent bound is below ``curve_tol``; a solve at a
chord slope that finds nothing above the chord certifies an exact time-share
segment (a breakpoint of the dual).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import ChannelSpec, as_fraction
from .closed_forms import NotPrecisionError, ub_capacity
from .graphs import BatteryGraphSet, build_graphs
from .mdp.adjacent import adjacent_problem, adjacent_relative_vi
from .mdp.cognitive import (
    build_cost_automaton,
    cognitive_belief_vi,
    cognitive_reduced_vi,
    minimal_charging_policy,
)
from .mdp.common import DualSolve, SoftmaxPolicy, cesaro_distribution, stationary
from .mdp.generic import GenericPolicy, build_simplex_graph, generic_value_iteration
from .mdp.softmax import solve_inner_softmax

MODES = ("generic", "adjacent", "cognitive", "upper_bound", "precision")
DUAL_TOL = 1e-10


def default_rho_grid() -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-3, math.log10(8), 200)])


def parse_rho_grid(text: str) -> np.ndarray:
    """``"a:b:step"`` (inclusive) or a comma-separated list; fractions allowed."""
    text = text.strip()
    if not text:
        raise ValueError("empty rho grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("rho grid range must be start:stop:step")
        a, b, s = (as_fraction(p) for p in parts)
        if s <= 0 or b < a:
            raise ValueError("rho grid range must be increasing with a positive step")
        n = int((b - a) / s)
        vals = [float(a + k * s) for k in range(n + 1)]
    else:
        vals = [float(as_fraction(p)) for p in text.split(",") if p.strip()]
    if not vals:
        raise ValueError("empty rho grid")
    if any(v < 0 for v in vals) or any(b < a for a, b in zip(vals, vals[1:])):
        raise ValueError("rho grid must be non-negative and sorted")
    return np.array(vals)


# ---------------------------------------------------------------------------
# engines behind a common call signature


def _ub_solve(spec: ChannelSpec, rho: float) -> DualSolve:
    costs = np.array(spec.costs, dtype=float)
    val, p = solve_inner_softmax(rho * costs)
    return DualSolve(rho, val, np.zeros(1), p, 0.0, 1, float(p @ costs), engine="upper_bound")


class Engine:
    """Caches per-spec structures and solves the dual for one charger mode."""

    def __init__(self, spec: ChannelSpec, mode: str, *, reduced: bool = False,
                 max_depth: int = 1024, state_cap: int = 100_000, on_cap: str = "raise",
                 tolerance: float = 1e-12):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        if mode == "precision" and not spec.is_precision():
            raise NotPrecisionError("some symbol cost is not a deliverable charge")
        self.spec = spec
        self.mode = mode
        self.reduced = reduced
        self.tolerance = tolerance
        self.graphset: BatteryGraphSet = build_graphs(spec)
        self.solves = 0
        self._last = None
        if mode == "generic":
            self._graph = build_simplex_graph(self.graphset, max_depth, state_cap, on_cap)
        elif mode == "adjacent":
            self._problem = adjacent_problem(self.graphset)
        elif mode == "cognitive":
            if reduced:
                self._rule = minimal_charging_policy(self.graphset)
            else:
                self._aut = build_cost_automaton(self.graphset, state_cap)

    @property
    def name(self) -> str:
        return "cognitive-reduced" if self.reduced and self.mode == "cognitive" else self.mode

    def __call__(self, rho) -> DualSolve:
        rho = float(rho)
        self.solves += 1
        if self.mode == "generic":
            out = generic_value_iteration(self.graphset, rho, graph=self._graph, warm=self._last)
        elif self.mode == "adjacent":
            h0 = self._last.h if self._last is not None else None
            out = adjacent_relative_vi(self.graphset, rho, self.tolerance,
                                       problem=self._problem, h0=h0)
        elif self.mode == "cognitive":
            if self.reduced:
                out = cognitive_reduced_vi(self.graphset, rho, self.tolerance, rule=self._rule)
            else:
                out = cognitive_belief_vi(self.graphset, rho, self.tolerance, automaton=self._aut)
        else:
            out = _ub_solve(self.spec, rho)
        self._last = out
        return out

    @property
    def truncated(self) -> bool:
        """True when the generic state graph was cut short."""
        return self.mode == "generic" and self._graph.truncated

    @property
    def floor(self) -> float:
        """Capacity at zero budget: only zero-cost symbols are ever sent."""
        return math.log2(self.spec.n_zero_symbols)


def gamma_of_policy(graphset: BatteryGraphSet, policy, mode: str) -> float:
    """Long-run average charge of a stationary policy."""
    if isinstance(policy, GenericPolicy):
        return policy.average_energy()
    if isinstance(policy, (tuple, list)) and mode == "generic":
        return float(np.mean(policy))
    if isinstance(policy, SoftmaxPolicy):
        P = policy.transition_matrix()
        if mode == "adjacent":
            start = list(policy.problem.state_labels).index(graphset.capacity)
            pi = cesaro_distribution(P, start)
            return float(pi @ policy.energy)
        pi = stationary(P)
        return float(pi @ policy.expected_cost())
    raise TypeError(f"unsupported policy type {type(policy).__name__}")


# ---------------------------------------------------------------------------
# curves


@dataclass
class CurvePoint:
    gamma: float
    capacity: float
    rho: float | None
    residual: float | None
    source: str = "engine"  # engine | timeshare | origin
    alpha: float | None = None
    iterations: int = 0


@dataclass
class CapacityCurve:
    mode: str
    points: list
    info: dict = field(default_factory=dict)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.gamma for p in self.points])

    @property
    def capacities(self) -> np.ndarray:
        return np.array([p.capacity for p in self.points])

    @property
    def saturation_gamma(self) -> float:
        return self.points[-1].gamma

    @property
    def breakpoints(self) -> list:
        return [p for p in self.points if p.source == "timeshare"]

    def value_at(self, gamma) -> float:
        g = float(as_fraction(gamma)) if not isinstance(gamma, float) else gamma
        return float(np.interp(g, self.gammas, self.capacities))

    def __call__(self, gamma):
        return np.interp(np.asarray(gamma, dtype=float), self.gammas, self.capacities)

    def is_concave(self, tol: float = 1e-8) -> bool:
        return chord_violation(self.gammas, self.capacities) <= tol

    def rows(self) -> list[tuple]:
        return [
            (p.gamma, p.capacity, self.mode, p.rho, p.residual, p.alpha)
            for p in self.points
        ]

    def to_csv(self) -> str:
        lines = ["gamma,capacity,mode,rho,residual,timeshare_alpha"]
        for g, c, m, r, res, a in self.rows():
            lines.append(",".join([_num(g), _num(c), m, _num(r), _num(res), _num(a)]))
        return "\n".join(lines) + "\n"


def _num(v) -> str:
    if v is None:
        return ""
    return f"{float(v):.12g}"


def chord_violation(g: np.ndarray, c: np.ndarray) -> float:
    """Largest amount by which a middle point falls below its neighbours' chord."""
    worst = 0.0
    for i in range(1, len(g) - 1):
        t = (g[i] - g[i - 1]) / (g[i + 1] - g[i - 1])
        chord = c[i - 1] + t * (c[i + 1] - c[i - 1])
        worst = max(worst, chord - c[i])
    return worst


def concave_envelope(points: list, tol: float = 1e-12) -> list:
    """Upper concave hull; collinear points are kept."""
    pts = sorted(points, key=lambda p: (p.gamma, -p.capacity))
    uniq = []
    for p in pts:
        if uniq and abs(p.gamma - uniq[-1].gamma) <= 1e-13:
            continue
        uniq.append(p)
    hull: list = []
    for p in uniq:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            t = (b.gamma - a.gamma) / (p.gamma - a.gamma)
            chord = a.capacity + t * (p.capacity - a.capacity)
            if b.capacity < chord - tol:
                hull.pop()
            else:
                break
        hull.append(p)
    # drop anything after the maximum: the curve is flat beyond saturation
    top = max(range(len(hull)), key=lambda i: (hull[i].capacity, -i))
    return hull[: top + 1]


def _gap(a: DualSolve, b: DualSolve) -> float:
    """Largest distance between the chord and the tangent bound on [b, a]."""
    if a.gamma - b.gamma <= 1e-13 or a.rho == b.rho:
        return 0.0
    ca, cb = a.capacity, b.capacity
    gx = (b.J - a.J) / (a.rho - b.rho)
    gx = min(max(gx, b.gamma), a.gamma)
    upper = min(a.J + a.rho * gx, b.J + b.rho * gx)
    chord = cb + (gx - b.gamma) * (ca - cb) / (a.gamma - b.gamma)
    return upper - chord


def sweep(
    spec: ChannelSpec,
    mode: str,
    rho_grid=None,
    *,
    curve_tol: float = 1e-5,
    max_solves: int = 20_000,
    engine: Engine | None = None,
    **engine_opts,
) -> CapacityCurve:
    eng = engine or Engine(spec, mode, **engine_opts)
    grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty rho grid")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ValueError("rho grid must be non-negative and sorted")
    solves = [eng(r) for r in grid]
    breaks = []
    out = [solves[0]]
    stack = list(reversed(solves[1:]))
    while stack:
        b = stack.pop()
        a = out[-1]
        dg = a.gamma - b.gamma
        steep = dg > 1e-4 and dg > 5 * (b.rho - a.rho)
        if eng.solves >= max_solves or (_gap(a, b) <= curve_tol and not steep):
            out.append(b)
            continue
        rx = (a.capacity - b.capacity) / (a.gamma - b.gamma)
        rx = min(max(rx, a.rho), b.rho)
        x = eng(rx)
        above = x.J - (a.capacity - rx * a.gamma)
        if above <= DUAL_TOL or x.gamma >= a.gamma - 1e-13 or x.gamma <= b.gamma + 1e-13:
            breaks.append((rx, a, b))
            out.append(b)
            continue
        stack.append(b)
        stack.append(x)

    pts = [
        CurvePoint(s.gamma, s.capacity, s.rho, s.bellman_residual, "engine", None, s.iterations)
        for s in out
    ]
    for rx, a, b in breaks:
        if a.gamma - b.gamma > 1e-4:
            g = 0.5 * (a.gamma + b.gamma)
            pts.append(CurvePoint(g, 0.5 * (a.capacity + b.capacity), rx,
                                  max(a.bellman_residual, b.bellman_residual), "timeshare", 0.5))
    pts.append(CurvePoint(0.0, eng.floor, None, None, "origin"))
    hull = concave_envelope(pts)
    info = {
        "engine": eng.name,
        "grid_points": int(grid.size),
        "solves": eng.solves,
        "curve_tol": curve_tol,
        "rho_max": float(grid[-1]),
        "breakpoints": sorted({round(rx, 12) for rx, a, b in breaks if a.gamma - b.gamma > 1e-4}),
    }
    if mode == "generic":
        info["truncated"] = bool(out[-1].info.get("truncated", False))
    return CapacityCurve(mode if mode != "cognitive" or not eng.reduced else "cognitive", hull, info)


def upper_bound_curve(spec: ChannelSpec, gamma_grid) -> CapacityCurve:
    gs = sorted({float(as_fraction(g)) for g in gamma_grid} | {0.0})
    pts = [CurvePoint(g, ub_capacity(spec, g), None, 0.0, "engine") for g in gs]
    costs = np.array(spec.costs, dtype=float)
    sat = float(costs.mean())
    if gs[-1] < sat:
        pts.append(CurvePoint(sat, math.log2(len(costs)), 0.0, 0.0, "engine"))
    return CapacityCurve("upper_bound", concave_envelope(pts))


# ---------------------------------------------------------------------------
# single-budget evaluation


@dataclass
class CapacityValue:
    gamma: float
    capacity: float
    upper: float
    rho: float | None
    residual: float
    alpha: float | None  # weight on the larger-charge policy when time sharing
    solves: int
    note: str = ""


def _share_note(lo, hi) -> str:
    # the chord met the dual across a wide budget gap, or the budget jumped
    # over a vanishing multiplier interval: either way two distinct optimal
    # policies are being mixed
    dg = lo.gamma - hi.gamma
    if dg > 1e-4 or (dg > 1e-6 and dg > 1e3 * (hi.rho - lo.rho)):
        return "breakpoint"
    return "tangent"


def capacity_at(engine: Engine, gamma, *, tol: float = 1e-10, rho_max: float = 256.0,
                max_iter: int = 200) -> CapacityValue:
    """Capacity at one budget by cutting planes on the convex dual."""
    g = float(as_fraction(gamma))
    if g < 0:
        raise ValueError("gamma must be non-negative")
    start_solves = engine.solves
    lo = engine(0.0)
    if g >= lo.gamma - 1e-13:
        return CapacityValue(g, lo.J, lo.J, 0.0, lo.bellman_residual, None,
                             engine.solves - start_solves, "saturated")
    if g == 0:
        return CapacityValue(0.0, engine.floor, engine.floor, None, 0.0, None,
                             engine.solves - start_solves, "zero budget")
    r = 1.0
    hi = engine(r)
    while hi.gamma > g:
        if hi.gamma < lo.gamma:
            lo = hi
        r *= 2
        if r > rho_max:
            # below the smallest reachable charge rate: share with the zero-budget point
            a = g / lo.gamma
            c = a * lo.capacity + (1 - a) * engine.floor
            return CapacityValue(g, c, math.nan, None, lo.bellman_residual, a,
                                 engine.solves - start_solves, "origin share")
        hi = engine(r)
    residual = max(lo.bellman_residual, hi.bellman_residual)
    for it in range(max_iter):
        if abs(hi.gamma - g) <= 1e-13:
            return CapacityValue(g, hi.capacity, hi.capacity, hi.rho, hi.bellman_residual,
                                 None, engine.solves - start_solves)
        if abs(lo.gamma - g) <= 1e-13:
            return CapacityValue(g, lo.capacity, lo.capacity, lo.rho, lo.bellman_residual,
                                 None, engine.solves - start_solves)
        a = (g - hi.gamma) / (lo.gamma - hi.gamma)
        chord = a * lo.capacity + (1 - a) * hi.capacity
        upper = min(lo.J + lo.rho * g, hi.J + hi.rho * g)
        if upper - chord <= tol:
            return CapacityValue(g, chord, upper, None, residual, a,
                                 engine.solves - start_solves, _share_note(lo, hi))
        rx = (lo.capacity - hi.capacity) / (lo.gamma - hi.gamma)
        if it % 3 == 2:
            rx = 0.5 * (lo.rho + hi.rho)
        rx = min(max(rx, lo.rho), hi.rho)
        x = engine(rx)
        residual = max(residual, x.bellman_residual)
        if x.J - (lo.capacity - rx * lo.gamma) <= DUAL_TOL and it % 3 != 2:
            # nothing beats the chord: either an exact time-share segment, or
            # the chord is already tangent to a smooth curve
            return CapacityValue(g, chord, chord, rx, residual, a, engine.solves - start_solves,
                                 _share_note(lo, hi))
        if x.gamma >= g:
            lo = x
        else:
            hi = x
    raise RuntimeError("capacity evaluation did not converge")


def capacity(spec: ChannelSpec, mode: str, gamma, **opts) -> CapacityValue:
    if mode in ("upper_bound", "precision"):
        Engine(spec, mode)  # validates the precision condition
        g = float(as_fraction(gamma))
        v = ub_capacity(spec, g)
        return CapacityValue(g, v, v, None, 0.0, None, 0, "closed form")
    return capacity_at(Engine(spec, mode, **opts), gamma)
