"""Brute-force ground truth for short horizons.

Everything here works directly from the battery recursion, so it shares no
state machinery with the engines. Horizons are capped to keep enumeration
cheap; exceeding a cap raises :class:`HorizonCapExceeded`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelSpec, as_fraction, step_battery
from .graphs import build_graphs, count_sequences
from .mdp.common import StateCapExceeded
from .mdp.softmax import solve_inner_softmax

GENERIC_CAP = 12
TREE_CAP = 8


class HorizonCapExceeded(StateCapExceeded):
    pass


def _guard(n: int, cap: int) -> None:
    if n < 1:
        raise ValueError("horizon must be at least 1")
    if n > cap:
        raise HorizonCapExceeded(f"horizon {n} exceeds the enumeration cap {cap}")


@dataclass(frozen=True)
class FiniteHorizonResult:
    horizon: int
    value: float
    argmax: object

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not math.isfinite(self.value):
            raise ValueError("finite-horizon value must be finite")

    @property
    def rate(self) -> float:
        return self.value / self.horizon


@dataclass(frozen=True)
class FeasibleCounts:
    horizon: int
    budget: int | None  # largest allowed total charge, None if unconstrained
    pairs: int  # (x^n, e^n) pairs
    inputs: int  # distinct x^n with at least one feasible e^n


def _budget(n: int, gamma) -> int | None:
    if gamma is None:
        return None
    g = as_fraction(gamma)
    if g < 0:
        raise ValueError("gamma must be non-negative")
    return math.floor(n * g)


def enumerate_feasible(spec: ChannelSpec, n: int, gamma=None, cap: int = GENERIC_CAP) -> FeasibleCounts:
    """Exact counts of feasible pairs and of feasible input sequences.

    ``gamma=None`` drops the average-charge bound.
    """
    _guard(n, cap)
    budget = _budget(n, gamma)
    limit = math.inf if budget is None else budget
    X, E = spec.input_alphabet, spec.energy_alphabet

    @lru_cache(maxsize=None)
    def pairs(t: int, b: int, spent: int) -> int:
        if t == n:
            return 1
        total = 0
        for e in E:
            if spent + e > limit:
                continue
            for x in X:
                nb = step_battery(b, e, x, spec)
                if nb is not None:
                    total += pairs(t + 1, nb, spent + e)
        return total

    # distinct inputs: carry every (battery, spent) reachable by some charge
    # sequence, keeping only the cheapest spend per battery level
    def inputs(t: int, frontier: dict) -> int:
        if t == n:
            return 1
        count = 0
        for x in X:
            nxt: dict = {}
            for b, spent in frontier.items():
                for e in E:
                    if spent + e > limit:
                        continue
                    nb = step_battery(b, e, x, spec)
                    if nb is not None and spent + e < nxt.get(nb, math.inf):
                        nxt[nb] = spent + e
            if nxt:
                count += inputs(t + 1, nxt)
        return count

    start = spec.battery_capacity
    return FeasibleCounts(n, budget, pairs(0, start, 0), inputs(0, {start: 0}))


def count_via_graphs(spec: ChannelSpec, n: int, gamma=None, cap: int = GENERIC_CAP) -> int:
    """Pair count from summing the graph count vectors over charge sequences."""
    _guard(n, cap)
    budget = _budget(n, gamma)
    gs = build_graphs(spec)
    total = 0
    for es in itertools.product(spec.energy_alphabet, repeat=n):
        if budget is None or sum(es) <= budget:
            total += sum(count_sequences(gs, es))
    return total


def _start(spec: ChannelSpec, start) -> int:
    b = spec.battery_capacity if start is None else int(start)
    if not 0 <= b <= spec.battery_capacity:
        raise ValueError(f"start level {b} outside [0, {spec.battery_capacity}]")
    return b


def _end(spec: ChannelSpec, end) -> int | None:
    return None if end is None else _start(spec, end)


def bruteforce_J_generic(spec: ChannelSpec, rho, n: int, cap: int = GENERIC_CAP,
                         start: int | None = None, end: int | None = None) -> FiniteHorizonResult:
    """Best fixed charge sequence: ``max log2(#inputs) - rho * sum(e)``.

    With ``end`` set, only inputs that leave the battery at that level count.
    """
    _guard(n, cap)
    b0 = _start(spec, start)
    bn = _end(spec, end)
    r = float(as_fraction(rho))
    gs = build_graphs(spec)
    best, arg = -math.inf, None
    for es in itertools.product(spec.energy_alphabet, repeat=n):
        final = count_sequences(gs, es, b0)
        cnt = sum(final) if bn is None else final[bn]
        if cnt == 0:
            continue
        val = math.log2(cnt) - r * sum(es)
        # strict improvement only, so ties keep the lexicographically first
        if val > best + 1e-12:
            best, arg = val, es
    return FiniteHorizonResult(n, best, arg)


def bruteforce_J_adjacent(spec: ChannelSpec, rho, n: int, cap: int = TREE_CAP,
                          start: int | None = None, end: int | None = None,
                          terminal=None) -> FiniteHorizonResult:
    """Backward induction over input histories for a charger that sees them.

    The optimal continuation from a history depends on it only through the
    slot index and the battery level, so nodes are memoized on that pair.
    ``terminal[b]`` is a reward collected on finishing at level ``b``.
    """
    _guard(n, cap)
    r = float(as_fraction(rho))
    bn = _end(spec, end)
    choice: dict = {}

    @lru_cache(maxsize=None)
    def value(t: int, b: int) -> float:
        if t == n:
            if bn is not None and b != bn:
                return -math.inf
            return 0.0 if terminal is None else float(terminal[b])
        best, arg = -math.inf, None
        for e in spec.energy_alphabet:
            cont = {}
            for x in spec.input_alphabet:
                nb = step_battery(b, e, x, spec)
                if nb is not None and value(t + 1, nb) > -math.inf:
                    cont[x] = -value(t + 1, nb)
            if not cont:
                continue
            v, _ = solve_inner_softmax(cont)
            v -= r * e
            if v > best + 1e-12:
                best, arg = v, e
        choice[(t, b)] = arg
        return best

    v = value(0, _start(spec, start))
    if v == -math.inf:
        raise ValueError(f"no input sequence of length {n} ends at level {bn}")
    return FiniteHorizonResult(n, v, dict(sorted(choice.items())))


def min_costs_by_end(spec: ChannelSpec, x_seq, start: int | None = None) -> dict:
    """Least charge keeping ``x_seq`` feasible, for every reachable final level."""
    frontier = {_start(spec, start): 0}
    for x in x_seq:
        nxt: dict = {}
        for b, c in frontier.items():
            for e in spec.energy_alphabet:
                nb = step_battery(b, e, x, spec)
                if nb is not None and c + e < nxt.get(nb, math.inf):
                    nxt[nb] = c + e
        frontier = nxt
    return frontier


def block_transfer(spec: ChannelSpec, rho, n: int, cap: int = TREE_CAP) -> np.ndarray:
    """``M[b, b'] = sum_x 2**(-rho * c(x))`` over ``x^n`` taking ``b`` to ``b'``.

    ``c`` is the least charge for that transition. Splitting a long input at
    block boundaries shows the cognitive partition sum over ``k`` blocks is at
    most ``(M^k 1)[full]``.
    """
    _guard(n, cap)
    r = float(as_fraction(rho))
    size = spec.battery_capacity + 1
    M = np.zeros((size, size))
    for b in range(size):
        for xs in itertools.product(spec.input_alphabet, repeat=n):
            for nb, c in min_costs_by_end(spec, xs, b).items():
                M[b, nb] += 2.0 ** (-r * c)
    return M


def minimal_energy_for(spec: ChannelSpec, x_seq, start: int | None = None,
                       end: int | None = None) -> tuple[tuple, int] | None:
    """Cheapest charge sequence keeping ``x_seq`` feasible, with its cost.

    Among cheapest sequences the one charging least at each earliest slot is
    returned. ``None`` when no charge sequence works. ``end`` pins the final
    battery level.
    """
    xs = tuple(x_seq)
    n = len(xs)
    cap = spec.battery_capacity
    b0 = _start(spec, start)
    bn = _end(spec, end)
    inf = math.inf
    # V[t][b]: least charge needed for xs[t:] from battery b
    V = [[inf] * (cap + 1) for _ in range(n + 1)]
    V[n] = [0 if bn is None or b == bn else inf for b in range(cap + 1)]
    for t in range(n - 1, -1, -1):
        for b in range(cap + 1):
            for e in spec.energy_alphabet:
                nb = step_battery(b, e, xs[t], spec)
                if nb is not None:
                    V[t][b] = min(V[t][b], e + V[t + 1][nb])
    if V[0][b0] == inf:
        return None
    es = []
    b = b0
    for t in range(n):
        for e in sorted(spec.energy_alphabet):
            nb = step_battery(b, e, xs[t], spec)
            if nb is not None and e + V[t + 1][nb] == V[t][b]:
                es.append(e)
                b = nb
                break
    return tuple(es), int(V[0][b0])


def bruteforce_J_cognitive(spec: ChannelSpec, rho, n: int, cap: int = TREE_CAP,
                           start: int | None = None, end: int | None = None) -> FiniteHorizonResult:
    """``log2 sum_x 2**(-rho * cost(x))`` with each input sequence charged minimally."""
    _guard(n, cap)
    r = float(as_fraction(rho))
    costs = {}
    for xs in itertools.product(spec.input_alphabet, repeat=n):
        found = minimal_energy_for(spec, xs, start, end)
        if found is not None:
            costs[xs] = found[1]
    if not costs:
        raise ValueError(f"no input sequence of length {n} is feasible")
    v, p = solve_inner_softmax({xs: r * c for xs, c in costs.items()})
    return FiniteHorizonResult(n, v, {"support": len(costs), "costs": costs})



BRUTEFORCE = {
    "generic": bruteforce_J_generic,
    "adjacent": bruteforce_J_adjacent,
    "cognitive": bruteforce_J_cognitive,
}


@dataclass(frozen=True)
class RateBracket:
    """``lower <= J(rho) <= upper`` from horizon-``n`` values.

    Starting full makes the finite-horizon value subadditive in ``n``, so its
    per-step value is an upper bound; a weighted block bound per mode usually
    does better and the smaller is kept. Lower bounds come from starting
    empty (superadditive), from repeating blocks that start and end full, and
    for the adjacent charger from the span bound; the largest is kept.
    """

    horizon: int
    lower: float
    upper: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def _generic_weighted_upper(spec: ChannelSpec, rho: float, n: int) -> float:
    # N_{t+n} . w <= (N_t . w) * max_b (A w)_b / w_b for any positive w
    levels = range(spec.battery_capacity + 1)
    J = np.array([bruteforce_J_generic(spec, rho, n, start=b).value for b in levels])
    w = np.exp2(J - J.max())
    gs = build_graphs(spec)
    best = -math.inf
    for es in itertools.product(spec.energy_alphabet, repeat=n):
        A = np.array([count_sequences(gs, es, b) for b in levels], dtype=float)
        growth = (A @ w / w).max()
        if growth > 0:
            best = max(best, math.log2(growth) - rho * sum(es))
    return best / n


def _adjacent_span(spec: ChannelSpec, rho: float, n: int) -> tuple[float, float]:
    # the horizon-n operator is monotone and commutes with adding constants,
    # so min and max of T^n h - h bracket n times the rate for any h
    levels = range(spec.battery_capacity + 1)
    h = [bruteforce_J_adjacent(spec, rho, n, start=b).value for b in levels]
    d = [bruteforce_J_adjacent(spec, rho, n, start=b, terminal=h).value - h[b] for b in levels]
    return min(d) / n, max(d) / n


def rate_bracket(spec: ChannelSpec, mode: str, rho, n: int) -> RateBracket:
    f = BRUTEFORCE[mode]
    r = float(as_fraction(rho))
    full = spec.battery_capacity
    hi = f(spec, rho, n).value / n
    lo = f(spec, rho, n, start=0).value / n
    try:
        lo = max(lo, f(spec, rho, n, end=full).value / n)
    except ValueError:
        pass  # nothing returns to full within n steps
    if mode == "generic":
        hi = min(hi, _generic_weighted_upper(spec, r, n))
    elif mode == "adjacent":
        a, b = _adjacent_span(spec, r, n)
        lo, hi = max(lo, a), min(hi, b)
    else:
        radius = np.abs(np.linalg.eigvals(block_transfer(spec, rho, n))).max()
        hi = min(hi, math.log2(radius) / n)
    return RateBracket(n, lo, hi)


def exhaustive_min_costs(spec: ChannelSpec, n: int, cap: int = TREE_CAP) -> dict:
    """Least total charge per input sequence, by trying every charge sequence.

    Returns a map from each feasible ``x^n`` to its least cost. All pairs are
    replayed at once as integer arrays.
    """
    _guard(n, cap)
    X = spec.input_alphabet
    phi = np.array(spec.costs, dtype=np.int64)
    E = np.array(spec.energy_alphabet, dtype=np.int64)
    xi = np.array(list(itertools.product(range(len(X)), repeat=n)), dtype=np.int64).reshape(-1, n)
    es = np.array(list(itertools.product(E.tolist(), repeat=n)), dtype=np.int64).reshape(-1, n)
    B = spec.battery_capacity
    b = np.full((len(xi), len(es)), B, dtype=np.int64)
    ok = np.ones(b.shape, dtype=bool)
    for t in range(n):
        avail = np.minimum(b + es[None, :, t], B)
        c = phi[xi[:, t]][:, None]
        ok &= c <= avail
        b = avail - c
    cost = np.where(ok, es.sum(axis=1)[None, :], np.iinfo(np.int64).max)
    best = cost.min(axis=1)
    none = np.iinfo(np.int64).max
    return {tuple(X[i] for i in row): int(v) for row, v in zip(xi, best) if v != none}
