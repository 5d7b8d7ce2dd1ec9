"""Charger that knows the message.

Because the charger can plan with the whole codeword, the best charge
sequence for a codeword is a cheapest feasible one, and the Lagrangian value
at horizon ``n`` is ``log2 sum_x 2**(-rho * V(x))`` with ``V`` the minimal
total charge. Two engines evaluate the infinite-horizon limit.

``cognitive_belief_vi`` tracks, for the observed input prefix, the cheapest
way to end in each battery level (relative to the cheapest overall, with
levels that are dominated by a fuller and no costlier level removed). This
information state determines the belief support over battery levels and is
exact for every spec; only finitely many such vectors occur when relative
costs stay bounded, which the state cap guards.

``cognitive_reduced_vi`` applies when a causal rule ``e*(b, x)`` is always
cheapest; the state is then just the battery level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graphs import BatteryGraphSet
from .common import (
    DualSolve,
    ReductionUnavailable,
    SoftmaxProblem,
    StateCapExceeded,
    cyclic_components,
    extract_policy,
    reachable_from,
    relative_value_iteration,
    stationary,
)

INF = np.inf


# ---------------------------------------------------------------------------
# cheapest charge tables for all short input sequences


def min_cost_tables(graphset: BatteryGraphSet, depth: int) -> list[np.ndarray]:
    """``V[k][y, b]``: cheapest total charge for the length-``k`` sequence ``y``
    (base-|X| index, first symbol most significant) starting from level ``b``;
    ``inf`` when no charge sequence makes it feasible."""
    spec = graphset.spec
    nb_ = graphset.capacity + 1
    nx = spec.n_symbols
    trans = _transitions(graphset)
    V = [np.zeros((1, nb_))]
    for k in range(1, depth + 1):
        prev = V[-1]
        cur = np.full((nx, prev.shape[0], nb_), INF)
        for xi in range(nx):
            for b in range(nb_):
                for e, nxt in trans[b][xi]:
                    cur[xi, :, b] = np.minimum(cur[xi, :, b], e + prev[:, nxt])
        V.append(cur.reshape(nx * prev.shape[0], nb_))
    return V


def _transitions(graphset: BatteryGraphSet):
    """``trans[b][xi]`` = list of ``(e, next level)`` feasible pairs."""
    spec = graphset.spec
    out = []
    for b in range(graphset.capacity + 1):
        row = []
        for x in spec.input_alphabet:
            opts = []
            for e in sorted(spec.energy_alphabet):
                nb = graphset.next_state(b, e, x)
                if nb is not None:
                    opts.append((e, nb))
            row.append(opts)
        out.append(row)
    return out


@dataclass
class ChargingRule:
    """Causal cheapest-charge rule ``e*(b, x)`` and its transition ``f_B``."""

    available: bool
    energy: dict = field(default_factory=dict)  # (b, x) -> e
    next_state: dict = field(default_factory=dict)  # (b, x) -> b'
    states: tuple = ()  # levels reachable from a full battery under the rule
    recurrent: tuple = ()  # levels in closed classes of the rule graph
    depth: int = 0
    reason: str = ""

    def __bool__(self):
        return self.available

    def edges(self):
        for (b, x), e in sorted(self.energy.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
            yield b, x, e, self.next_state[(b, x)]

    def describe(self) -> list[str]:
        if not self.available:
            return [f"unavailable: {self.reason}"]
        return [f"{b}: {x}({e}) -> {nb}" for b, x, e, nb in self.edges()]


def minimal_charging_policy(graphset: BatteryGraphSet, depth: int = 8) -> ChargingRule:
    """Try to build a causal rule that is cheapest for every continuation.

    For each reachable ``(b, x)`` the rule takes the smallest charge that is
    optimal against every continuation up to ``depth - 1`` further symbols;
    if no single charge is, the reduction is unavailable. The rule is then
    replayed from a full battery on every sequence up to ``depth`` and its
    cost compared with the cheapest cost.
    """
    spec = graphset.spec
    nx = spec.n_symbols
    cap = graphset.capacity
    V = min_cost_tables(graphset, depth)
    trans = _transitions(graphset)

    def ok(b, xi, e, nb):
        for k in range(depth):
            tail = V[k][:, nb] + e
            whole = V[k + 1].reshape(nx, -1, cap + 1)[xi, :, b]
            if not np.array_equal(tail, whole):
                return False
        return True

    rule_e, rule_n = {}, {}
    seen, queue = {cap}, [cap]
    while queue:
        b = queue.pop(0)
        for xi, x in enumerate(spec.input_alphabet):
            opts = trans[b][xi]
            if not opts:
                continue
            good = [(e, nb) for e, nb in opts if ok(b, xi, e, nb)]
            if not good:
                return ChargingRule(
                    False,
                    depth=depth,
                    reason=f"cheapest charge at level {b} for symbol {x!r} depends on later symbols",
                )
            e, nb = good[0]
            rule_e[(b, x)] = e
            rule_n[(b, x)] = nb
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)

    # replay certification
    e_tab = np.full((cap + 1, nx), -1)
    n_tab = np.full((cap + 1, nx), -1)
    for (b, x), e in rule_e.items():
        e_tab[b, spec.symbol_index(x)] = e
        n_tab[b, spec.symbol_index(x)] = rule_n[(b, x)]
    state = np.array([cap])
    cost = np.zeros(1)
    alive = np.ones(1, dtype=bool)
    for k in range(1, depth + 1):
        state = np.repeat(state, nx)
        cost = np.repeat(cost, nx)
        alive = np.repeat(alive, nx)
        xs = np.tile(np.arange(nx), len(state) // nx)
        st = np.where(alive, state, 0)
        e = e_tab[st, xs]
        alive = alive & (e >= 0)
        cost = np.where(alive, cost + np.maximum(e, 0), INF)
        state = np.where(alive, n_tab[st, xs], 0)
        if not np.array_equal(cost, V[k][:, cap]):
            return ChargingRule(False, depth=depth, reason=f"replay mismatch at length {k}")

    states = tuple(sorted(seen))
    recurrent = _closed_levels(states, rule_n)
    return ChargingRule(True, rule_e, rule_n, states, recurrent, depth)


def _closed_levels(states, rule_n) -> tuple:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    pos = {b: i for i, b in enumerate(states)}
    rows, cols = [], []
    for (b, _), nb in rule_n.items():
        rows.append(pos[b])
        cols.append(pos[nb])
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(states),) * 2)
    ncomp, lab = connected_components(adj, directed=True, connection="strong")
    out = []
    for c in range(ncomp):
        members = [states[i] for i in np.flatnonzero(lab == c)]
        leaves = any(lab[pos[nb]] != c for (b, _), nb in rule_n.items() if b in members)
        if not leaves:
            out.extend(members)
    return tuple(sorted(out))


def reduced_problem(graphset: BatteryGraphSet, rule: ChargingRule) -> SoftmaxProblem:
    spec = graphset.spec
    pos = {b: i for i, b in enumerate(rule.states)}
    actions = []
    for b in rule.states:
        edges = [
            (x, pos[rule.next_state[(b, x)]], rule.energy[(b, x)])
            for x in spec.input_alphabet
            if (b, x) in rule.energy
        ]
        actions.append([(0.0, edges)])
    return SoftmaxProblem.from_lists(actions, rule.states)


# ---------------------------------------------------------------------------
# information-state automaton


@dataclass
class CostAutomaton:
    states: list  # tuples of relative costs; None marks an unreachable level
    problem: SoftmaxProblem  # one action per state; edge cost = charge increment

    @property
    def n(self) -> int:
        return len(self.states)


def _advance(c: tuple, xi: int, trans) -> tuple[tuple, int] | None:
    nb_ = len(c)
    new = [None] * nb_
    for b, cb in enumerate(c):
        if cb is None:
            continue
        for e, nb in trans[b][xi]:
            v = cb + e
            if new[nb] is None or v < new[nb]:
                new[nb] = v
    # a level is useless if a fuller one is no more expensive
    best_above = None
    for b in range(nb_ - 1, -1, -1):
        if new[b] is None:
            continue
        if best_above is not None and best_above <= new[b]:
            new[b] = None
        else:
            best_above = new[b]
    finite = [v for v in new if v is not None]
    if not finite:
        return None
    base = min(finite)
    return tuple(None if v is None else v - base for v in new), base


def build_cost_automaton(graphset: BatteryGraphSet, state_cap: int = 100_000) -> CostAutomaton:
    spec = graphset.spec
    trans = _transitions(graphset)
    cap = graphset.capacity
    start = tuple(0 if b == cap else None for b in range(cap + 1))
    index = {start: 0}
    states = [start]
    edges = [[]]
    i = 0
    while i < len(states):
        c = states[i]
        for xi, x in enumerate(spec.input_alphabet):
            out = _advance(c, xi, trans)
            if out is None:
                continue
            nc, delta = out
            j = index.get(nc)
            if j is None:
                if len(states) >= state_cap:
                    raise StateCapExceeded(f"more than {state_cap} information states")
                j = len(states)
                index[nc] = j
                states.append(nc)
                edges.append([])
            edges[i].append((x, j, delta))
        i += 1
    problem = SoftmaxProblem.from_lists([[(0.0, es)] for es in edges], tuple(states))
    return CostAutomaton(states, problem)


# ---------------------------------------------------------------------------
# shared single-action solver


def _weight_matrix(problem: SoftmaxProblem, rho: float) -> np.ndarray:
    n = problem.n_states
    W = np.zeros((n, n))
    rows = problem.action_state[problem.edge_action]
    np.add.at(W, (rows, problem.edge_next), np.exp2(-rho * problem.edge_cost))
    return W


def _best_component(problem: SoftmaxProblem, rho: float, start: int) -> np.ndarray:
    """Cyclic component reachable from ``start`` with the largest growth rate."""
    adj = problem.adjacency()
    reach = set(reachable_from(adj, start).tolist())
    W = _weight_matrix(problem, rho)
    best, best_val = None, -INF
    for comp in cyclic_components(adj):
        if comp[0] not in reach:
            continue
        sub = W[np.ix_(comp, comp)]
        r = float(np.max(np.abs(np.linalg.eigvals(sub)))) if len(comp) > 1 else float(sub[0, 0])
        if best is None or r > best_val * (1 + 1e-12):
            best, best_val = comp, r
    return best


def _perron_potential(W: np.ndarray) -> np.ndarray | None:
    vals, vecs = np.linalg.eig(W)
    k = int(np.argmax(vals.real))
    v = np.abs(vecs[:, k].real)
    if not np.all(v > 0):
        return None
    h = np.log2(v)
    return h - h[0]


def _solve_single_action(problem, rho, start, tolerance, max_iter, engine, states_of):
    comp = _best_component(problem, rho, start)
    sub = problem.restrict(comp)
    # with one action per state the Bellman equation is W 2^h = 2^lam 2^h, so
    # the Perron vector is the fixed point; iteration then only polishes it
    res = relative_value_iteration(sub, rho, ref=0, tol=tolerance, max_iter=max_iter,
                                   h0=_perron_potential(_weight_matrix(sub, rho)))
    pol = extract_policy(sub, res.h, rho)
    pi = stationary(pol.transition_matrix())
    gamma = float(pi @ pol.expected_cost())
    return DualSolve(
        rho=rho,
        J=res.lam,
        h=res.h,
        policy=pol,
        bellman_residual=res.residual,
        iterations=res.iterations,
        gamma=gamma,
        states=states_of(comp),
        engine=engine,
        info={"stationary": pi, "component": comp},
    )


def cognitive_belief_vi(
    graphset: BatteryGraphSet,
    rho: float,
    horizon_or_tolerance=1e-12,
    *,
    automaton: CostAutomaton | None = None,
    state_cap: int = 100_000,
    max_iter: int = 200_000,
) -> DualSolve:
    """Optimal average reward of the message-aware charger for any spec.

    An integer ``horizon_or_tolerance`` returns the finite-horizon slope
    instead of the stationary solve.
    """
    rho = float(rho)
    aut = automaton or build_cost_automaton(graphset, state_cap)
    if isinstance(horizon_or_tolerance, int) and not isinstance(horizon_or_tolerance, bool):
        n = horizon_or_tolerance
        m = n // 2
        jn = automaton_finite_horizon(aut, rho, n)
        jm = automaton_finite_horizon(aut, rho, m)
        return DualSolve(rho, (jn - jm) / (n - m), np.array([]), None, float("nan"), n,
                         float("nan"), engine="cognitive-slope", info={"J_n": jn, "J_m": jm})
    return _solve_single_action(
        aut.problem, rho, 0, horizon_or_tolerance, max_iter, "cognitive",
        lambda comp: tuple(aut.states[i] for i in comp),
    )


def automaton_finite_horizon(aut: CostAutomaton, rho: float, n: int) -> float:
    """``log2 sum_x 2**(-rho V(x))`` over all feasible length-``n`` inputs."""
    W = _weight_matrix(aut.problem, float(rho))
    v = np.ones(aut.n)
    logscale = 0.0
    for _ in range(n):
        v = W @ v
        m = v.max()
        v /= m
        logscale += np.log2(m)
    return float(logscale + np.log2(v[0]))


def cognitive_reduced_vi(
    graphset: BatteryGraphSet,
    rho: float,
    tolerance: float = 1e-12,
    *,
    rule: ChargingRule | None = None,
    max_iter: int = 200_000,
) -> DualSolve:
    rule = rule if rule is not None else minimal_charging_policy(graphset)
    if not rule.available:
        raise ReductionUnavailable(rule.reason)
    problem = reduced_problem(graphset, rule)
    start = rule.states.index(graphset.capacity)
    out = _solve_single_action(
        problem, float(rho), start, tolerance, max_iter, "cognitive-reduced",
        lambda comp: tuple(rule.states[i] for i in comp),
    )
    out.info["rule"] = rule
    return out


def reduced_finite_horizon(graphset: BatteryGraphSet, rule: ChargingRule, rho: float, n: int) -> float:
    """Finite-horizon value of the reduced chain started at a full battery."""
    problem = reduced_problem(graphset, rule)
    W = _weight_matrix(problem, float(rho))
    v = np.ones(problem.n_states)
    logscale = 0.0
    for _ in range(n):
        v = W @ v
        m = v.max()
        v /= m
        logscale += np.log2(m)
    return float(logscale + np.log2(v[rule.states.index(graphset.capacity)]))
