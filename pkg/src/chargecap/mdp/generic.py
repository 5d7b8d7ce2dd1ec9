"""Charger without side information: a deterministic MDP on the simplex.

The state is the normalized count vector ``s`` over battery levels; charging
``e`` earns ``log2(s A_e 1) - rho e`` and moves to ``s A_e / (s A_e 1)``.
States are discovered breadth-first from a full battery and hash-consed. On
the resulting finite graph the optimal average reward is the maximum mean
cycle reachable from the start, found with Howard's policy iteration.

Depth truncation keeps the graph finite: edges into undiscovered states are
dropped, which can only lower the value. A sink that stands for "never
charge again" is always available; its mean reward is ``log2`` of the number
of zero-cost symbols, the exact long-run rate of any all-zero charge tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graphs import BatteryGraphSet
from .common import DualSolve, NonConvergenceError, StateCapExceeded

EPS = 1e-11


@dataclass
class SimplexGraph:
    graphset: BatteryGraphSet
    states: np.ndarray  # (n, cap+1) probability vectors; row 0 is the start
    depth: np.ndarray
    succ: np.ndarray  # (n, |E|) successor index or -1 when undiscovered
    logmass: np.ndarray  # (n, |E|) log2(s A_e 1)
    truncated: bool

    @property
    def n(self) -> int:
        return len(self.states)


def build_simplex_graph(
    graphset: BatteryGraphSet,
    max_depth: int = 1024,
    state_cap: int = 100_000,
    on_cap: str = "raise",
) -> SimplexGraph:
    """Breadth-first discovery of simplex states from a full battery.

    ``on_cap="truncate"`` keeps the partial graph when more than
    ``state_cap`` states appear instead of raising.
    """
    energies = graphset.energies
    mats = [graphset.matrix(e) for e in energies]
    dim = graphset.capacity + 1
    s0 = np.zeros(dim)
    s0[graphset.capacity] = 1.0
    states = [s0]
    depth = [0]
    index = {np.round(s0, 12).tobytes(): 0}
    succ = [[-1] * len(energies)]
    logmass = [[0.0] * len(energies)]
    truncated = False
    frontier = [0]
    d = 0
    while frontier and d < max_depth:
        nxt_frontier = []
        for i in frontier:
            s = states[i]
            for k, A in enumerate(mats):
                v = s @ A
                m = v.sum()
                logmass[i][k] = float(np.log2(m))
                t = v / m
                key = np.round(t, 12).tobytes()
                j = index.get(key)
                if j is None:
                    if len(states) >= state_cap:
                        if on_cap != "truncate":
                            raise StateCapExceeded(
                                f"more than {state_cap} simplex states reachable"
                            )
                        truncated = True
                        continue
                    j = len(states)
                    index[key] = j
                    states.append(t)
                    depth.append(d + 1)
                    succ.append([-1] * len(energies))
                    logmass.append([0.0] * len(energies))
                    nxt_frontier.append(j)
                succ[i][k] = j
        frontier = nxt_frontier
        d += 1
    if frontier:
        truncated = True
        # frontier rows still need their rewards for the finite-horizon pass
        for i in frontier:
            for k, A in enumerate(mats):
                logmass[i][k] = float(np.log2((states[i] @ A).sum()))
    return SimplexGraph(
        graphset,
        np.array(states),
        np.array(depth),
        np.array(succ, dtype=np.int64),
        np.array(logmass),
        truncated,
    )


@dataclass
class GenericPolicy:
    """Charge sequence from the start: a transient prefix then a cycle."""

    prefix: tuple
    cycle: tuple
    choice: np.ndarray  # edge index per node (last index = stop charging)

    @property
    def period(self) -> int:
        return len(self.cycle)

    def average_energy(self) -> float:
        return float(np.mean(self.cycle)) if self.cycle else 0.0

    def describe(self) -> list[str]:
        return [f"prefix {list(self.prefix)}", f"cycle {list(self.cycle)}"]


def _edge_arrays(graph: SimplexGraph, rho: float, n0: int):
    """Per-node edge table including the stop-charging sink (last row)."""
    n = graph.n
    energies = np.array(graph.graphset.energies, dtype=float)
    k = len(energies)
    W = np.full((n + 1, k + 1), -np.inf)
    D = np.full((n + 1, k + 1), n, dtype=np.int64)
    En = np.zeros((n + 1, k + 1))
    valid = graph.succ >= 0
    W[:n, :k] = np.where(valid, graph.logmass - rho * energies, -np.inf)
    D[:n, :k] = np.where(valid, graph.succ, n)
    En[:n, :k] = energies
    tail = float(np.log2(n0))
    W[:, k] = tail
    D[:, k] = n
    En[:, k] = 0.0
    return W, D, En


def _evaluate(pi, W, D):
    """Cycle means and potentials of a functional graph."""
    n = len(pi)
    nxt = D[np.arange(n), pi]
    c = W[np.arange(n), pi]
    eta = np.full(n, np.nan)
    x = np.full(n, np.nan)
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    for v0 in range(n):
        if state[v0]:
            continue
        path = []
        v = v0
        while state[v] == 0:
            state[v] = 1
            path.append(v)
            v = nxt[v]
        if state[v] == 1:
            # new cycle: v is on the current path
            start = path.index(v)
            cyc = path[start:]
            mean = float(np.mean(c[cyc]))
            root = min(cyc)
            r = cyc.index(root)
            order = cyc[r:] + cyc[:r]
            x[root] = 0.0
            eta[root] = mean
            for u in reversed(order[1:]):
                eta[u] = mean
                x[u] = c[u] - mean + x[nxt[u]]
            for u in cyc:
                state[u] = 2
            path = path[:start]
        for u in reversed(path):
            eta[u] = eta[nxt[u]]
            x[u] = c[u] - eta[u] + x[nxt[u]]
            state[u] = 2
    return eta, x


def max_mean_cycle(W, D, En, pi=None, max_iter=10_000):
    """Howard policy iteration for the maximum mean cycle (multichain)."""
    n = W.shape[0]
    rows = np.arange(n)
    if pi is None:
        pi = np.argmax(W, axis=1)
    for it in range(1, max_iter + 1):
        eta, x = _evaluate(pi, W, D)
        etaD = eta[D]
        etaD = np.where(np.isfinite(W), etaD, -np.inf)
        best_eta = etaD.max(axis=1)
        improve = best_eta > eta + EPS
        changed = False
        if improve.any():
            cand = np.where(etaD >= best_eta[:, None] - EPS, W - eta[:, None] + x[D], -np.inf)
            new = _pick(cand, En)
            pi = np.where(improve, new, pi)
            changed = True
        else:
            val = np.where(
                np.isfinite(W) & (np.abs(etaD - eta[:, None]) <= EPS),
                W - eta[:, None] + x[D],
                -np.inf,
            )
            best = val.max(axis=1)
            improve = best > x + EPS
            if improve.any():
                pi = np.where(improve, _pick(val, En), pi)
                changed = True
        if not changed:
            return pi, eta, x, it
    raise NonConvergenceError("policy iteration did not settle")


def _pick(val, En):
    """Row-wise argmax with ties (within EPS) going to the smallest energy."""
    best = val.max(axis=1, keepdims=True)
    ok = val >= best - EPS
    key = np.where(ok, En, np.inf)
    return np.argmin(key, axis=1)


def _residual(pi, eta, x, W, D):
    etaD = np.where(np.isfinite(W), eta[D], -np.inf)
    r1 = np.maximum(etaD.max(axis=1) - eta, 0.0)
    val = np.where(
        np.isfinite(W) & (np.abs(etaD - eta[:, None]) <= EPS),
        W - eta[:, None] + x[D],
        -np.inf,
    )
    r2 = np.abs(val.max(axis=1) - x)
    return float(max(r1.max(), r2.max()))


def generic_value_iteration(
    graphset: BatteryGraphSet,
    rho: float,
    horizon_or_tolerance=None,
    *,
    graph: SimplexGraph | None = None,
    max_depth: int = 1024,
    state_cap: int = 100_000,
    on_cap: str = "raise",
    warm: DualSolve | None = None,
) -> DualSolve:
    """Optimal average reward of the charger that sees nothing.

    With an integer ``horizon_or_tolerance`` the finite-horizon slope
    ``(J_n - J_{n/2}) / (n - n/2)`` is returned instead of the cycle solve.
    """
    rho = float(rho)
    if isinstance(horizon_or_tolerance, int) and not isinstance(horizon_or_tolerance, bool):
        return generic_slope(graphset, rho, horizon_or_tolerance)
    if graph is None:
        graph = build_simplex_graph(graphset, max_depth, state_cap, on_cap)
    n0 = graphset.spec.n_zero_symbols
    W, D, En = _edge_arrays(graph, rho, n0)
    pi0 = None
    if warm is not None and isinstance(warm.policy, GenericPolicy) and len(warm.policy.choice) == W.shape[0]:
        pi0 = warm.policy.choice
    pi, eta, x, iters = max_mean_cycle(W, D, En, pi0)
    residual = _residual(pi, eta, x, W, D)

    # walk the policy from the start to split prefix and cycle
    seen = {}
    order = []
    v = 0
    while v not in seen:
        seen[v] = len(order)
        order.append(v)
        v = D[v, pi[v]]
    energies = [En[u, pi[u]] for u in order]
    start = seen[v]
    prefix = tuple(int(e) for e in energies[:start])
    cycle = tuple(int(e) for e in energies[start:])
    pol = GenericPolicy(prefix, cycle, pi)
    return DualSolve(
        rho=rho,
        J=float(eta[0]),
        h=x,
        policy=pol,
        bellman_residual=residual,
        iterations=iters,
        gamma=pol.average_energy(),
        states=(),
        engine="generic",
        info={"n_states": graph.n, "truncated": graph.truncated},
    )


def generic_finite_horizon(graphset: BatteryGraphSet, rho: float, n: int, graph=None) -> float:
    """Exact ``max over e^n of log2(N_n 1) - rho sum(e)`` by value iteration."""
    if graph is None or graph.depth.max() < n:
        graph = build_simplex_graph(graphset, max_depth=n, state_cap=10**7)
    energies = np.array(graphset.energies, dtype=float)
    reward = graph.logmass - rho * energies
    succ = graph.succ
    v = np.zeros(graph.n)
    for _ in range(n):
        nxt = np.where(succ >= 0, v[np.maximum(succ, 0)], -np.inf)
        v = (reward + nxt).max(axis=1)
    return float(v[0])


def generic_slope(graphset: BatteryGraphSet, rho: float, n: int) -> DualSolve:
    m = n // 2
    graph = build_simplex_graph(graphset, max_depth=n, state_cap=10**7)
    jn = generic_finite_horizon(graphset, rho, n, graph)
    jm = generic_finite_horizon(graphset, rho, m, graph)
    slope = (jn - jm) / (n - m)
    return DualSolve(
        rho=float(rho),
        J=slope,
        h=np.array([]),
        policy=None,
        bellman_residual=float("nan"),
        iterations=n,
        gamma=float("nan"),
        engine="generic-slope",
        info={"J_n": jn, "J_m": jm, "n": n, "m": m},
    )
