"""Shared pieces for the average-reward engines.

Most engines reduce to the same Bellman shape::

    lam + h(s) = max_a log2 sum_{edges of a} 2 ** (-rho * cost + h(next))

which is what the entropy-plus-linear maximization gives once the input
distribution has been optimized out. :class:`SoftmaxProblem` stores such a
problem in flat arrays and :func:`relative_value_iteration` solves it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    pass


class StateCapExceeded(SolverError):
    pass


class ReductionUnavailable(SolverError):
    pass


class ReducibleClassError(SolverError):
    pass


TIE_TOL = 1e-9


@dataclass
class DualSolve:
    """One solve of the Lagrangian problem at multiplier ``rho``."""

    rho: float
    J: float
    h: np.ndarray
    policy: Any
    bellman_residual: float
    iterations: int
    gamma: float  # long-run average charge of the returned policy
    states: tuple = ()
    engine: str = ""
    info: dict = field(default_factory=dict)

    @property
    def capacity(self) -> float:
        """Primal value ``J + rho * gamma`` at the policy's own cost."""
        return self.J + self.rho * self.gamma

    def record(self) -> dict:
        return {
            "engine": self.engine,
            "rho": self.rho,
            "J": self.J,
            "gamma": self.gamma,
            "residual": self.bellman_residual,
            "iterations": self.iterations,
            "policy": describe_policy(self.policy),
        }

    def to_text(self) -> str:
        rec = self.record()
        lines = [f"{k}={_fmt(v)}" for k, v in rec.items() if k != "policy"]
        lines.append("policy:")
        lines.extend("  " + ln for ln in rec["policy"])
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def describe_policy(policy) -> list[str]:
    if hasattr(policy, "describe"):
        return policy.describe()
    return [repr(policy)]


@dataclass
class SoftmaxProblem:
    """Flat-array Bellman problem; actions sorted by state, edges by action."""

    n_states: int
    action_state: np.ndarray
    action_energy: np.ndarray
    edge_action: np.ndarray
    edge_next: np.ndarray
    edge_cost: np.ndarray
    edge_label: list
    state_labels: tuple = ()

    def __post_init__(self):
        self.action_start = np.searchsorted(self.action_state, np.arange(self.n_states))
        self.edge_start = np.searchsorted(
            self.edge_action, np.arange(len(self.action_state))
        )
        if len(self.action_state) and np.any(
            np.bincount(self.action_state, minlength=self.n_states) == 0
        ):
            raise ValueError("every state needs at least one action")
        if np.any(np.bincount(self.edge_action, minlength=len(self.action_state)) == 0):
            raise ValueError("every action needs at least one edge")

    @classmethod
    def from_lists(cls, actions: Sequence[Sequence], state_labels=()) -> "SoftmaxProblem":
        """``actions[s]`` is a list of ``(energy, [(label, next, cost), ...])``."""
        a_state, a_energy, e_action, e_next, e_cost, e_label = [], [], [], [], [], []
        for s, acts in enumerate(actions):
            for energy, edges in acts:
                ai = len(a_state)
                a_state.append(s)
                a_energy.append(energy)
                for label, nxt, cost in edges:
                    e_action.append(ai)
                    e_next.append(nxt)
                    e_cost.append(cost)
                    e_label.append(label)
        return cls(
            len(actions),
            np.array(a_state, dtype=np.int64),
            np.array(a_energy, dtype=float),
            np.array(e_action, dtype=np.int64),
            np.array(e_next, dtype=np.int64),
            np.array(e_cost, dtype=float),
            e_label,
            tuple(state_labels),
        )

    def restrict(self, keep: Sequence[int]) -> "SoftmaxProblem":
        """Sub-problem on ``keep``; edges leaving the set are dropped."""
        keep = sorted(keep)
        remap = -np.ones(self.n_states, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        actions = [[] for _ in keep]
        for ai, s in enumerate(self.action_state):
            if remap[s] < 0:
                continue
            lo = self.edge_start[ai]
            hi = self.edge_start[ai + 1] if ai + 1 < len(self.action_state) else len(self.edge_action)
            edges = [
                (self.edge_label[k], int(remap[self.edge_next[k]]), self.edge_cost[k])
                for k in range(lo, hi)
                if remap[self.edge_next[k]] >= 0
            ]
            if edges:
                actions[remap[s]].append((self.action_energy[ai], edges))
        labels = tuple(self.state_labels[i] for i in keep) if self.state_labels else tuple(keep)
        return SoftmaxProblem.from_lists(actions, labels)

    def adjacency(self) -> csr_matrix:
        rows = self.action_state[self.edge_action]
        data = np.ones(len(rows))
        return csr_matrix((data, (rows, self.edge_next)), shape=(self.n_states,) * 2)

    def action_values(self, h: np.ndarray, rho: float) -> np.ndarray:
        v = -rho * self.edge_cost + h[self.edge_next]
        m = np.maximum.reduceat(v, self.edge_start)
        s = np.add.reduceat(np.exp2(v - m[self.edge_action]), self.edge_start)
        return m + np.log2(s)

    def bellman(self, h: np.ndarray, rho: float) -> tuple[np.ndarray, np.ndarray]:
        q = self.action_values(h, rho)
        return np.maximum.reduceat(q, self.action_start), q


POLISH_EVERY = 1000


def _span(problem: SoftmaxProblem, h: np.ndarray, rho: float) -> float:
    d = problem.bellman(h, rho)[0] - h
    return 0.5 * float(d.max() - d.min())


def _policy_polish(problem: SoftmaxProblem, h: np.ndarray, rho: float, ref: int,
                   tol: float, steps: int = 30) -> tuple[np.ndarray, float]:
    """Policy iteration from ``h``: evaluate the greedy softmax policy exactly.

    Each step solves ``g + h' = r + P h'`` with ``h'[ref] = 0``, where ``r``
    is the policy's entropy minus its weighted cost. Returns the best
    ``h`` seen and its span residual.
    """
    n = problem.n_states
    best_h, best_res = h, _span(problem, h, rho)
    cur = h
    for _ in range(steps):
        pol = extract_policy(problem, cur, rho)
        P = pol.transition_matrix()
        prob = pol.edge_prob
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(prob > 0, -prob * np.log2(prob), 0.0)
        r = np.zeros(n)
        np.add.at(r, problem.action_state[problem.edge_action], ent)
        r -= rho * pol.expected_cost()
        # unknowns: h' (n entries) then g
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = np.eye(n) - P
        A[:n, n] = 1.0
        A[n, ref] = 1.0
        b = np.append(r, 0.0)
        sol, *_ = np.linalg.lstsq(A, b, rcond=None)
        prev, cur = cur, sol[:n] - sol[ref]
        res = _span(problem, cur, rho)
        if res < best_res:
            best_h, best_res = cur, res
        # the gain improves monotonically but the span need not, so only
        # stop once the iterates stop moving
        if best_res < tol or np.abs(cur - prev).max() <= 1e-14:
            break
    return best_h, best_res


@dataclass
class RVIResult:
    lam: float
    h: np.ndarray
    residual: float
    iterations: int


def relative_value_iteration(
    problem: SoftmaxProblem,
    rho: float,
    ref: int = 0,
    tol: float = 1e-12,
    max_iter: int = 200_000,
    damping: float = 0.5,
    h0: np.ndarray | None = None,
) -> RVIResult:
    """Relative value iteration with an aperiodicity (damping) transform.

    The residual is half the span of ``T h - h``; the optimal gain lies within
    ``lam +- residual``. Every ``POLISH_EVERY`` sweeps a few policy-iteration
    steps are tried, which rescues chains that mix slowly at large ``rho``.
    """
    h = np.zeros(problem.n_states) if h0 is None else np.array(h0, dtype=float)
    h = h - h[ref]
    best = np.inf
    stall = 0
    for it in range(1, max_iter + 1):
        th, _ = problem.bellman(h, rho)
        d = th - h
        hi, lo = d.max(), d.min()
        res = 0.5 * (hi - lo)
        if res < tol:
            return RVIResult(0.5 * (hi + lo), h, float(res), it)
        if it % POLISH_EVERY == 0:
            # slow mixing: try exact policy evaluation, keep it only if it helps
            hp, rp = _policy_polish(problem, h, rho, ref, tol)
            if rp < res:
                h = hp
                continue
        # floating-point floor: stop once progress has stalled at a tiny level
        if res < best * (1 - 1e-3):
            best, stall = res, 0
        else:
            stall += 1
            if stall > 2000 and res < 1e3 * tol:
                return RVIResult(0.5 * (hi + lo), h, float(res), it)
        h = (1 - damping) * h + damping * th
        h -= h[ref]
    raise NonConvergenceError(
        f"relative value iteration did not reach {tol:g} in {max_iter} steps (residual {res:g})"
    )


@dataclass
class SoftmaxPolicy:
    """Chosen action per state with its edge probabilities."""

    actions: np.ndarray  # action index per state
    energy: np.ndarray  # energy tag of the chosen action
    edge_prob: np.ndarray  # probability per edge (zero on unchosen actions)
    problem: SoftmaxProblem

    def edges_of(self, s: int):
        ai = self.actions[s]
        p = self.problem
        lo = p.edge_start[ai]
        hi = p.edge_start[ai + 1] if ai + 1 < len(p.action_state) else len(p.edge_action)
        return range(lo, hi)

    def input_dist(self, s: int) -> dict:
        out = {}
        for k in self.edges_of(s):
            lab = self.problem.edge_label[k]
            out[lab] = out.get(lab, 0.0) + float(self.edge_prob[k])
        return out

    def transition_matrix(self) -> np.ndarray:
        p = self.problem
        P = np.zeros((p.n_states, p.n_states))
        rows = p.action_state[p.edge_action]
        np.add.at(P, (rows, p.edge_next), self.edge_prob)
        return P

    def expected_cost(self) -> np.ndarray:
        p = self.problem
        rows = p.action_state[p.edge_action]
        out = np.zeros(p.n_states)
        np.add.at(out, rows, self.edge_prob * p.edge_cost)
        return out

    def describe(self) -> list[str]:
        lines = []
        labels = self.problem.state_labels or tuple(range(self.problem.n_states))
        for s, lab in enumerate(labels):
            dist = ", ".join(f"{k}:{v:.6g}" for k, v in self.input_dist(s).items())
            lines.append(f"state {lab}: energy {self.energy[s]:g}; p(x) = {{{dist}}}")
        return lines


def extract_policy(problem: SoftmaxProblem, h: np.ndarray, rho: float) -> SoftmaxPolicy:
    """Greedy policy for ``h``; ties within TIE_TOL go to the smallest energy."""
    th, q = problem.bellman(h, rho)
    n_act = len(problem.action_state)
    chosen = np.empty(problem.n_states, dtype=np.int64)
    for s in range(problem.n_states):
        lo = problem.action_start[s]
        hi = problem.action_start[s + 1] if s + 1 < problem.n_states else n_act
        cands = [a for a in range(lo, hi) if q[a] >= th[s] - TIE_TOL]
        chosen[s] = min(cands, key=lambda a: (problem.action_energy[a], a))
    v = -rho * problem.edge_cost + h[problem.edge_next]
    prob = np.exp2(v - q[problem.edge_action])
    mask = np.zeros(n_act, dtype=bool)
    mask[chosen] = True
    prob = np.where(mask[problem.edge_action], prob, 0.0)
    # renormalize away the last few ulps
    tot = np.zeros(n_act)
    np.add.at(tot, problem.edge_action, prob)
    prob = np.where(mask[problem.edge_action], prob / np.where(tot == 0, 1, tot)[problem.edge_action], 0.0)
    return SoftmaxPolicy(chosen, problem.action_energy[chosen], prob, problem)


def stationary(P: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible chain (periodic chains allowed)."""
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def cesaro_distribution(P: np.ndarray, start: int) -> np.ndarray:
    """Long-run state frequencies of the chain started at ``start``."""
    n = P.shape[0]
    ncomp, lab = connected_components(csr_matrix(P > 0), directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        idx = np.flatnonzero(lab == c)
        out = P[np.ix_(idx, np.flatnonzero(lab != c))]
        if out.sum() <= 1e-15:
            closed.append(idx)
    pi = np.zeros(n)
    in_closed = np.zeros(n, dtype=bool)
    for idx in closed:
        in_closed[idx] = True
    trans = np.flatnonzero(~in_closed)
    for idx in closed:
        if in_closed[start]:
            w = 1.0 if start in idx else 0.0
        else:
            Q = P[np.ix_(trans, trans)]
            r = P[np.ix_(trans, idx)].sum(axis=1)
            a = np.linalg.solve(np.eye(len(trans)) - Q, r)
            w = a[np.searchsorted(trans, start)]
        if w > 0:
            pi[idx] += w * stationary(P[np.ix_(idx, idx)])
    res = np.abs(pi @ P - pi).max()
    if res > 1e-10:
        raise SolverError(f"stationary solve residual {res:g}")
    return pi


def cyclic_components(adj: csr_matrix) -> list[np.ndarray]:
    """Strongly connected components that contain at least one cycle."""
    n = adj.shape[0]
    ncomp, lab = connected_components(adj, directed=True, connection="strong")
    diag = adj.diagonal()
    out = []
    for c in range(ncomp):
        idx = np.flatnonzero(lab == c)
        if len(idx) > 1 or diag[idx[0]] > 0:
            out.append(idx)
    return out


def reachable_from(adj: csr_matrix, start: int) -> np.ndarray:
    from scipy.sparse.csgraph import breadth_first_order

    order = breadth_first_order(adj, start, directed=True, return_predecessors=False)
    return np.sort(order)
