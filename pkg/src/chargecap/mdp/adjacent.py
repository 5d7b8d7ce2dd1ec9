"""Charger that observes past inputs: a finite MDP over battery levels.

The state is the battery level, the action is a charge amount together with
an input distribution. With the input distribution optimized in closed form
the Bellman operator becomes a max over charges of a log-sum-exp.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..graphs import BatteryGraphSet
from .common import (
    DualSolve,
    ReducibleClassError,
    SoftmaxProblem,
    cesaro_distribution,
    extract_policy,
    relative_value_iteration,
)


def adjacent_problem(graphset: BatteryGraphSet) -> SoftmaxProblem:
    spec = graphset.spec
    states = graphset.reachable
    pos = {b: i for i, b in enumerate(states)}
    actions = []
    for b in states:
        acts = []
        for e in spec.energy_alphabet:
            edges = []
            for x in spec.input_alphabet:
                nb = graphset.next_state(b, e, x)
                if nb is not None:
                    edges.append((x, pos[nb], e))
            acts.append((e, edges))
        actions.append(acts)
    return SoftmaxProblem.from_lists(actions, states)


def adjacent_relative_vi(
    graphset: BatteryGraphSet,
    rho: float,
    tolerance: float = 1e-12,
    max_iter: int = 200_000,
    problem: SoftmaxProblem | None = None,
    h0=None,
) -> DualSolve:
    prob = problem or adjacent_problem(graphset)
    rho = float(rho)
    res = relative_value_iteration(prob, rho, ref=0, tol=tolerance, max_iter=max_iter, h0=h0)
    pol = extract_policy(prob, res.h, rho)
    start = graphset.reachable.index(graphset.capacity)
    pi = cesaro_distribution(pol.transition_matrix(), start)
    gamma = float(pi @ pol.energy)
    return DualSolve(
        rho=rho,
        J=res.lam,
        h=res.h,
        policy=pol,
        bellman_residual=res.residual,
        iterations=res.iterations,
        gamma=gamma,
        states=graphset.reachable,
        engine="adjacent",
        info={"stationary": pi},
    )


def _energy_map(graphset: BatteryGraphSet, policy) -> dict:
    if isinstance(policy, Mapping):
        return dict(policy)
    if hasattr(policy, "energy") and hasattr(policy, "problem"):
        return {b: float(e) for b, e in zip(policy.problem.state_labels, policy.energy)}
    seq = list(policy)
    return {b: seq[b] for b in graphset.reachable}


def adjacent_perron_check(
    graphset: BatteryGraphSet,
    policy,
    rho: float,
    tol: float = 1e-10,
    max_iter: int = 1_000_000,
) -> float:
    """log2 Perron root of the weight matrix of a fixed charging rule.

    ``W[b, b']`` sums ``2**(-rho * e(b))`` over symbols leading from ``b`` to
    ``b'`` when ``e(b)`` is charged. The matrix is restricted to levels the
    rule can reach from a full battery; more than one closed class there is
    reported as an error.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    spec = graphset.spec
    emap = _energy_map(graphset, policy)
    cap = graphset.capacity
    n = cap + 1
    W = np.zeros((n, n))
    for b in graphset.reachable:
        e = int(round(emap[b]))
        for x in spec.input_alphabet:
            nb = graphset.next_state(b, e, x)
            if nb is not None:
                W[b, nb] += 2.0 ** (-float(rho) * e)
    seen, stack = {cap}, [cap]
    while stack:
        b = stack.pop()
        for nb in np.flatnonzero(W[b]):
            if nb not in seen:
                seen.add(int(nb))
                stack.append(int(nb))
    idx = sorted(seen)
    W = W[np.ix_(idx, idx)]
    ncomp, lab = connected_components(csr_matrix(W > 0), directed=True, connection="strong")
    closed = [
        c for c in range(ncomp)
        if W[np.ix_(lab == c, lab != c)].sum() == 0
    ]
    if len(closed) > 1:
        raise ReducibleClassError(
            f"rule has {len(closed)} closed classes reachable from a full battery"
        )
    # power iteration on W + I keeps periodic classes from oscillating
    M = W + np.eye(len(idx))
    v = np.ones(len(idx))
    r_old = 0.0
    for _ in range(max_iter):
        w = M @ v
        r = w.max()
        v = w / r
        if abs(r - r_old) <= tol * r:
            break
        r_old = r
    return float(np.log2(r - 1.0))
