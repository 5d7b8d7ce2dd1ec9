"""Per-charge battery-state graphs and sequence counting.

For every charge amount ``e`` there is a labeled graph over battery levels
with an edge ``b --x--> b'`` whenever symbol ``x`` is affordable after
receiving ``e`` and leaves ``b'`` in the battery. Counting input sequences
for a fixed charge sequence is then a product of adjacency matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelSpec, step_battery, validate_spec


@dataclass(frozen=True)
class Edge:
    src: int
    symbol: object
    dst: int


@dataclass(frozen=True)
class BatteryGraphSet:
    spec: ChannelSpec
    states: tuple  # dense battery levels 0..cap
    reachable: tuple  # forward closure from a full battery
    graphs: dict  # e -> tuple[Edge, ...]
    adjacency: dict  # e -> tuple of tuples of Python ints

    @property
    def capacity(self) -> int:
        return self.spec.battery_capacity

    @property
    def energies(self) -> tuple:
        return self.spec.energy_alphabet

    def matrix(self, e) -> np.ndarray:
        return np.array(self.adjacency[e], dtype=float)

    def next_state(self, b: int, e: int, x) -> int | None:
        return step_battery(b, e, x, self.spec)


def build_graphs(spec: ChannelSpec) -> BatteryGraphSet:
    validate_spec(spec)
    cap = spec.battery_capacity
    states = tuple(range(cap + 1))
    graphs, adjacency = {}, {}
    for e in spec.energy_alphabet:
        edges = []
        mat = [[0] * (cap + 1) for _ in states]
        for b in states:
            for x in spec.input_alphabet:
                nb = step_battery(b, e, x, spec)
                if nb is not None:
                    edges.append(Edge(b, x, nb))
                    mat[b][nb] += 1
        graphs[e] = tuple(edges)
        adjacency[e] = tuple(tuple(r) for r in mat)

    seen = {cap}
    stack = [cap]
    while stack:
        b = stack.pop()
        for e in spec.energy_alphabet:
            for edge in graphs[e]:
                if edge.src == b and edge.dst not in seen:
                    seen.add(edge.dst)
                    stack.append(edge.dst)
    return BatteryGraphSet(spec, states, tuple(sorted(seen)), graphs, adjacency)


def count_sequences(graphset: BatteryGraphSet, energies: Sequence[int], start: int | None = None) -> list[int]:
    """Exact count vector ``N_n`` for the charge sequence ``energies``.

    Entry ``b`` is the number of input sequences that are feasible under the
    given charges and end with battery level ``b``. The battery starts full
    unless ``start`` says otherwise.
    """
    cap = graphset.capacity
    n = [0] * (cap + 1)
    n[cap if start is None else start] = 1
    for e in energies:
        if e not in graphset.adjacency:
            raise ValueError(f"unknown energy value {e!r}")
        a = graphset.adjacency[e]
        nxt = [0] * (cap + 1)
        for b, nb in enumerate(n):
            if nb:
                row = a[b]
                for j, m in enumerate(row):
                    if m:
                        nxt[j] += nb * m
        n = nxt
    return n


@dataclass(frozen=True)
class ControlledConstrainedSystem:
    """Cost-tagged family of labeled graphs over a shared state set."""

    states: tuple
    cost_alphabet: tuple
    graphs: dict  # cost -> tuple[Edge, ...]
    initial: object

    def count(self, costs: Sequence[int]) -> dict:
        counts = {s: 0 for s in self.states}
        counts[self.initial] = 1
        for c in costs:
            if c not in self.graphs:
                raise ValueError(f"unknown cost {c!r}")
            nxt = {s: 0 for s in self.states}
            for edge in self.graphs[c]:
                if counts[edge.src]:
                    nxt[edge.dst] += counts[edge.src]
            counts = nxt
        return counts


def as_controlled_system(graphset: BatteryGraphSet) -> ControlledConstrainedSystem:
    return ControlledConstrainedSystem(
        states=graphset.states,
        cost_alphabet=graphset.energies,
        graphs=dict(graphset.graphs),
        initial=graphset.capacity,
    )


def edge_list_text(graphset: BatteryGraphSet) -> str:
    """One edge per line: ``from symbol cost to``, grouped by charge."""
    lines = ["# from symbol energy to"]
    for e in graphset.energies:
        for edge in graphset.graphs[e]:
            lines.append(f"{edge.src} {edge.symbol} {e} {edge.dst}")
    return "\n".join(lines) + "\n"
