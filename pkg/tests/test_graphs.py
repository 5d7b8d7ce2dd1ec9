import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chargecap.channel import ChannelSpec, replay, step_battery
from chargecap.graphs import (
    as_controlled_system,
    build_graphs,
    count_sequences,
    edge_list_text,
)


def _edges(gs, e):
    return sorted((ed.src, ed.symbol, ed.dst) for ed in gs.graphs[e])


def test_zero_charge_graph_of_the_full_alphabet(tprec):
    gs = build_graphs(tprec)
    assert _edges(gs, 0) == [(0, 0, 0), (1, 0, 1), (1, 1, 0), (2, 0, 2), (2, 1, 1), (2, 2, 0)]
    assert gs.matrix(0).tolist() == [[1, 0, 0], [1, 1, 0], [1, 1, 1]]


def test_full_charge_saturates(tprec):
    gs = build_graphs(tprec)
    A = gs.matrix(2)
    assert A.tolist() == [[1, 1, 1]] * 3


def test_states_and_reachability(ternary_graphs):
    assert ternary_graphs.states == (0, 1, 2)
    assert 2 in ternary_graphs.reachable


def test_count_examples(ternary_graphs):
    assert count_sequences(ternary_graphs, (2,)) == [1, 1, 1]
    assert sum(count_sequences(ternary_graphs, (0, 0))) == 6


def test_count_rejects_unknown_energy(ternary_graphs):
    with pytest.raises(ValueError):
        count_sequences(ternary_graphs, (1,))


def test_single_zero_symbol_counts_one():
    spec = ChannelSpec.from_costs({0: 0}, (0, 1), 1)
    gs = build_graphs(spec)
    assert sum(count_sequences(gs, (0, 1, 1, 0))) == 1


def test_controlled_system_is_a_relabeling(ternary_graphs):
    sys = as_controlled_system(ternary_graphs)
    assert sys.states == (0, 1, 2)
    assert sys.cost_alphabet == (0, 2)
    for es in itertools.product((0, 2), repeat=4):
        assert list(sys.count(es).values()) == count_sequences(ternary_graphs, es)


def test_unconstrained_binary_system_single_cost():
    spec = ChannelSpec.from_costs({"a": 0, "b": 0}, (0, 1), 1)
    sys = as_controlled_system(build_graphs(spec))
    assert sum(sys.count((0,) * 5).values()) == 32


def test_edge_list_text(ternary_graphs):
    lines = edge_list_text(ternary_graphs).splitlines()
    assert lines[0].startswith("#")
    assert "2 1 0 1" in lines
    assert len(lines) == 1 + sum(len(v) for v in ternary_graphs.graphs.values())


@st.composite
def specs(draw):
    cap = draw(st.integers(1, 4))
    k = draw(st.integers(1, 3))
    costs = [0] + draw(st.lists(st.integers(0, cap), min_size=k, max_size=k))
    energies = draw(st.sets(st.integers(0, cap), min_size=1, max_size=3))
    energies.add(draw(st.integers(1, cap)))
    return ChannelSpec.from_costs(dict(enumerate(costs)), sorted(energies), cap)


@settings(max_examples=60, deadline=None)
@given(specs())
def test_edges_match_step_battery_and_row_sums(spec):
    gs = build_graphs(spec)
    for e in spec.energy_alphabet:
        got = _edges(gs, e)
        want = sorted(
            (b, x, step_battery(b, e, x, spec))
            for b in gs.states for x in spec.input_alphabet
            if step_battery(b, e, x, spec) is not None
        )
        assert got == want
        A = gs.matrix(e)
        for b in gs.states:
            avail = min(b + e, spec.battery_capacity)
            assert A[b].sum() == sum(1 for c in spec.costs if c <= avail)


@settings(max_examples=60, deadline=None)
@given(specs(), st.data())
def test_count_matches_enumeration_and_grows_with_charge(spec, data):
    gs = build_graphs(spec)
    n = data.draw(st.integers(1, 4))
    es = data.draw(st.lists(st.sampled_from(spec.energy_alphabet), min_size=n, max_size=n))
    brute = sum(
        1 for xs in itertools.product(spec.input_alphabet, repeat=n)
        if replay(xs, es, spec).feasible
    )
    total = sum(count_sequences(gs, es))
    assert total == brute
    t = data.draw(st.integers(0, n - 1))
    bigger = [e for e in spec.energy_alphabet if e > es[t]]
    if bigger:
        es2 = list(es)
        es2[t] = bigger[0]
        assert sum(count_sequences(gs, es2)) >= total
