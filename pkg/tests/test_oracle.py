import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from chargecap.channel import ChannelSpec, replay
from chargecap.closed_forms import LOG3, c0_band, j_closed
from chargecap.graphs import build_graphs, count_sequences
from chargecap.mdp import (
    adjacent_relative_vi,
    cognitive_belief_vi,
    minimal_charging_policy,
    reduced_finite_horizon,
)
from chargecap.oracle import (
    BRUTEFORCE,
    FiniteHorizonResult,
    HorizonCapExceeded,
    block_transfer,
    bruteforce_J_adjacent,
    bruteforce_J_cognitive,
    bruteforce_J_generic,
    count_via_graphs,
    enumerate_feasible,
    exhaustive_min_costs,
    min_costs_by_end,
    minimal_energy_for,
    rate_bracket,
)

from conftest import random_spec


def test_single_step_counts(ternary):
    c = enumerate_feasible(ternary, 1, 2)
    assert c.inputs == 3
    assert c.pairs == 6


def test_zero_budget_means_no_charging():
    spec = ChannelSpec.from_costs({0: 0, 1: 1, 2: 2}, (0, 1), 4)
    for n in (1, 3, 5):
        want = sum(
            1 for xs in itertools.product((0, 1, 2), repeat=n) if sum(xs) <= 4
        )
        c = enumerate_feasible(spec, n, 0)
        assert c.inputs == want == c.pairs


def test_two_step_count_matches_engine_support(ternary, ternary_graphs):
    c = enumerate_feasible(ternary, 2, 2)
    # the belief-free support of two steps: every x^2 reachable under some charge
    support = {
        xs for xs in itertools.product((0, 1, 2), repeat=2)
        if any(replay(xs, es, ternary).feasible for es in itertools.product((0, 2), repeat=2))
    }
    assert c.inputs == len(support) == 9
    assert c.pairs == count_via_graphs(ternary, 2, 2)


def test_counts_agree_with_graph_route(ternary):
    for n in range(1, 9):
        for g in (None, 0, Fraction(1, 2), Fraction(2, 3), 1, 2):
            assert enumerate_feasible(ternary, n, g).pairs == count_via_graphs(ternary, n, g)


def test_horizon_caps(ternary):
    with pytest.raises(HorizonCapExceeded):
        enumerate_feasible(ternary, 13)
    with pytest.raises(HorizonCapExceeded):
        bruteforce_J_adjacent(ternary, 0, 9)
    assert bruteforce_J_adjacent(ternary, 0, 9, cap=9).horizon == 9
    with pytest.raises(ValueError):
        FiniteHorizonResult(0, 1.0, None)


def test_generic_examples(ternary):
    r = bruteforce_J_generic(ternary, 0, 3)
    assert r.value == pytest.approx(3 * LOG3)
    # charging is free, so always charging is one of the optimal sequences
    gs = build_graphs(ternary)
    assert math.log2(sum(count_sequences(gs, (2, 2, 2)))) == pytest.approx(r.value)
    r = bruteforce_J_generic(ternary, 10, 3)
    assert r.argmax == (0, 0, 0)
    assert r.value == pytest.approx(math.log2(10))


def test_generic_period_two_at_band(ternary):
    lo, hi = c0_band(2)
    r = bruteforce_J_generic(ternary, 0.5 * (lo + hi), 4)
    # the first charge is wasted on a full battery; after it the pattern repeats every 2
    assert r.argmax[1:] == (0, 2, 0)
    assert sum(r.argmax) == 2


def test_adjacent_examples(ternary, bprec):
    r = bruteforce_J_adjacent(ternary, 0, 1)
    assert r.value == pytest.approx(LOG3)
    assert r.argmax[(0, 2)] == 0
    assert bruteforce_J_adjacent(bprec, 0, 2).value == pytest.approx(2.0)
    rates = [bruteforce_J_adjacent(ternary, 0.5, n).rate for n in (2, 4, 8)]
    assert all(abs(b - 1) < abs(a - 1) for a, b in zip(rates, rates[1:]))
    assert rates[-1] - 1 < 0.1


def test_cognitive_examples(ternary, ternary_graphs):
    r = bruteforce_J_cognitive(ternary, 0, 5)
    assert r.value == pytest.approx(math.log2(enumerate_feasible(ternary, 5).inputs))
    rule = minimal_charging_policy(ternary_graphs)
    assert bruteforce_J_cognitive(ternary, 1, 4).value == pytest.approx(
        reduced_finite_horizon(ternary_graphs, rule, 1, 4), abs=1e-9)


def test_minimal_energy_examples(ternary):
    assert minimal_energy_for(ternary, (1, 1, 2)) == ((0, 0, 2), 2)
    assert minimal_energy_for(ternary, (1, 2, 0)) == ((0, 2, 0), 2)
    assert minimal_energy_for(ternary, (0,) * 6) == ((0,) * 6, 0)
    assert minimal_energy_for(ternary, (2, 2, 2)) == ((0, 2, 2), 4)


def test_minimal_energy_none_when_infeasible():
    spec = ChannelSpec.from_costs({0: 0, 2: 2}, (0, 1), 2)
    assert minimal_energy_for(spec, (2, 2)) is None
    assert minimal_energy_for(spec, (2, 0, 2)) == ((0, 1, 1), 2)


def test_minimal_energy_beats_every_charge_sequence(ternary):
    for n in range(1, 7):
        best = exhaustive_min_costs(ternary, n)
        for xs in itertools.product((0, 1, 2), repeat=n):
            found = minimal_energy_for(ternary, xs)
            if found is None:
                assert xs not in best
                continue
            es, cost = found
            assert replay(xs, es, ternary).feasible and sum(es) == cost
            assert cost == best[xs]


@pytest.mark.parametrize("rho", [0.0, 0.4, 1.0, 2.5])
def test_side_information_only_helps(ternary, rho):
    for n in range(1, 8):
        g = bruteforce_J_generic(ternary, rho, n).value
        a = bruteforce_J_adjacent(ternary, rho, n).value
        c = bruteforce_J_cognitive(ternary, rho, n).value
        assert g <= a + 1e-9 <= c + 2e-9


@pytest.mark.parametrize("mode", ["generic", "adjacent", "cognitive"])
def test_finite_horizon_rate_brackets_the_dual(ternary, mode):
    for rho in (0.0, 0.3, 1.0, 3.0):
        lam = j_closed(mode, rho)
        for n in range(1, 9):
            br = rate_bracket(ternary, mode, rho, n)
            assert br.contains(lam)
            # never wider than the plain full-start versus empty-start bracket
            assert br.gap <= rho * ternary.battery_capacity / n + 1e-9
            assert br.gap >= -1e-12


def test_adjacent_oracle_matches_engine_rate(bprec):
    lam = adjacent_relative_vi(build_graphs(bprec), 0.7).J
    assert rate_bracket(bprec, "adjacent", 0.7, 8).contains(lam)


def test_min_costs_by_end_matches_pinned_backward_pass(ternary, tprec):
    for spec in (ternary, tprec):
        for xs in itertools.product(spec.input_alphabet, repeat=4):
            for b0 in range(spec.battery_capacity + 1):
                ends = min_costs_by_end(spec, xs, b0)
                for b in range(spec.battery_capacity + 1):
                    pinned = minimal_energy_for(spec, xs, b0, end=b)
                    assert (pinned[1] if pinned else None) == ends.get(b)
                best = minimal_energy_for(spec, xs, b0)
                assert (best[1] if best else None) == (min(ends.values()) if ends else None)


def test_block_transfer_at_zero_multiplier(ternary):
    M = block_transfer(ternary, 0, 3)
    # every (input, final level) pair reachable from the start contributes one
    for b in range(3):
        want = sum(len(min_costs_by_end(ternary, xs, b))
                   for xs in itertools.product(ternary.input_alphabet, repeat=3))
        assert M[b].sum() == want


def test_adjacent_terminal_reward_shifts_value(ternary):
    base = bruteforce_J_adjacent(ternary, 1.0, 4).value
    shifted = bruteforce_J_adjacent(ternary, 1.0, 4, terminal=[2.5, 2.5, 2.5]).value
    assert shifted == pytest.approx(base + 2.5, abs=1e-12)


def test_pinned_end_lower_bounds(ternary):
    for mode, f in BRUTEFORCE.items():
        lam = j_closed(mode, 1.0)
        assert f(ternary, 1.0, 6, end=2).value / 6 <= lam + 1e-12
    with pytest.raises(ValueError):
        # one step cannot spend and end full from empty with no charge of 1
        bruteforce_J_adjacent(ChannelSpec.from_costs({0: 0, 1: 1}, (0,), 1), 0, 1, start=0, end=1)


@pytest.mark.parametrize("seed", range(6))
def test_brackets_on_random_specs(seed):
    rng = np.random.default_rng(100 + seed)
    spec = random_spec(rng)
    gs = build_graphs(spec)
    for rho in (0.5, 1.5):
        lam_a = adjacent_relative_vi(gs, rho).J
        lam_c = cognitive_belief_vi(gs, rho).J
        assert rate_bracket(spec, "adjacent", rho, 6).contains(lam_a, 1e-8)
        assert rate_bracket(spec, "cognitive", rho, 5).contains(lam_c, 1e-8)
