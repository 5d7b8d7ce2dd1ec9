import math

import numpy as np
import pytest

from chargecap.channel import ChannelSpec
from chargecap.closed_forms import (
    LOG3,
    adjacent_policy_closed,
    c0_band,
    cognitive_policy_closed,
    gamma_closed,
    j_closed,
)
from chargecap.graphs import build_graphs
from chargecap.mdp import (
    ReducibleClassError,
    ReductionUnavailable,
    StateCapExceeded,
    adjacent_perron_check,
    adjacent_relative_vi,
    automaton_finite_horizon,
    build_cost_automaton,
    build_simplex_graph,
    cognitive_belief_vi,
    cognitive_reduced_vi,
    generic_finite_horizon,
    generic_value_iteration,
    minimal_charging_policy,
    reduced_finite_horizon,
)
from chargecap.mdp.adjacent import adjacent_problem
from chargecap.mdp.common import _policy_polish
from chargecap.oracle import (
    bruteforce_J_adjacent,
    bruteforce_J_cognitive,
    bruteforce_J_generic,
    rate_bracket,
)

RHOS = np.linspace(0, 4, 50)


# --- generic -----------------------------------------------------------------


@pytest.mark.parametrize("l", [1, 2, 3, 5])
def test_generic_band_values_and_period(ternary_graphs, l):
    lo, hi = c0_band(l)
    rho = 0.5 * (lo + hi) if l > 1 else 0.5 * hi
    s = generic_value_iteration(ternary_graphs, rho)
    assert s.J == pytest.approx((math.log2((l + 1) * (l + 2) / 2) - 2 * rho) / l, abs=1e-10)
    assert s.policy.period == l
    assert s.gamma == pytest.approx(2 / l)
    assert s.bellman_residual < 1e-8


def test_generic_always_charges_in_first_band(ternary_graphs):
    s = generic_value_iteration(ternary_graphs, 0.1)
    assert s.J == pytest.approx(LOG3 - 0.2)
    assert set(s.policy.cycle) == {2}


def test_generic_never_charges_for_huge_rho(ternary_graphs):
    s = generic_value_iteration(ternary_graphs, 100.0)
    assert s.J == 0.0
    assert s.gamma == 0.0


def test_generic_finite_horizon_matches_bruteforce(ternary, ternary_graphs):
    for rho in (0.0, 0.4, 1.3):
        for n in (1, 3, 6):
            assert generic_finite_horizon(ternary_graphs, rho, n) == pytest.approx(
                bruteforce_J_generic(ternary, rho, n).value, abs=1e-10)


def test_generic_slope_route(ternary_graphs):
    s = generic_value_iteration(ternary_graphs, 0.25, 40)
    assert s.engine == "generic-slope"
    assert s.J == pytest.approx(j_closed("generic", 0.25), abs=1e-9)


def test_simplex_states_are_distributions(ternary_graphs):
    g = build_simplex_graph(ternary_graphs, max_depth=30)
    assert np.allclose(g.states.sum(axis=1), 1.0, atol=1e-12)
    assert (g.states >= 0).all()
    assert g.truncated


def test_simplex_cap(ternary_graphs):
    with pytest.raises(StateCapExceeded):
        build_simplex_graph(ternary_graphs, state_cap=5)
    g = build_simplex_graph(ternary_graphs, state_cap=5, on_cap="truncate")
    assert g.n == 5 and g.truncated


# --- adjacent ----------------------------------------------------------------


def test_adjacent_low_rho_case(ternary_graphs):
    s = adjacent_relative_vi(ternary_graphs, 0.25)
    assert s.J == pytest.approx(math.log2(2 + 2**0.5) - 0.5, abs=1e-10)
    assert tuple(s.policy.energy) == (2, 2, 0)
    assert np.allclose(s.h, [0, 0, 0.5], atol=1e-9)


def test_adjacent_high_rho_case(ternary_graphs):
    s = adjacent_relative_vi(ternary_graphs, 1.0)
    assert s.J == pytest.approx(2 * math.log2(1 + math.sqrt(17)) - 4, abs=1e-10)
    assert s.gamma == pytest.approx(2 / math.sqrt(17), abs=1e-10)


@pytest.mark.parametrize("rho", [0.1, 0.3, 0.8, 2.0])
def test_adjacent_policy_matches_closed_form(ternary_graphs, rho):
    s = adjacent_relative_vi(ternary_graphs, rho)
    want = adjacent_policy_closed(rho)
    # b=1 is transient for rho > 1/2 but still gets a greedy distribution
    for b in (0, 2) if rho > 0.5 else (0, 1, 2):
        got = s.policy.input_dist(b)
        assert [got.get(x, 0.0) for x in (0, 1, 2)] == pytest.approx(want[b], abs=1e-8)


def test_adjacent_binary_precision(bprec):
    s = adjacent_relative_vi(build_graphs(bprec), 0.0)
    assert s.J == pytest.approx(1.0, abs=1e-12)
    assert bruteforce_J_adjacent(bprec, 0, 8).value / 8 == pytest.approx(1.0)


def test_perron_check_examples(ternary_graphs, bprec):
    lam = adjacent_relative_vi(ternary_graphs, 1.0).J
    assert adjacent_perron_check(ternary_graphs, (2, 0, 0), 1.0) == pytest.approx(lam, abs=1e-8)
    assert adjacent_perron_check(ternary_graphs, (2, 2, 2), 0.0) == pytest.approx(LOG3, abs=1e-10)
    assert adjacent_perron_check(build_graphs(bprec), {0: 1, 1: 0}, 0.0) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("rho", [0.0, 0.2, 0.7, 1.5, 3.0])
def test_perron_check_agrees_with_returned_policy(ternary_graphs, rho):
    s = adjacent_relative_vi(ternary_graphs, rho)
    assert adjacent_perron_check(ternary_graphs, s.policy, rho) == pytest.approx(s.J, abs=1e-8)


def test_perron_check_reports_two_closed_classes():
    # never charging strands the battery at 1 or at 0, both reachable from 3
    spec = ChannelSpec.from_costs({0: 0, 2: 2, 3: 3}, (0, 1), 3)
    gs = build_graphs(spec)
    with pytest.raises(ReducibleClassError):
        adjacent_perron_check(gs, {0: 0, 1: 0, 2: 0, 3: 0}, 0.5)


# --- cognitive ---------------------------------------------------------------


def test_minimal_rule_is_the_two_state_system(ternary_graphs):
    rule = minimal_charging_policy(ternary_graphs)
    assert rule.available
    assert rule.recurrent == (0, 1)
    want = {
        (0, 0): (0, 0), (0, 1): (2, 1), (0, 2): (2, 0),
        (1, 0): (0, 1), (1, 1): (0, 0), (1, 2): (2, 0),
    }
    for key, (e, nb) in want.items():
        assert (rule.energy[key], rule.next_state[key]) == (e, nb)


def test_minimal_rule_for_binary_precision(bprec):
    rule = minimal_charging_policy(build_graphs(bprec))
    assert rule.available
    # the lazy rule: charge only when the symbol would otherwise be unaffordable
    assert rule.energy[(0, 1)] == 1 and rule.energy[(1, 1)] == 0
    assert rule.recurrent == (0,)


def test_minimal_rule_unavailable_when_future_matters():
    spec = ChannelSpec.from_costs({0: 0, 2: 2}, (0, 1), 2)
    gs = build_graphs(spec)
    rule = minimal_charging_policy(gs)
    assert not rule.available
    with pytest.raises(ReductionUnavailable):
        cognitive_reduced_vi(gs, 1.0, rule=rule)
    # the belief engine still works
    s = cognitive_belief_vi(gs, 1.0)
    assert s.bellman_residual < 1e-8


@pytest.mark.parametrize("rho", [0.0, 0.3, 1.0, 4.0])
def test_cognitive_engines_match_closed_form(ternary_graphs, rho):
    red = cognitive_reduced_vi(ternary_graphs, rho)
    bel = cognitive_belief_vi(ternary_graphs, rho)
    assert red.J == pytest.approx(j_closed("cognitive", rho), abs=1e-9)
    assert bel.J == pytest.approx(red.J, abs=1e-9)
    assert red.gamma == pytest.approx(gamma_closed("cognitive", rho), abs=1e-9)
    assert bel.gamma == pytest.approx(red.gamma, abs=1e-9)


def test_cognitive_policy_matches_closed_form(ternary_graphs):
    s = cognitive_reduced_vi(ternary_graphs, 1.0)
    want = cognitive_policy_closed(1.0)
    for i, b in enumerate(s.states):
        got = s.policy.input_dist(i)
        assert [got.get(x, 0.0) for x in (0, 1, 2)] == pytest.approx(want[b], abs=1e-9)


def test_cognitive_large_rho_sends_zero_symbol(ternary_graphs):
    s = cognitive_reduced_vi(ternary_graphs, 40.0)
    assert s.J == pytest.approx(0.0, abs=1e-9)
    assert s.policy.input_dist(0)[0] == pytest.approx(1.0, abs=1e-9)


def test_cost_automaton_size(ternary_graphs):
    assert build_cost_automaton(ternary_graphs).n == 6


def test_cognitive_finite_horizon_routes_agree(ternary, ternary_graphs):
    aut = build_cost_automaton(ternary_graphs)
    rule = minimal_charging_policy(ternary_graphs)
    for n in (1, 4, 7):
        brute = bruteforce_J_cognitive(ternary, 1.0, n).value
        assert automaton_finite_horizon(aut, 1.0, n) == pytest.approx(brute, abs=1e-9)
        assert reduced_finite_horizon(ternary_graphs, rule, 1.0, n) == pytest.approx(brute, abs=1e-9)


# --- across engines ----------------------------------------------------------


@pytest.fixture(scope="module")
def dual_table(ternary_graphs):
    g = [generic_value_iteration(ternary_graphs, r).J for r in RHOS]
    a = [adjacent_relative_vi(ternary_graphs, r).J for r in RHOS]
    c = [cognitive_reduced_vi(ternary_graphs, r).J for r in RHOS]
    return np.array([g, a, c])


def test_duals_nonincreasing_and_convex(dual_table):
    for row in dual_table:
        assert (np.diff(row) <= 1e-9).all()
        assert (np.diff(row, 2) >= -1e-9).all()


def test_duals_ordered(dual_table):
    g, a, c = dual_table
    assert (g <= a + 1e-6).all()
    assert (a <= c + 1e-6).all()


def test_residual_certificate(ternary_graphs):
    for r in (0.1, 0.5, 2.0):
        for s in (adjacent_relative_vi(ternary_graphs, r), cognitive_belief_vi(ternary_graphs, r),
                  generic_value_iteration(ternary_graphs, r)):
            assert s.bellman_residual < 1e-6


def test_dual_record_text(ternary_graphs):
    text = adjacent_relative_vi(ternary_graphs, 1.0).to_text()
    assert text.startswith("engine=adjacent")
    assert "policy:" in text and "state 0" in text


def test_slow_mixing_multiplier_converges():
    # charging is rare at this multiplier, so plain value iteration crawls
    spec = ChannelSpec.from_costs({0: 0, 1: 3, 2: 0, 3: 2}, (0, 4), 4)
    gs = build_graphs(spec)
    for rho in (6.1, 7.3):
        a = adjacent_relative_vi(gs, rho)
        assert a.bellman_residual < 1e-12
        assert rate_bracket(spec, "adjacent", rho, 8).contains(a.J, 1e-9)
        c = cognitive_belief_vi(gs, rho)
        assert c.bellman_residual < 1e-12
        assert rate_bracket(spec, "cognitive", rho, 6).contains(c.J, 1e-9)


def test_policy_polish_alone_reaches_fixed_point(ternary_graphs):
    prob = adjacent_problem(ternary_graphs)
    h, res = _policy_polish(prob, np.zeros(prob.n_states), 1.0, 0, 1e-13)
    assert res < 1e-12
    th, _ = prob.bellman(h, 1.0)
    assert (th - h).mean() == pytest.approx(j_closed("adjacent", 1.0), abs=1e-10)
