import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chargecap.mdp.softmax import EmptySupportError, entropy_bits, solve_inner_softmax


def test_zero_penalty_gives_uniform():
    v, p = solve_inner_softmax([0, 0, 0])
    assert v == pytest.approx(math.log2(3))
    assert np.allclose(p, 1 / 3)


def test_small_example():
    v, p = solve_inner_softmax([0, 1, 1])
    assert v == pytest.approx(1.0)
    assert np.allclose(p, [0.5, 0.25, 0.25])


def test_mapping_input_keeps_labels():
    v, p = solve_inner_softmax({"a": 0.0, "b": 1.0})
    assert set(p) == {"a", "b"}
    assert p["a"] == pytest.approx(2 / 3)


def test_battery_row_of_the_adjacent_dual():
    # empty battery, full charge: all three symbols reachable, next levels 2, 1, 0
    h1, h2, rho = 0.3, 0.7, 0.4
    v, _ = solve_inner_softmax([-h2, -h1, 0.0])
    assert v - 2 * rho == pytest.approx(math.log2(1 + 2**h1 + 2**h2) - 2 * rho)


def test_errors():
    with pytest.raises(EmptySupportError):
        solve_inner_softmax([])
    with pytest.raises(ValueError):
        solve_inner_softmax([0.0, math.inf])


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=6), st.data())
def test_value_dominates_any_distribution(a, data):
    a = np.array(a)
    v, p = solve_inner_softmax(a)
    assert p.sum() == pytest.approx(1.0)
    assert entropy_bits(p) - p @ a == pytest.approx(v, abs=1e-9)
    w = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=len(a), max_size=len(a))))
    q = w / w.sum()
    assert entropy_bits(q) - q @ a <= v + 1e-9


def test_grid_search_on_three_symbols():
    a = np.array([0.2, 1.3, -0.4])
    v, _ = solve_inner_softmax(a)
    best = -math.inf
    step = 0.01
    for i, j in itertools.product(range(101), repeat=2):
        if i + j > 100:
            continue
        q = np.array([i, j, 100 - i - j]) * step
        best = max(best, entropy_bits(q) - q @ a)
    assert best <= v + 1e-12
    assert v - best < 1e-3
