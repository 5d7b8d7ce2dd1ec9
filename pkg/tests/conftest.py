import pytest

from chargecap.channel import ChannelSpec, binary_precision, ternary_example, ternary_precision
from chargecap.graphs import build_graphs


@pytest.fixture(scope="session")
def ternary():
    return ternary_example()


@pytest.fixture(scope="session")
def ternary_graphs(ternary):
    return build_graphs(ternary)


@pytest.fixture(scope="session")
def tprec():
    return ternary_precision()


@pytest.fixture(scope="session")
def bprec():
    return binary_precision()


def random_spec(rng, max_symbols=4, max_energies=3, max_cap=4):
    """A valid integer spec drawn from ``rng`` (a numpy Generator)."""
    cap = int(rng.integers(1, max_cap + 1))
    k = int(rng.integers(2, max_symbols + 1))
    costs = [0] + [int(c) for c in rng.integers(0, cap + 1, size=k - 1)]
    m = int(rng.integers(1, max_energies + 1))
    pos = int(rng.integers(1, cap + 1))
    others = [int(e) for e in rng.integers(0, cap + 1, size=m - 1)]
    energies = sorted(set([pos] + others))
    return ChannelSpec.from_costs({i: c for i, c in enumerate(costs)}, energies, cap)
