"""Average-reward engines for the three charger side-information regimes."""

from .adjacent import adjacent_perron_check, adjacent_problem, adjacent_relative_vi
from .common import (
    DualSolve,
    NonConvergenceError,
    ReducibleClassError,
    ReductionUnavailable,
    SolverError,
    StateCapExceeded,
)
from .generic import (
    build_simplex_graph,
    generic_finite_horizon,
    generic_slope,
    generic_value_iteration,
)
from .softmax import EmptySupportError, solve_inner_softmax
from .cognitive import (
    automaton_finite_horizon,
    build_cost_automaton,
    cognitive_belief_vi,
    cognitive_reduced_vi,
    min_cost_tables,
    minimal_charging_policy,
    reduced_finite_horizon,
)
