"""Analytic capacities and duals for the ternary example and precision chargers.

The ternary example has inputs {0, 1, 2} with cost equal to the symbol,
charges {0, 2} and battery capacity 2. Branch tests on the cost budget use
exact rationals so that boundary values such as 2/3 or 10/9 are classified
without rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelSpec, Trajectory, as_fraction, replay
from .mdp.softmax import solve_inner_softmax

LOG3 = math.log2(3)


def _h2(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


# --- charger without side information ---------------------------------------


def _c0_vertex(l: int) -> float:
    return math.log2((l + 1) * (l + 2) / 2) / l


def c0_closed(gamma) -> float:
    g = as_fraction(gamma)
    if g < 0:
        raise ValueError("gamma must be non-negative")
    if g == 0:
        return 0.0
    if g >= 2:
        return LOG3
    # vertices sit at 2/l; find l1 >= l2 with 2/l1 <= g <= 2/l2
    l2 = math.floor(2 / g)
    l1 = math.ceil(2 / g)
    if l1 == l2:
        return _c0_vertex(l1)
    g1, g2 = Fraction(2, l1), Fraction(2, l2)
    alpha = float((g2 - g) / (g2 - g1))
    return alpha * _c0_vertex(l1) + (1 - alpha) * _c0_vertex(l2)


def c0_band(l: int) -> tuple[float, float]:
    """Multiplier interval on which charging every ``l``-th slot is optimal."""
    base = 0.5 * math.log2((l + 1) * (l + 2) / 2)
    lo = base - 0.5 * l * math.log2((l + 2) / l)
    hi = base - 0.5 * l * math.log2((l + 3) / (l + 1))
    return lo, hi


def generic_period(rho: float) -> int:
    rho = float(rho)
    l = 1
    while c0_band(l)[1] < rho:
        l += 1
    return l


# --- charger that sees past inputs -------------------------------------------


def cx_closed(gamma) -> float:
    g = as_fraction(gamma)
    if g < 0:
        raise ValueError("gamma must be non-negative")
    if g == 0:
        return 0.0
    x = float(g)
    if g < Fraction(2, 3):
        return (1 + x / 2) * math.log2((2 + x) / (2 * x)) - (1 - x / 2) * math.log2(
            (2 - x) / (2 * x)
        )
    if g < 1:
        return x / 2 + 1
    if g < Fraction(4, 3):
        return x / 2 + _h2(x / 2)
    return LOG3


# --- message-aware charger ---------------------------------------------------


def cubic(gamma, zeta):
    """Left side of the cubic whose root parametrizes the capacity."""
    return gamma * zeta**3 + 2 * (gamma - 1) * zeta**2 - (3 * gamma + 4) * zeta - 10


def zeta_root(gamma):
    """Root ``zeta >= 3`` of the cubic; exact (``3``) when it is the root."""
    g = as_fraction(gamma)
    if not 0 < g <= Fraction(10, 9):
        raise ValueError("cubic parametrization holds for 0 < gamma <= 10/9")
    if cubic(g, Fraction(3)) == 0:
        return Fraction(3)
    x = float(g)
    hi = 4.0
    while cubic(x, hi) <= 0:
        hi *= 2
        if hi > 1e12:
            raise ArithmeticError("cubic root bracket failed")
    return brentq(lambda z: cubic(x, z), 3.0, hi, xtol=1e-14, rtol=1e-15, maxiter=500)


def cm_closed(gamma) -> float:
    g = as_fraction(gamma)
    if g < 0:
        raise ValueError("gamma must be non-negative")
    if g == 0:
        return 0.0
    if g > Fraction(10, 9):
        return LOG3
    z = float(zeta_root(g))
    x = float(g)
    return math.log2(z * z + 2 * z - 3) + (x - 2) / 2 * math.log2(z * z - 5) - x


# --- duals -------------------------------------------------------------------


def j_closed(mode: str, rho) -> float:
    r = float(rho)
    if r < 0:
        raise ValueError("rho must be non-negative")
    if mode == "generic":
        l = generic_period(r)
        return (math.log2((l + 1) * (l + 2) / 2) - 2 * r) / l
    if mode == "adjacent":
        if r < 0.5:
            return math.log2(2 + 2 ** (2 * r)) - 2 * r
        return 2 * math.log2(1 + math.sqrt(1 + 2 ** (2 * r + 2))) - 2 * r - 2
    if mode == "cognitive":
        s = math.sqrt(5 + 2 ** (2 * r + 2))
        return math.log2(2 + 2 ** (-2 * r) + 2 ** (-2 * r) * s) - 1
    raise ValueError(f"unknown mode {mode!r}")


def gamma_closed(mode: str, rho) -> float:
    """Average charge of the optimal policy at multiplier ``rho`` (ternary)."""
    r = float(rho)
    if mode == "generic":
        return 2 / generic_period(r)
    if mode == "adjacent":
        if r < 0.5:
            return 4 / (2 + 2 ** (2 * r))
        return 2 / math.sqrt(1 + 2 ** (2 * r + 2))
    if mode == "cognitive":
        if r == 0:
            return 10 / 9
        s = math.sqrt(5 + 2 ** (2 * r + 2))
        return (2 ** (2 * r + 1) * (2 ** (2 * r) + 2) / s - 2) / (2 ** (4 * r) - 1)
    raise ValueError(f"unknown mode {mode!r}")


def adjacent_policy_closed(rho) -> dict:
    """Optimal input distributions per battery level for the ternary example."""
    r = float(rho)
    if r < 0.5:
        a = 2 ** (2 * r)
        w = {0: (a, 1, 1), 1: (a, 1, 1), 2: (a, 1, 1)}
    else:
        s = math.sqrt(1 + 2 ** (2 * r + 2))
        full = (2 ** (2 * r + 1), s - 1, 2)
        w = {0: full, 1: (s - 1, 2, 0), 2: full}
    return {b: tuple(v / sum(t) for v in t) for b, t in w.items()}


def cognitive_policy_closed(rho) -> dict:
    r = float(rho)
    s = math.sqrt(5 + 2 ** (2 + 2 * r))
    w = {0: (2 ** (1 + 2 * r), s - 1, 2), 1: (s - 1, 2, 2 ** (1 - 2 * r))}
    return {b: tuple(v / sum(t) for v in t) for b, t in w.items()}


# --- precision chargers -------------------------------------------------------


class NotPrecisionError(ValueError):
    pass


def ub_capacity(spec: ChannelSpec, gamma) -> float:
    """Largest input entropy with mean cost at most ``gamma``."""
    g = float(as_fraction(gamma))
    costs = np.array(spec.costs, dtype=float)
    if g >= costs.mean():
        return math.log2(len(costs))
    n0 = int((costs == 0).sum())
    if g <= 0:
        return math.log2(n0)

    def mean_cost(mu):
        _, p = solve_inner_softmax(mu * costs)
        return float(p @ costs)

    hi = 1.0
    while mean_cost(hi) > g:
        hi *= 2
    mu = brentq(lambda m: mean_cost(m) - g, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    val, _ = solve_inner_softmax(mu * costs)
    return val + mu * g


def precision_capacity(spec: ChannelSpec, gamma) -> float:
    if not spec.is_precision():
        raise NotPrecisionError("some symbol cost is not a deliverable charge")
    return ub_capacity(spec, gamma)


@dataclass(frozen=True)
class PrecisionRun:
    trajectory: Trajectory
    total_energy: int
    total_symbol_cost: int
    full_before_each_symbol: bool


def simulate_precision_scheme(spec: ChannelSpec, codeword) -> PrecisionRun:
    """Recharge exactly what the previous symbol spent."""
    if not spec.is_precision():
        raise NotPrecisionError("some symbol cost is not a deliverable charge")
    codeword = tuple(codeword)
    energies = [0] + [spec.phi(x) for x in codeword[:-1]]
    traj = replay(codeword, energies, spec)
    full = all(
        b is not None and b + e == spec.battery_capacity
        for b, e in zip(traj.batteries, energies)
    )
    if not traj.feasible or not full:
        raise RuntimeError("recharge scheme left the battery short")
    total_cost = sum(spec.phi(x) for x in codeword)
    return PrecisionRun(traj, sum(energies), total_cost, full)
