"""Channel and battery model.

A remotely powered noiseless channel is described by an input alphabet with
integer transmit costs, a set of integer charge amounts the charger may
deliver per slot, and a battery capacity. The battery starts full and evolves
as ``b' = min(b + e, cap) - cost(x)``; a symbol may be sent only when its cost
does not exceed the energy available in that slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Sequence


class SpecError(ValueError):
    """Base class for invalid channel descriptions."""


class NoZeroSymbolError(SpecError):
    pass


class CostExceedsCapacityError(SpecError):
    pass


class EnergyExceedsCapacityError(SpecError):
    pass


class NoPositiveEnergyError(SpecError):
    pass


class NegativeValueError(SpecError):
    pass


class NonIntegerValueError(SpecError):
    pass


class MalformedSpecError(SpecError):
    pass


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass(frozen=True)
class ChannelSpec:
    """Immutable channel description.

    ``cost`` is stored as a tuple aligned with ``input_alphabet`` so that the
    object is hashable; use :meth:`phi` for label lookups.
    """

    input_alphabet: tuple
    energy_alphabet: tuple
    costs: tuple
    battery_capacity: int
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "input_alphabet", tuple(self.input_alphabet))
        object.__setattr__(self, "energy_alphabet", tuple(self.energy_alphabet))
        object.__setattr__(self, "costs", tuple(self.costs))
        if len(self.costs) != len(self.input_alphabet):
            raise MalformedSpecError("costs must align with input_alphabet")
        if len(set(self.input_alphabet)) != len(self.input_alphabet):
            raise MalformedSpecError("duplicate input symbol")
        if len(set(self.energy_alphabet)) != len(self.energy_alphabet):
            raise MalformedSpecError("duplicate energy value")
        object.__setattr__(
            self, "_index", {x: i for i, x in enumerate(self.input_alphabet)}
        )

    @classmethod
    def from_costs(
        cls,
        cost: Mapping[Hashable, int],
        energies: Iterable[int],
        battery_capacity: int,
        validate: bool = True,
    ) -> "ChannelSpec":
        spec = cls(tuple(cost), tuple(energies), tuple(cost.values()), battery_capacity)
        return validate_spec(spec) if validate else spec

    @property
    def cost(self) -> dict:
        return dict(zip(self.input_alphabet, self.costs))

    def phi(self, x) -> int:
        return self.costs[self._index[x]]

    def symbol_index(self, x) -> int:
        return self._index[x]

    @property
    def n_symbols(self) -> int:
        return len(self.input_alphabet)

    @property
    def n_zero_symbols(self) -> int:
        return sum(1 for c in self.costs if c == 0)

    @property
    def max_energy(self) -> int:
        return max(self.energy_alphabet)

    def is_precision(self) -> bool:
        """True when every symbol cost is itself a deliverable charge."""
        return set(self.costs) <= set(self.energy_alphabet)


def validate_spec(spec: ChannelSpec) -> ChannelSpec:
    """Return ``spec`` unchanged if it satisfies every model assumption."""
    cap = spec.battery_capacity
    values = [cap, *spec.costs, *spec.energy_alphabet]
    for v in values:
        if not _is_int(v):
            raise NonIntegerValueError(f"value {v!r} is not an integer")
    for v in values:
        if v < 0:
            raise NegativeValueError(f"value {v} is negative")
    if not spec.input_alphabet:
        raise MalformedSpecError("input alphabet is empty")
    if not spec.energy_alphabet:
        raise MalformedSpecError("energy alphabet is empty")
    if 0 not in spec.costs:
        raise NoZeroSymbolError("no input symbol has zero cost")
    for x, c in zip(spec.input_alphabet, spec.costs):
        if c > cap:
            raise CostExceedsCapacityError(
                f"cost({x!r}) = {c} exceeds battery capacity {cap}"
            )
    for e in spec.energy_alphabet:
        if e > cap:
            raise EnergyExceedsCapacityError(
                f"energy {e} exceeds battery capacity {cap}"
            )
    if not any(e > 0 for e in spec.energy_alphabet):
        raise NoPositiveEnergyError("energy alphabet has no positive value")
    return spec


def available(b: int, e: int, cap: int) -> int:
    return min(b + e, cap)


def step_battery(b: int, e: int, x, spec: ChannelSpec) -> int | None:
    """Next battery level, or ``None`` when ``x`` cannot be afforded."""
    avail = min(b + e, spec.battery_capacity)
    c = spec.phi(x)
    if c > avail:
        return None
    return avail - c


@dataclass(frozen=True)
class Trajectory:
    inputs: tuple
    energies: tuple
    batteries: tuple  # b_1..b_{n+1}; None marks the first infeasible step

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def feasible(self) -> bool:
        return None not in self.batteries

    @property
    def total_energy(self) -> int:
        return sum(self.energies)


def replay(inputs: Sequence, energies: Sequence, spec: ChannelSpec) -> Trajectory:
    if len(inputs) != len(energies):
        raise ValueError(
            f"length mismatch: {len(inputs)} inputs, {len(energies)} energies"
        )
    b = spec.battery_capacity
    batteries = [b]
    for x, e in zip(inputs, energies):
        if b is not None:
            b = step_battery(b, e, x, spec)
        batteries.append(b)
    return Trajectory(tuple(inputs), tuple(energies), tuple(batteries))


@dataclass(frozen=True)
class Membership:
    unconstrained: bool  # feasible without a cost budget
    constrained: bool  # feasible and within the average-cost budget


def check_trajectory(traj: Trajectory | tuple, gamma, spec: ChannelSpec) -> Membership:
    """Feasibility of an input/energy pair, with and without the cost budget.

    ``traj`` may be a :class:`Trajectory` or an ``(inputs, energies)`` pair; in
    the first case the stored battery sequence must agree with a replay.
    """
    if isinstance(traj, Trajectory):
        inputs, energies = traj.inputs, traj.energies
    else:
        inputs, energies = traj
    if len(inputs) != len(energies):
        raise ValueError(
            f"length mismatch: {len(inputs)} inputs, {len(energies)} energies"
        )
    if len(inputs) == 0:
        raise ValueError("empty trajectory")
    rep = replay(inputs, energies, spec)
    if isinstance(traj, Trajectory) and traj.batteries != rep.batteries:
        return Membership(False, False)
    ok = rep.feasible
    within = sum(energies) <= len(inputs) * as_fraction(gamma)
    return Membership(ok, ok and within)


def as_fraction(v) -> Fraction:
    """Exact rational from an int, Fraction, decimal string, "a/b" or float."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(str(v).strip())


def ternary_example() -> ChannelSpec:
    """Ternary inputs with cost equal to the symbol, charges {0, 2}, capacity 2."""
    return ChannelSpec.from_costs({0: 0, 1: 1, 2: 2}, (0, 2), 2)


def ternary_precision() -> ChannelSpec:
    """Ternary inputs with every cost deliverable: charges {0, 1, 2}, capacity 2."""
    return ChannelSpec.from_costs({0: 0, 1: 1, 2: 2}, (0, 1, 2), 2)


def binary_precision() -> ChannelSpec:
    return ChannelSpec.from_costs({0: 0, 1: 1}, (0, 1), 1)
