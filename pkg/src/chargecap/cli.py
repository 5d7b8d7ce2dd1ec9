"""Command-line front end.

Channel specs are JSON objects::

    {
      "input_alphabet": [0, 1, 2],
      "cost": {"0": 0, "1": 1, "2": 2},
      "energy_alphabet": [0, 2],
      "battery_capacity": 2
    }

Symbols may be integers or strings; ``cost`` is keyed by the symbol's text.

Exit codes: 0 success, 1 spec or usage error, 2 solver error, 3 state or
horizon cap exceeded, 4 verification checks failed.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from fractions import Fraction
from pathlib import Path

from .channel import (
    ChannelSpec,
    SpecError,
    as_fraction,
    binary_precision,
    ternary_example,
    ternary_precision,
)
from .graphs import build_graphs, edge_list_text
from .mdp.common import SolverError, StateCapExceeded
from .oracle import BRUTEFORCE, GENERIC_CAP, TREE_CAP, enumerate_feasible
from .report import reproduce_fig8, verify_spec, verify_ternary_example
from .sweep import Engine, capacity, capacity_at, parse_rho_grid, sweep, upper_bound_curve

EXIT_SPEC, EXIT_SOLVER, EXIT_CAP, EXIT_CHECKS = 1, 2, 3, 4
MODE_NAMES = {
    "generic": "generic",
    "adjacent": "adjacent",
    "cognitive": "cognitive",
    "ub": "upper_bound",
    "precision": "precision",
}
SPEC_KEYS = ("input_alphabet", "cost", "energy_alphabet", "battery_capacity")
EXAMPLES = {
    "ternary": ternary_example,
    "ternary-precision": ternary_precision,
    "binary-precision": binary_precision,
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spec files


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"line {line}, field '{key}'" if line else f"field '{key}'"


def _int_field(text: str, key: str, v, source: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(f"{source}: {_where(text, key)}: expected an integer, got {json.dumps(v)}")
    return v


def parse_spec(text: str, source: str = "<spec>") -> ChannelSpec:
    """Parse and validate a JSON spec; errors name the offending line and field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise SpecError(f"{source}: top level must be an object")
    for key in SPEC_KEYS:
        if key not in doc:
            raise SpecError(f"{source}: missing field '{key}'")
    extra = sorted(set(doc) - set(SPEC_KEYS))
    if extra:
        raise SpecError(f"{source}: {_where(text, extra[0])}: unknown field")

    labels = doc["input_alphabet"]
    if not isinstance(labels, list) or not labels:
        raise SpecError(f"{source}: {_where(text, 'input_alphabet')}: expected a non-empty list")
    for x in labels:
        if isinstance(x, bool) or not isinstance(x, (int, str)):
            raise SpecError(
                f"{source}: {_where(text, 'input_alphabet')}: symbol {json.dumps(x)} "
                "must be an integer or a string"
            )
    keys = [str(x) for x in labels]
    if len(set(keys)) != len(keys):
        raise SpecError(f"{source}: {_where(text, 'input_alphabet')}: duplicate symbol")

    cost = doc["cost"]
    if not isinstance(cost, dict):
        raise SpecError(f"{source}: {_where(text, 'cost')}: expected an object")
    unknown = sorted(set(cost) - set(keys))
    if unknown:
        raise SpecError(f"{source}: {_where(text, 'cost')}: '{unknown[0]}' is not an input symbol")
    costs = []
    for k in keys:
        if k not in cost:
            raise SpecError(f"{source}: {_where(text, 'cost')}: no cost for symbol '{k}'")
        costs.append(_int_field(text, "cost", cost[k], source))

    energies = doc["energy_alphabet"]
    if not isinstance(energies, list):
        raise SpecError(f"{source}: {_where(text, 'energy_alphabet')}: expected a list")
    energies = [_int_field(text, "energy_alphabet", e, source) for e in energies]
    cap = _int_field(text, "battery_capacity", doc["battery_capacity"], source)
    try:
        return ChannelSpec.from_costs(dict(zip(labels, costs)), energies, cap)
    except SpecError as exc:
        raise type(exc)(f"{source}: {exc}") from None


def dump_spec(spec: ChannelSpec) -> str:
    doc = {
        "input_alphabet": list(spec.input_alphabet),
        "cost": {str(x): c for x, c in zip(spec.input_alphabet, spec.costs)},
        "energy_alphabet": list(spec.energy_alphabet),
        "battery_capacity": spec.battery_capacity,
    }
    return json.dumps(doc, indent=2) + "\n"


def load_spec(path: str) -> ChannelSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    return parse_spec(text, path)


# ---------------------------------------------------------------------------
# commands


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return f"{float(v):.12g}"


def _gamma(text: str) -> Fraction:
    try:
        g = as_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"cannot read gamma {text!r}") from None
    if g < 0:
        raise UsageError("gamma must be non-negative")
    return g


def _modes(mode: str) -> list[str]:
    if mode == "all":
        return ["generic", "adjacent", "cognitive", "upper_bound"]
    return [MODE_NAMES[mode]]


def _engine_opts(args) -> dict:
    return {
        "max_depth": args.max_depth,
        "state_cap": args.state_cap,
        "on_cap": "truncate" if args.truncate else "raise",
    }


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_capacity(args) -> int:
    spec = load_spec(args.spec)
    g = _gamma(args.gamma)
    lines = []
    for mode in _modes(args.mode):
        if mode in ("upper_bound", "precision"):
            val = capacity(spec, mode, g)
        else:
            eng = Engine(spec, mode, reduced=args.reduced, **_engine_opts(args))
            val = capacity_at(eng, g)
        name = "ub" if mode == "upper_bound" else mode
        lines.append(
            f"mode={name} gamma={_fmt(g)} capacity={_fmt(val.capacity)} residual={_fmt(val.residual)}"
        )
        lines.append(
            f"  upper={_fmt(val.upper)} rho={_fmt(val.rho)} alpha={_fmt(val.alpha)} "
            f"solves={val.solves} note={val.note or 'tangent'}"
        )
    _write("\n".join(lines) + "\n", args.output)
    return 0


def cmd_sweep(args) -> int:
    spec = load_spec(args.spec)
    grid = parse_rho_grid(args.rho_grid) if args.rho_grid is not None else None
    if args.mode == "all":
        table = reproduce_fig8(_gamma(args.resolution), spec, curve_tol=args.curve_tol)
        _write(table.to_csv(), args.output)
        return 0
    mode = MODE_NAMES[args.mode]
    if mode in ("upper_bound", "precision"):
        if mode == "precision":
            Engine(spec, mode)
        step = _gamma(args.resolution)
        if step <= 0:
            raise UsageError("resolution must be positive")
        top = Fraction(max(spec.costs))
        gs = [k * step for k in range(int(top / step) + 1)]
        cur = upper_bound_curve(spec, gs)
        cur.mode = args.mode
    else:
        cur = sweep(spec, mode, grid, curve_tol=args.curve_tol,
                    reduced=args.reduced, **_engine_opts(args))
    _write(cur.to_csv(), args.output)
    for bp in cur.info.get("breakpoints", []):
        print(f"breakpoint rho={_fmt(bp)} timeshare", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    spec = load_spec(args.spec)
    if args.oracle_depth is None and spec == ternary_example():
        rep = verify_ternary_example(seed=args.seed, sim_steps=args.sim_steps)
    else:
        rep = verify_spec(spec, args.oracle_depth or 6)
    _write(rep.to_text(), args.output)
    return 0 if rep.ok else EXIT_CHECKS


def cmd_graphs(args) -> int:
    spec = load_spec(args.spec)
    gs = build_graphs(spec)
    text = edge_list_text(gs)
    text += "# reachable " + " ".join(str(b) for b in gs.reachable) + "\n"
    _write(text, args.output)
    return 0


def cmd_oracle(args) -> int:
    spec = load_spec(args.spec)
    n = args.n
    lines = []
    if args.kind == "count":
        g = None if args.gamma is None else _gamma(args.gamma)
        c = enumerate_feasible(spec, n, g, cap=args.cap or GENERIC_CAP)
        lines.append(f"n={n} budget={'none' if c.budget is None else c.budget} "
                     f"pairs={c.pairs} inputs={c.inputs}")
    else:
        rho = _gamma(args.rho)
        cap = args.cap or (GENERIC_CAP if args.kind == "generic" else TREE_CAP)
        res = BRUTEFORCE[args.kind](spec, rho, n, cap=cap)
        arg = res.argmax
        if args.kind == "cognitive":
            arg = f"support {arg['support']}"
        lines.append(f"mode={args.kind} rho={_fmt(rho)} n={n} value={_fmt(res.value)} "
                     f"rate={_fmt(res.rate)}")
        lines.append(f"  argmax {arg}")
    _write("\n".join(lines) + "\n", args.output)
    return 0


def cmd_example(args) -> int:
    _write(dump_spec(EXAMPLES[args.name]()), args.output)
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_SPEC, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chargecap", description="Capacity of battery-limited channels with a charger.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, modes=True):
        sp.add_argument("spec", help="channel spec (JSON)")
        sp.add_argument("-o", "--output", help="write to this file instead of stdout")
        if modes:
            sp.add_argument("--mode", default="all", choices=[*MODE_NAMES, "all"])
            sp.add_argument("--reduced", action="store_true",
                            help="cognitive mode: use the minimal-charging reduction")
            sp.add_argument("--max-depth", type=int, default=1024,
                            help="generic mode: depth limit for the state graph")
            sp.add_argument("--state-cap", type=int, default=100_000)
            sp.add_argument("--truncate", action="store_true",
                            help="keep a partial state graph instead of failing at the cap")

    sp = sub.add_parser("capacity", help="capacity at one cost budget")
    common(sp)
    sp.add_argument("--gamma", required=True, help="average charge budget, e.g. 2/3")
    sp.set_defaults(func=cmd_capacity)

    sp = sub.add_parser("sweep", help="capacity curve as CSV")
    common(sp)
    sp.add_argument("--rho-grid", help="start:stop:step or a comma list")
    sp.add_argument("--curve-tol", type=float, default=1e-5)
    sp.add_argument("--resolution", default="1/48", help="budget step for tabulated output")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run the verification checks")
    common(sp, modes=False)
    sp.add_argument("--oracle-depth", type=int, help="run only oracle checks up to this horizon")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sim-steps", type=int, default=1_000_000)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("graphs", help="dump the per-charge battery graphs")
    common(sp, modes=False)
    sp.set_defaults(func=cmd_graphs)

    sp = sub.add_parser("oracle", help="brute-force counts and finite-horizon values")
    common(sp, modes=False)
    sp.add_argument("--kind", default="count", choices=["count", *BRUTEFORCE])
    sp.add_argument("-n", type=int, required=True, help="horizon")
    sp.add_argument("--gamma", help="budget for counting (omit for none)")
    sp.add_argument("--rho", default="0")
    sp.add_argument("--cap", type=int, help="largest horizon allowed")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("example", help="print a built-in spec")
    sp.add_argument("name", choices=sorted(EXAMPLES))
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StateCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SpecError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
