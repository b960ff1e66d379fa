"""Command-line surface.

Exit codes: 0 success / verdict holds, 1 verdict does not hold,
2 non-convergence or budget exhaustion, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .calculus import Network, canonical_form, check_well_formed
from .derivations import replay_paper_derivations
from .gossip import CASE_NAMES, build_case, paired_done
from .laws import Chain, LawEngine, LawError
from .netparse import ParseError, parse_network, pretty_network
from .oracle import DeliveryQuery, exact_reachability, monte_carlo
from .poly import Poly, parse_poly, parse_rational
from .quasimetric import check_tolerance, kernel_is_simulation, min_quasimetric
from .semantics import BudgetExceeded, Lts, setting_for

CSV_HEADER = "p,law_bound,exact_min,exact_max,mc_estimate,ci_lo,ci_hi"
CSV_SCHEMA = "oracle-csv-v1"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_BUDGET = 2
EXIT_INPUT = 3


class InputError(Exception):
    pass


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw else default


def default_state_budget() -> int:
    return _env_int("SIMTOL_STATE_BUDGET", 10_000)


def default_sweeps() -> int:
    return _env_int("SIMTOL_SWEEPS", 64)


@dataclass
class Source:
    network: Network
    externals: frozenset[str]
    values: frozenset[str]
    horizon: int
    label: str


def _load(spec: str, p: Optional[str]) -> Source:
    """A network source: a catalog case name or a file path."""
    if spec.upper() in CASE_NAMES:
        if p is None:
            raise InputError(f"case {spec} needs --p")
        case = build_case(spec, parse_rational(p))
        return Source(case.network, case.externals, frozenset({"v"}),
                      case.horizon, case.name)
    try:
        with open(spec, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {spec}: {e}") from None
    nf = parse_network(text)
    return Source(nf.network, nf.externals, nf.values, 3, spec)


def _lts_for(*sources: Source, budget: int) -> Lts:
    externals = frozenset().union(*(s.externals for s in sources))
    extra = frozenset().union(*(s.values for s in sources))
    setting = setting_for(*(s.network for s in sources), externals=externals,
                          extra_values=extra)
    return Lts(setting, state_budget=budget)


# ---------------------------------------------------------------------------
# subcommands


def cmd_wf(args) -> int:
    src = _load(args.source, args.p)
    bad = check_well_formed(src.network, src.externals)
    if not bad:
        print(f"{src.label}: well-formed ({len(src.network.nodes)} nodes)")
        return EXIT_OK
    for v in bad:
        print(f"{src.label}: violation {v}")
    return EXIT_FAIL


def cmd_lts(args) -> int:
    src = _load(args.source, args.p)
    lts = _lts_for(src, budget=args.budget)
    sys.stdout.write(lts.dump(src.network, args.budget))
    return EXIT_OK


def cmd_distance(args) -> int:
    left = _load(args.left, args.p)
    right = _load(args.right, args.p)
    lts = _lts_for(left, right, budget=args.budget)
    table = min_quasimetric([(left.network, right.network)], lts=lts,
                            max_sweeps=args.sweeps)
    bound = table.entry(left.network, right.network)
    print(f"pair: {left.label} vs {right.label}")
    print(f"bound: {bound} (~{float(bound):.6f})")
    print(f"iterations: {table.iterations}")
    print(f"converged: {table.converged}")
    print(f"pairs-explored: {len(table)}")
    if args.matching:
        _dump_matching(lts, table, left.network, right.network)
    return EXIT_OK if table.converged else EXIT_BUDGET


def _dump_matching(lts, table, m, n):
    from .quasimetric import DistanceEngine, BOT

    engine = DistanceEngine(lts)
    ms, ns = lts.state_id(m), lts.state_id(n)
    from .semantics import game_moves

    for label, ddid in game_moves(lts, ms):
        answers = lts.weak_answers(ns, label)
        best = None
        for theta in answers:
            v = engine._k_value(table.values, ddid, theta, None)
            if best is None or v < best[0]:
                best = (v, theta)
        if best is None:
            print(f"move {label}: no weak answer")
            continue
        print(f"move {label}: best answer cost {best[0]}")
        for sid, w in lts.dist(best[1]):
            print(f"  {w} -> {lts.state(sid)}")


def cmd_check(args) -> int:
    left = _load(args.left, args.p)
    right = _load(args.right, args.p)
    tol_poly = parse_poly(args.tol)
    tol = tol_poly(parse_rational(args.p)) if args.p else tol_poly.constant_value()
    lts = _lts_for(left, right, budget=args.budget)
    verdict = check_tolerance(left.network, right.network, tol, lts=lts,
                              max_sweeps=args.sweeps)
    print(f"check: does {right.label} simulate {left.label} within {tol}?")
    print(verdict)
    if not verdict.converged:
        return EXIT_BUDGET
    return EXIT_OK if verdict.holds else EXIT_FAIL


def cmd_derive(args) -> int:
    p = parse_rational(args.p) if args.p else None
    if args.script:
        cert = _run_script(args.script, p)
        print(cert.pretty(p))
        return EXIT_OK
    cert = replay_paper_derivations(args.case, None)
    print(f"case {cert.case}: tolerance polynomial {cert.tolerance}")
    if p is not None:
        print(f"at p={p}: tolerance {cert.derivation.tol_at(p)} "
              f"(success probability {1 - cert.derivation.tol_at(p)})")
    print(cert.derivation.pretty(p))
    return EXIT_OK


_CHAIN_LAWS = {
    "propagation": lambda ch, s: ch.propagation(s["senders"], s["forwarders"]),
    "collision-propagation": lambda ch, s: ch.propagation_collisions(
        s["senders"], s["forwarders"]),
    "random-delay-propagation": lambda ch, s: ch.propagation_random(
        s["sender"], s["forwarders"]),
    "idle-elim": lambda ch, s: ch.idle_elim(s["node"]),
    "receiver-timeout": lambda ch, s: ch.receiver_timeout(s["node"]),
    "receiver-wait": lambda ch, s: ch.receiver_wait(s["node"]),
    "lost-broadcast": lambda ch, s: ch.lost_broadcast(s["node"]),
    "tau-elim": lambda ch, s: ch.tau_elim(s["node"]),
    "tau-intro": lambda ch, s: ch.tau_intro(s["node"]),
    "choice-flatten": lambda ch, s: ch.flatten_choice(s["node"]),
}


def _apply_script_steps(chain: Chain, steps) -> None:
    for step in steps:
        law = step.get("law")
        if law == "under-tick":
            chain.under_tick(lambda c, inner=step["steps"]: _apply_script_steps(c, inner))
        elif law in _CHAIN_LAWS:
            _CHAIN_LAWS[law](chain, step)
        else:
            raise InputError(f"unknown law in script: {law!r}")


def _run_script(path: str, p: Optional[Fraction]):
    from .derivations import Certificate

    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot load script {path}: {e}") from None
    start = spec.get("start")
    if isinstance(start, str):
        src = _load(start, str(p) if p is not None else spec.get("p"))
        net = src.network
        externals = src.externals
    else:
        raise InputError("script 'start' must name a case or a network file")
    engine = LawEngine(externals=externals)
    chain = Chain(engine, net)
    _apply_script_steps(chain, spec.get("steps", []))
    j = chain.judgment()
    return Certificate(spec.get("name", path), j, j.tol)


def _case_p(args) -> tuple[Source, Fraction]:
    if args.p is None:
        raise InputError("--p is required")
    return _load(args.case, args.p), parse_rational(args.p)


def _law_bound(case: str, p: Fraction) -> Optional[Fraction]:
    try:
        cert = replay_paper_derivations(case, None)
    except KeyError:
        return None
    return 1 - cert.derivation.tol_at(p)


def _csv_row(p, law_bound, lo, hi, mc):
    def f(x):
        return "" if x is None else (f"{float(x):.10g}")

    est = ci_lo = ci_hi = None
    if mc is not None:
        est, ci_lo, ci_hi = mc.estimate, mc.ci_lo, mc.ci_hi
    return ",".join([f"{float(p):.10g}", f(law_bound), f(lo), f(hi),
                     f(est), f(ci_lo), f(ci_hi)])


def cmd_oracle(args) -> int:
    src, p = _case_p(args)
    horizon = args.horizon or src.horizon
    lts = _lts_for(src, budget=args.budget)
    query = DeliveryQuery(src.network, destination=args.destination,
                          value=args.value, horizon=horizon)
    bracket = exact_reachability(query, lts=lts)
    law = _law_bound(args.case, p) if args.case.upper() in CASE_NAMES else None
    print(f"# schema: {CSV_SCHEMA}")
    print(CSV_HEADER)
    print(_csv_row(p, law, bracket.lo, bracket.hi, None))
    return EXIT_OK


def cmd_simulate(args) -> int:
    src, p = _case_p(args)
    horizon = args.horizon or src.horizon
    lts = _lts_for(src, budget=args.budget)
    query = DeliveryQuery(src.network, destination=args.destination,
                          value=args.value, horizon=horizon)
    mc = monte_carlo(query, args.trials, seed=args.seed, lts=lts)
    lo = hi = None
    if args.with_exact:
        bracket = exact_reachability(query, lts=lts)
        lo, hi = bracket.lo, bracket.hi
    law = _law_bound(args.case, p) if args.case.upper() in CASE_NAMES else None
    print(f"# schema: {CSV_SCHEMA}")
    print(CSV_HEADER)
    print(_csv_row(p, law, lo, hi, mc))
    return EXIT_OK


def cmd_catalog(args) -> int:
    shown = set()
    for name in CASE_NAMES:
        if name in shown:
            continue
        shown.add(name)
        case = build_case(name, Fraction(1, 2))
        nodes = " ".join(n.name for n in case.network.nodes)
        print(f"{name}: nodes [{nodes}] horizon {case.horizon} -- {case.summary}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_source_opts(sp, positional=True):
    if positional:
        sp.add_argument("source", help="catalog case name or network file")
    sp.add_argument("--p", help="gossip probability (rational), for case names")
    sp.add_argument("--budget", type=int, default=default_state_budget(),
                    help="state budget")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="simtol",
        description="Simulation-with-tolerance verification for probabilistic "
                    "timed broadcast networks")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("wf", help="check well-formedness")
    _add_source_opts(sp)
    sp.set_defaults(fn=cmd_wf)

    sp = sub.add_parser("lts", help="dump the transition system")
    _add_source_opts(sp)
    sp.set_defaults(fn=cmd_lts)

    sp = sub.add_parser("distance", help="simulation distance between two networks")
    sp.add_argument("--left", required=True, help="simulated network (case or file)")
    sp.add_argument("--right", required=True, help="simulating network (case or file)")
    sp.add_argument("--p", help="gossip probability for case names")
    sp.add_argument("--budget", type=int, default=default_state_budget())
    sp.add_argument("--sweeps", type=int, default=default_sweeps())
    sp.add_argument("--matching", action="store_true",
                    help="dump best weak answers for the root pair")
    sp.set_defaults(fn=cmd_distance)

    sp = sub.add_parser("check", help="verify a simulation tolerance")
    sp.add_argument("--left", required=True)
    sp.add_argument("--right", required=True)
    sp.add_argument("--p", help="gossip probability")
    sp.add_argument("--tol", required=True,
                    help="tolerance: polynomial in p, e.g. '(1-p)^2'")
    sp.add_argument("--budget", type=int, default=default_state_budget())
    sp.add_argument("--sweeps", type=int, default=default_sweeps())
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("derive", help="replay a tolerance derivation")
    sp.add_argument("--case", help="catalog case (GSP1..GSP6)")
    sp.add_argument("--script", help="JSON chain-derivation script")
    sp.add_argument("--p", help="evaluate the tolerance at this probability")
    sp.set_defaults(fn=cmd_derive)

    sp = sub.add_parser("oracle", help="exact delivery probability bracket")
    sp.add_argument("--case", required=True, help="case name or network file")
    sp.add_argument("--p", help="gossip probability")
    sp.add_argument("--horizon", type=int, help="round horizon (default per case)")
    sp.add_argument("--destination", default="d")
    sp.add_argument("--value", default="v")
    sp.add_argument("--budget", type=int, default=default_state_budget())
    sp.set_defaults(fn=cmd_oracle)

    sp = sub.add_parser("simulate", help="seeded Monte-Carlo delivery estimate")
    sp.add_argument("--case", required=True)
    sp.add_argument("--p")
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--destination", default="d")
    sp.add_argument("--value", default="v")
    sp.add_argument("--with-exact", action="store_true")
    sp.add_argument("--budget", type=int, default=default_state_budget())
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("catalog", help="list the case catalog")
    sp.set_defaults(fn=cmd_catalog)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (InputError, ParseError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (BudgetExceeded, LawError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
