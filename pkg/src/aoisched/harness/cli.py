"""Command-line entry point: aoisched {solve,simulate,learn,bound,index,repro}.

Exit codes:
    0  success
    1  unexpected internal error
    2  usage or scenario error
    3  state space too large for exact methods
    4  numerical failure (RVI, unichain check, bracketing, learner divergence)
    5  file system error
    6  finished, but some seeds failed (see the status column)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from ..bounds import lower_bound
from ..errors import (
    BracketError,
    DqnNumericFailure,
    LfaDiverged,
    NotUnichain,
    RviDiverged,
    ScenarioError,
    StateSpaceTooLarge,
)
from ..index.closed_forms import ArqArmParams, FrArmParams, whittle_index_arq, whittle_index_fr
from .presets import preset
from .runner import run_scenario, solve_scenario, write_csv_atomic
from .scenario import LEARNERS, PLANNERS, load_scenario, parse_seeds, scenario_from_dict

log = logging.getLogger("aoisched")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_TOO_LARGE, EXIT_NUMERIC, EXIT_IO, EXIT_PARTIAL = range(7)
NUMERIC_ERRORS = (RviDiverged, NotUnichain, BracketError, LfaDiverged, DqnNumericFailure)


class UsageError(Exception):
    pass


def _scenarios(args):
    if bool(args.scenario) == bool(args.preset):
        raise UsageError("give exactly one of --scenario or --preset")
    if args.preset:
        scs = preset(args.preset)
    else:
        with open(args.scenario, encoding="utf-8") as fh:
            head = fh.read(4096)
        if args.scenario.endswith(".json") and '"manifest_version"' in head:
            with open(args.scenario, encoding="utf-8") as fh:
                scs = [scenario_from_dict(json.load(fh)["scenario"], strict=args.strict)]
        else:
            scs = [load_scenario(args.scenario, strict=args.strict)]
    out = []
    for sc in scs:
        kw = {}
        if args.seeds is not None:
            kw["seeds"] = parse_seeds(int(args.seeds) if args.seeds.isdigit() else args.seeds)
        if args.horizon is not None:
            kw["horizon"] = args.horizon
        if args.out is not None:
            kw["out"] = args.out
        if getattr(args, "lam", None):
            kw["lams"] = tuple(args.lam)
        if getattr(args, "episodes", None) is not None:
            kw["episodes"] = args.episodes
        out.append(sc.replace(**kw) if kw else sc)
    return out


def _restrict(sc, allowed, requested, default):
    if requested:
        bad = [p for p in requested if p not in allowed]
        if bad:
            raise UsageError(f"--policy {bad} not available here; choose from {list(allowed)}")
        return sc.replace(policies=tuple(requested))
    pols = tuple(p for p in sc.policies if p in allowed)
    return sc.replace(policies=pols or default)


def _print_rows(rows):
    for r in rows:
        if r.seed == "mean":
            bound = "" if r.bound is None else f"  bound={r.bound:.4f}"
            print(f"{r.name:12s} {r.policy:14s} lam={r.lam:<5g} J={r.J:.4f}+-{r.ci_J:.4f}  C={r.C:.4f}{bound}"
                  f"  [{r.status}]")


def _batch(args, allowed, default):
    status = EXIT_OK
    for sc in _scenarios(args):
        sc = _restrict(sc, allowed, args.policy, default)
        rows = run_scenario(sc, jobs=args.jobs)
        _print_rows(rows)
        if any(not r.ok for r in rows):
            status = EXIT_PARTIAL
    return status


def cmd_simulate(args):
    return _batch(args, PLANNERS, ("whittle",))


def cmd_learn(args):
    return _batch(args, LEARNERS, ("ucrl2-whittle",))


def cmd_repro(args):
    args.preset, args.scenario = args.figure, None
    status = EXIT_OK
    for sc in _scenarios(args):
        rows = run_scenario(sc, jobs=args.jobs)
        _print_rows(rows)
        if any(not r.ok for r in rows):
            status = EXIT_PARTIAL
    return status


def cmd_solve(args):
    for sc in _scenarios(args):
        for r in solve_scenario(sc):
            bound = "" if r["bound"] is None else f"  bound={r['bound']:.4f}"
            print(f"{r['name']:12s} lam={r['lam']:<5g} eta={r['eta']:.6g} J={r['J']:.6f} C={r['C']:.6f} "
                  f"({r['construction']}, {r['states']} states){bound}")
    return EXIT_OK


def cmd_bound(args):
    rows = []
    for sc in _scenarios(args):
        proto = sc.build_protocol()
        for lam in sc.lams:
            lb = lower_bound(sc.config(lam), proto)
            rows.append({"name": sc.name, "M": sc.M, "lam": lam, "bound": lb})
            print(f"{sc.name:12s} lam={lam:<5g} bound={'n/a (general HARQ)' if lb is None else f'{lb:.6f}'}")
    if args.out:
        write_csv_atomic(os.path.join(args.out, "bounds.csv"), rows, ("name", "M", "lam", "bound"))
    return EXIT_OK


def parse_user(text):
    """'p=0.5 w=1' (ARQ) or 'n_s=5 k_s=3 p_s=0.2 w=1' / 'n_s=5 k_s=3 p_fr=0.1' (FR)."""
    kv = {}
    for tok in text.replace(",", " ").split():
        if "=" not in tok:
            raise UsageError(f"--user: expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        kv[k.strip()] = v.strip()
    try:
        w = float(kv.pop("w", 1.0))
        if "n_s" in kv:
            n, k = int(kv.pop("n_s")), int(kv.pop("k_s"))
            arm = (FrArmParams.from_symbol_error(w, n, k, float(kv.pop("p_s"))) if "p_s" in kv
                   else FrArmParams(w, n, k, float(kv.pop("p_fr"))))
        else:
            arm = ArqArmParams(w, float(kv.pop("p")))
    except KeyError as exc:
        raise UsageError(f"--user: missing key {exc}") from None
    except ValueError as exc:
        raise UsageError(f"--user: {exc}") from None
    if kv:
        raise UsageError(f"--user: unknown key(s) {sorted(kv)}")
    return arm


def parse_range(text):
    """'1..5' -> 1..5 inclusive; '3' -> [3]; '1,4,9' -> as given."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--delta: cannot parse {text!r}") from None


def cmd_index(args):
    deltas = parse_range(args.delta)
    arms = [parse_user(u) for u in args.user]
    rows = []
    for j, arm in enumerate(arms, 1):
        fn = whittle_index_fr if isinstance(arm, FrArmParams) else whittle_index_arq
        for d in deltas:
            val = float(fn(d, arm))
            rows.append({"user": j, "delta": d, "index": val})
            print(f"user {j}  delta={d:<4d} index={val:.6f}")
    if args.out:
        write_csv_atomic(os.path.join(args.out, "index.csv"), rows, ("user", "delta", "index"))
    return EXIT_OK


def _common(p, lam=True):
    src = p.add_argument_group("scenario")
    src.add_argument("--scenario", help="YAML scenario file (or a run manifest)")
    src.add_argument("--preset", help="built-in scenario: fig3 .. fig8")
    p.add_argument("--seeds", help="seed count n, range a:b or list a,b,c")
    p.add_argument("--horizon", type=int, help="slots per run")
    p.add_argument("--out", help="output directory")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                      help="reject unknown scenario keys (default)")
    mode.add_argument("--lenient", dest="strict", action="store_false", help="warn on unknown scenario keys")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    if lam:
        p.add_argument("--lam", type=float, action="append", help="transmission budget (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="aoisched", description="AoI scheduling: planning, learning, bounds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="constrained optimum by RVI and multiplier search")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="simulate planning and baseline policies")
    _common(p)
    p.add_argument("--policy", action="append", help=f"one of {', '.join(PLANNERS)} (repeatable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("learn", help="run the learning agents")
    _common(p)
    p.add_argument("--policy", action="append", help=f"one of {', '.join(LEARNERS)} (repeatable)")
    p.add_argument("--episodes", type=int, help="DQN training episodes")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("bound", help="closed-form lower bound")
    _common(p)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("index", help="Whittle index tables")
    p.add_argument("--user", action="append", required=True, help="arm, e.g. 'p=0.5 w=1' or 'n_s=5 k_s=3 p_s=0.2'")
    p.add_argument("--delta", default="1..10", help="ages, e.g. 1..5")
    p.add_argument("--out", help="output directory for index.csv")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("repro", help="run a figure preset")
    p.add_argument("figure", help="fig3 .. fig8")
    _common(p)
    p.add_argument("--episodes", type=int, help="DQN training episodes")
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ScenarioError) as exc:
        print(f"aoisched: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StateSpaceTooLarge as exc:
        print(f"aoisched: state space too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except NUMERIC_ERRORS as exc:
        print(f"aoisched: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"aoisched: file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"aoisched: internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
