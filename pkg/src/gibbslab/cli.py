"""``gibbslab`` command-line front end.

Every subcommand reads a family JSON file, runs one computation and writes
CSV or JSON.  Exit status: 0 success, 1 domain error (JSON description on
stderr), 2 usage or family-schema error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .canonical import canonical_joint, canonical_marginal, efron_check, proposition1_check
from .chains import (
    CoupledBDSpec,
    bd_stationary,
    coupled_bd_simulate,
    coupled_bd_stationary,
    coupled_zr_simulate,
    zr_spec_from_family,
)
from .errors import GibbsLabError, SchemaError
from .gcp import MODES, gcp_experiment, sandwich_check
from .pmf import Family, Pmf, check_log_concave, load_family, tilt
from .sumstats import condition_check, sum_law, sum_law_of

log = logging.getLogger("gibbslab")


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json_text(obj: Any) -> str:
    """Serialize with insertion-ordered keys and 17-significant-digit floats."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json_text(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json_text(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv_cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def to_csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def emit(report: Any, fmt: str, path: str | None) -> None:
    """Write ``report`` as ``json`` (any mapping) or ``csv`` (``(header, rows)``)."""
    if fmt == "json":
        text = to_json_text(report) + "\n"
    elif fmt == "csv":
        header, rows = report
        text = to_csv_text(header, rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _parse_interval(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


def _family(args) -> Family:
    return load_family(args.family)


def cmd_check_logconcave(args) -> None:
    fam = _family(args)
    members = []
    for i, m in enumerate(fam.members):
        rep = check_log_concave(m)
        members.append({
            "index": i,
            "label": m.label,
            "is_log_concave": rep.is_log_concave,
            "has_internal_zero": rep.has_internal_zero,
            "first_violation": None if rep.first_violation is None else list(rep.first_violation),
        })
    emit({"all_log_concave": all(m["is_log_concave"] for m in members), "members": members}, "json", args.out)


def cmd_tilt(args) -> None:
    fam = _family(args)
    p = tilt(fam.member(args.index), args.lam)
    emit((["x", "prob"], [(x, float(v)) for x, v in enumerate(p.probs)]), "csv", args.out)


def cmd_sumdist(args) -> None:
    s = sum_law(_family(args), args.lam, args.n)
    emit((["k", "prob"], [(k, float(v)) for k, v in enumerate(s.probs)]), "csv", args.out)


def cmd_cond_check(args) -> None:
    trend = condition_check(_family(args), args.lambda_star, args.eps, args.n_list, args.threshold)
    emit(trend.to_dict(), "json", args.out)


def cmd_canonical(args) -> None:
    fam = _family(args)
    if args.index is not None:
        p = canonical_marginal(fam, args.index, args.n, args.k)
        emit((["x", "prob"], [(x, float(v)) for x, v in enumerate(p.probs)]), "csv", args.out)
        return
    table = canonical_joint(fam, args.n, args.k)
    probs = table.probs
    rows = [(*c, float(probs[c])) for c in table.support()]
    emit(([f"x_{i + 1}" for i in range(args.n)] + ["prob"], rows), "csv", args.out)


def cmd_efron(args) -> None:
    emit(efron_check(_family(args), args.n, args.k_max).to_dict(), "json", args.out)


def cmd_dominance(args) -> None:
    res = proposition1_check(_family(args), args.lam, args.lam2, args.n, args.r, args.mode)
    out = {"mode": args.mode, "lambda": args.lam, "lambda2": args.lam2, "n": args.n, "r": args.r}
    out.update(res.to_dict())
    emit(out, "json", args.out)


def cmd_couple_bd(args) -> None:
    fam = _family(args)
    lo, hi = args.interval
    base = sum_law_of(fam.take(args.n))
    base_pmf = Pmf(base.log_probs, label=f"sum law of {args.n} members")
    spec = CoupledBDSpec(base_pmf, args.lam, args.lam2, lo, hi)
    if args.simulate:
        trace, violations = coupled_bd_simulate(spec, lo, lo, args.t_end, args.seed, args.event_cap)
        if args.out:
            emit((["time", "x_1", "xp_1"], [(t, k, kp) for t, (k, kp) in zip(trace.times, trace.states)]), "csv", args.out)
        emit({
            "seed": args.seed,
            "events": trace.n_events,
            "capped": trace.capped,
            "order_violations": violations,
        }, "json", None)
        return
    p = coupled_bd_stationary(spec)
    first = bd_stationary(spec.first).probs[lo: hi + 1]
    second = bd_stationary(spec.second).probs[lo: hi + 1]
    emit({
        "interval": [lo, hi],
        "lambda": args.lam,
        "lambda2": args.lam2,
        "mass_unordered": float(np.tril(p, -1).sum()),
        "first_marginal_error": float(np.abs(p.sum(axis=1) - first).max()),
        "second_marginal_error": float(np.abs(p.sum(axis=0) - second).max()),
        "stationary": [[float(v) for v in row] for row in p],
    }, "json", args.out)


def cmd_couple_zr(args) -> None:
    fam = _family(args)
    spec = zr_spec_from_family(fam, args.n)
    x0 = (args.k,) + (0,) * (args.n - 1)
    x0p = (args.k2,) + (0,) * (args.n - 1)
    trace, violations = coupled_zr_simulate(
        spec, x0, x0p, args.t_end, args.seed, args.event_cap, allow_nonmonotone=args.allow_nonmonotone
    )
    if args.out:
        header = ["time"] + [f"x_{i + 1}" for i in range(args.n)] + [f"xp_{i + 1}" for i in range(args.n)]
        emit((header, [(t, *x, *xp) for t, (x, xp) in zip(trace.times, trace.states)]), "csv", args.out)
    emit({
        "seed": args.seed,
        "events": trace.n_events,
        "capped": trace.capped,
        "order_violations": violations,
    }, "json", None)


def cmd_gcp(args) -> None:
    table = gcp_experiment(
        _family(args),
        args.lambda_star,
        args.ell,
        args.n_list,
        args.mode,
        eps=args.eps,
        override=args.override,
        condition_tilted=args.condition_tilted,
    )
    rows = [(r.n, r.r_star, r.event_mass, r.tv) for r in table.rows]
    emit((["n", "r_star", "event_mass", "tv"], rows), "csv", args.out)
    if args.out:
        sidecar = args.out[:-4] + ".json" if args.out.endswith(".csv") else args.out + ".json"
        emit(table.metadata(), "json", sidecar)


def cmd_sandwich(args) -> None:
    rep = sandwich_check(
        _family(args), args.lambda_star, args.lambda_lo, args.lambda_hi, args.ell, args.n, args.mode, args.r
    )
    emit(rep.to_dict(), "json", args.out)


STOCHASTIC = {"couple-zr"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--family", required=True, help="family specification JSON file")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=func)
        return p

    add("check-logconcave", cmd_check_logconcave, "log-concavity report per member")

    p = add("tilt", cmd_tilt, "tilted law of one member")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--index", type=int, default=0)

    p = add("sumdist", cmd_sumdist, "exact law of the tilted partial sum")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("-n", type=int, required=True)

    p = add("cond-check", cmd_cond_check, "gap trajectories of the cumulant condition")
    p.add_argument("--lambda-star", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--n-list", type=_parse_int_list, required=True)
    p.add_argument("--threshold", type=float, default=10.0)

    p = add("canonical", cmd_canonical, "canonical joint law or one of its marginals")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--index", type=int, default=None, help="0-based coordinate for a marginal")

    p = add("efron", cmd_efron, "check consecutive canonical dominances")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--k-max", type=int, required=True)

    p = add("dominance", cmd_dominance, "compare two conditioned tilted laws")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--lambda2", dest="lam2", type=float, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--mode", choices=("both-above", "both-below", "below-above"), required=True)

    p = add("couple-bd", cmd_couple_bd, "coupled birth-death chains")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--lambda2", dest="lam2", type=float, required=True)
    p.add_argument("--interval", type=_parse_interval, required=True, help="LO:HI")
    p.add_argument("-n", type=int, default=1, help="base law is the sum law of the first n members")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--solve", action="store_true")
    how.add_argument("--simulate", action="store_true")
    p.add_argument("--t-end", type=float, default=1e4)
    p.add_argument("--event-cap", type=int, default=10_000_000)

    p = add("couple-zr", cmd_couple_zr, "basic coupling of two zero-range systems")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--k2", type=int, required=True)
    p.add_argument("--t-end", type=float, default=1e4)
    p.add_argument("--event-cap", type=int, default=10_000_000)
    p.add_argument("--allow-nonmonotone", action="store_true")

    p = add("gcp", cmd_gcp, "conditioned-law convergence table")
    p.add_argument("--lambda-star", type=float, required=True)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--n-list", type=_parse_int_list, required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--override", action="store_true", help="skip the lam*/mode hypothesis check")
    p.add_argument("--condition-tilted", action="store_true")

    p = add("sandwich", cmd_sandwich, "bracket dominations around the conditioned law")
    p.add_argument("--lambda-star", type=float, required=True)
    p.add_argument("--lambda-lo", type=float, required=True)
    p.add_argument("--lambda-hi", type=float, required=True)
    p.add_argument("--ell", type=int, default=1)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--mode", choices=("above", "below"), required=True)
    p.add_argument("--r", type=float, default=None)
    return parser


def parse_and_dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    stochastic = args.command in STOCHASTIC or (args.command == "couple-bd" and args.simulate)
    if stochastic and args.seed is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"gibbslab {args.command}: --seed is required for stochastic commands\n")
        return 2
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.debug("running %s", args.command)
    try:
        args.func(args)
    except SchemaError as exc:
        sys.stderr.write(to_json_text(exc.details()) + "\n")
        return 2
    except GibbsLabError as exc:
        sys.stderr.write(to_json_text(exc.details()) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(to_json_text({"error": "IOError", "message": str(exc)}) + "\n")
        return 1
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    return parse_and_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
