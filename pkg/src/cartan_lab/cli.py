"""Command line: ``cartan-lab verify | classify-curvature | list-builtins | eval``.

Exit codes: 0 ok, 1 verdicts differ from expectations (builtins) or an
internal-consistency check failed (user metrics), 2 usage or config error,
3 metric parse error, 4 sampling budget exhausted.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .builtins import list_builtins
from .dsl import MetricSyntaxError, PhasePoint
from .dsl.parser import UnknownIdentifierError, VariableIndexError
from .foliation import InsufficientPoints, IndefiniteFit, classify_constant_curvature
from .suite import (CHECK_IDS, AllPointsRejected, ConfigError, RunConfig, eval_expr, ordered_map,
                    resolve, run_suite, sample_points, thread_count)

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_PARSE, EXIT_SAMPLING = 0, 1, 2, 3, 4
PARSE_ERRORS = (MetricSyntaxError, UnknownIdentifierError, VariableIndexError)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _box(text: str) -> list[list[float]]:
    """"lo:hi,lo:hi" -> [[lo, hi], [lo, hi]]."""
    out = []
    for part in text.split(","):
        lo, hi = part.split(":")
        out.append([float(lo), float(hi)])
    return out


def parse_at(text: str) -> PhasePoint:
    """"x=0,2;p=1,1" -> PhasePoint."""
    parts = {}
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        key, _, vals = chunk.partition("=")
        parts[key.strip()] = [float(v) for v in vals.split(",") if v.strip()]
    if set(parts) != {"x", "p"}:
        raise ValueError('expected "x=...;p=..."')
    return PhasePoint(tuple(parts["x"]), tuple(parts["p"]))


def _metric_args(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--metric", metavar="FILE", help="file holding the DSL text of K or K^2")
    src.add_argument("--expr", metavar="TEXT", help="inline DSL text")
    src.add_argument("--builtin", metavar="NAME")
    p.add_argument("--dim", type=int)
    p.add_argument("--kind", choices=["K", "K2"], help="the text is K or K^2 (default K2)")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--box", metavar="LO:HI,...", help="coordinate box, one interval per coordinate")
    p.add_argument("--threads", type=int)
    p.add_argument("--config", metavar="FILE", help="JSON config mirroring RunConfig; flags override it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cartan-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the verification suite")
    _metric_args(v)
    v.add_argument("--shells", metavar="LIST", help="K-levels for the level-set checks, e.g. 1,0.5")
    v.add_argument("--checks", metavar="LIST", help=f"subset of: {', '.join(CHECK_IDS)}")
    v.add_argument("--out", metavar="PATH", help="report file (default: stdout)")
    v.add_argument("--format", choices=["json", "csv"])

    c = sub.add_parser("classify-curvature", help="fit R_ij = c K^2 h_ij")
    _metric_args(c)
    c.add_argument("--shell", type=float, default=None)

    sub.add_parser("list-builtins", help="list built-in metrics")

    e = sub.add_parser("eval", help="evaluate an expression at a point")
    e.add_argument("--expr", required=True)
    e.add_argument("--dim", type=int, required=True)
    e.add_argument("--at", required=True, help='"x=...;p=..."')
    return ap


def config_from_args(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        d = json.loads(Path(args.config).read_text())
    if args.metric:
        d["metric"] = Path(args.metric).read_text().strip()
        d.pop("builtin", None)
    if args.expr:
        d["metric"] = args.expr
        d.pop("builtin", None)
    if args.builtin:
        d["builtin"] = args.builtin
        d.pop("metric", None)
    for flag, key in (("dim", "dim"), ("seed", "seed"), ("points", "num_points"), ("threads", "threads")):
        if getattr(args, flag, None) is not None:
            d[key] = getattr(args, flag)
    if args.kind:
        d["kind"] = "K" if args.kind == "K" else "K-squared"
    if args.box:
        d["coordinate_box"] = _box(args.box)
    if getattr(args, "shells", None):
        d["shells"] = _floats(args.shells)
    if getattr(args, "checks", None):
        d["checks"] = [c.strip() for c in args.checks.split(",") if c.strip()]
    if getattr(args, "out", None):
        d["output"] = args.out
    if getattr(args, "format", None):
        d["format"] = args.format
    return RunConfig.from_dict(d).validate()


def cmd_verify(args) -> int:
    cfg = config_from_args(args)
    report = run_suite(cfg)
    text = report.render(cfg.format)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    s = report.summary
    print(f"summary: {s['verdict']} ({s['mode']}); mismatches: "
          f"{', '.join(m['check'] for m in s['mismatches']) or 'none'}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_MISMATCH


def cmd_classify(args) -> int:
    cfg = config_from_args(args)
    rs = resolve(cfg)
    shell = args.shell if args.shell is not None else rs.shells[0]
    count = max(cfg.num_points, 25)
    pts, _ = sample_points(rs.metric, rs.box, cfg.seed, count)
    fit = classify_constant_curvature(rs.metric, shell, pts, ordered_map(thread_count(cfg.threads)),
                                      rs.tolerances)
    out = fit.to_dict()
    out.pop("per_point")
    sys.stdout.write(json.dumps(out, sort_keys=True, indent=2) + "\n")
    if rs.builtin is not None:
        return EXIT_OK if abs(fit.c_hat - rs.builtin.expected_c_hat) <= rs.builtin.c_hat_tol else EXIT_MISMATCH
    return EXIT_OK


def cmd_list(args) -> int:
    rows = list_builtins()
    w = max(len(r["name"]) for r in rows)
    tw = max(len(r["text"]) for r in rows)
    print(f"{'name':<{w}}  dim  kind       {'text':<{tw}}  expected classifier")
    for r in rows:
        print(f"{r['name']:<{w}}  {r['dim']:<3}  {r['kind']:<9}  {r['text']:<{tw}}  {r['expected_classifier']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    print(repr(eval_expr(args.expr, args.dim, parse_at(args.at))))
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "classify-curvature": cmd_classify, "list-builtins": cmd_list,
            "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except PARSE_ERRORS as e:
        print(f"metric parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except AllPointsRejected as e:
        print(f"sampling failed: {e}", file=sys.stderr)
        return EXIT_SAMPLING
    except (ConfigError, KeyError, ValueError, OSError, InsufficientPoints, IndefiniteFit) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
