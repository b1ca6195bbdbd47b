"""``folia`` command line.

Exit codes: 0 success, 2 mathematical refutation (non-involutive module,
failed probe), 1 usage or IO error. Every subcommand prints a short summary
and can write a JSON report (``--json PATH``) carrying a ``schema`` field.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsl
from .diffdiff import FamilySpec, NumericalInconsistency, differentiate_family, group_law_probe
from .flows import FiniteEscape, StepLimit, family_period, one_parameter_group, path_holonomy_exp
from .geometry import SingularSubalgebroid, check_involutive
from .graph import LeafPath, graph_equal_sample, openness_counterexample, same_leaf, subspace_diffeology_differentiation
from .holonomy import SubalgebraError, integrate_lie_subalgebra
from .pointwise import PreconditionError, fiber_report, projectivity_scan
from .polycore import DegreeBoundExceeded

SCHEMA_VERSION = 1
MODELS = Path(__file__).parent / "models"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# --- argument helpers --------------------------------------------------------------


def parse_point(text: str) -> tuple[Fraction, ...]:
    """``p/q`` components separated by commas; empty string is the 0-dimensional point."""
    if not text.strip():
        return ()
    try:
        return tuple(Fraction(c.strip()) for c in text.split(","))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad point {text!r}; use comma-separated p/q components") from None


def parse_floats(text: str) -> list[float]:
    try:
        return [float(Fraction(c.strip())) for c in text.split(",") if c.strip()]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad number list {text!r}") from None


def parse_axis(text: str) -> list[Fraction]:
    """``lo:hi:n`` (n evenly spaced rationals) or a comma list of rationals."""
    if ":" in text:
        try:
            lo, hi, n = text.split(":")
            lo, hi, n = Fraction(lo), Fraction(hi), int(n)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad grid axis {text!r}; use lo:hi:n") from None
        if n < 1:
            raise UsageError("grid needs at least one point")
        return [lo] if n == 1 else [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    vals = list(parse_point(text))
    if not vals:
        raise UsageError("empty grid")
    return vals


def grid_points(axis: list[Fraction], dim: int) -> list[tuple[Fraction, ...]]:
    pts: list[tuple[Fraction, ...]] = [()]
    for _ in range(dim):
        pts = [p + (v,) for p in pts for v in axis]
    return pts


def load_module(path: str) -> SingularSubalgebroid:
    p = Path(path)
    if not p.exists() and (MODELS / path).exists():
        p = MODELS / path
    if not p.exists() and (MODELS / f"{path}.sfo").exists():
        p = MODELS / f"{path}.sfo"
    return dsl.load(p)


def workers() -> int | None:
    val = os.environ.get("FOLIA_THREADS")
    if not val:
        return None
    try:
        return max(1, int(val))
    except ValueError:
        raise UsageError("FOLIA_THREADS must be an integer") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def emit(args, command: str, payload: dict) -> None:
    payload = {"schema": f"folia.{command}/{SCHEMA_VERSION}", **payload}
    if args.json:
        text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"
        Path(args.json).write_text(text, encoding="utf-8")


def _pt(p) -> list[str]:
    return [str(v) for v in p]


# --- subcommands -------------------------------------------------------------------


def cmd_check(args) -> int:
    B = load_module(args.file)
    res = check_involutive(B)
    out = {"module": B.name, "involutive": res.verified}
    if not res.verified:
        i, j = res.pair
        out["witness"] = {"pair": [i, j], "bracket": dsl.section_to_str(res.bracket, B.ambient)}
        print(f"not involutive: [g{i + 1}, g{j + 1}] = {out['witness']['bracket']} is not in the module")
    else:
        print("involutive")
    emit(args, "check", out)
    return 0 if res.verified else 2


def cmd_dims(args) -> int:
    B = load_module(args.file)
    pts = [parse_point(p) for p in args.point or []]
    if args.grid:
        pts += grid_points(parse_axis(args.grid), B.nvars)
    if not pts:
        pts = [tuple(Fraction(0) for _ in range(B.nvars))]
    reports = []
    for p in pts:
        if len(p) != B.nvars:
            raise UsageError(f"point {_pt(p)} has dimension {len(p)}, module lives in dimension {B.nvars}")
        r = fiber_report(B, p, structure=not args.no_structure)
        reports.append(r.to_json())
        print(f"x={','.join(_pt(p)) or '()'}: dim_fiber={r.dim_fiber} dim_ev={r.dim_ev} dim_isotropy={r.dim_isotropy}")
    out = {"module": B.name, "reports": reports}
    if len(reports) == 1:
        out.update({k: reports[0][k] for k in ("dim_fiber", "dim_ev", "dim_isotropy")})
    emit(args, "dims", out)
    return 0


def cmd_proj(args) -> int:
    B = load_module(args.file)
    pts = [parse_point(p) for p in args.point or []]
    pts += grid_points(parse_axis(args.grid), B.nvars) if args.grid or not pts else []
    rep = projectivity_scan(B, pts, workers())
    print(f"{rep.verdict}: {rep.smoothness_verdict}")
    emit(args, "proj", {"module": B.name, **rep.to_json()})
    return 0


def cmd_leaf(args) -> int:
    B = load_module(args.file)
    p, q = parse_floats(args.src), parse_floats(args.dst)
    v = same_leaf(B, p, q, args.budget)
    print(f"same leaf: {v.answer} after {v.expansions} expansions")
    if v.path is not None and args.path_out:
        Path(args.path_out).write_text(json.dumps(v.path.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    emit(args, "leaf", {"module": B.name, "from": p, "to": q, **v.to_json()})
    return 0


def cmd_graph_eq(args) -> int:
    B1, B2 = load_module(args.first), load_module(args.second)
    grid = [[float(c) for c in parse_point(chunk)] for chunk in args.grid.split(";")]
    rep = graph_equal_sample(B1, B2, grid, args.budget, workers())
    print(f"agreements={rep.agreements} disagreements={len(rep.disagreements)} unknown={rep.unknowns}")
    emit(args, "graph-eq", {"first": B1.name, "second": B2.name, **rep.to_json()})
    return 0


def cmd_exp(args) -> int:
    B = load_module(args.file)
    lam = parse_floats(args.lam)
    x = parse_floats(args.point) if args.point else []
    e = path_holonomy_exp(B, lam, x)
    print(f"source={np.round(e.source(), 12).tolist()} target={np.round(e.target(), 12).tolist()}")
    emit(args, "exp", {"module": B.name, "lam": lam, "x": x, "element": e.to_json()})
    return 0


def cmd_family(args) -> int:
    B = load_module(args.file)
    alpha = dsl.parse_expr(args.section, B.ambient)
    fam = one_parameter_group(B, alpha, interval=(-args.interval, args.interval))
    samples = [parse_floats(s) for s in args.sample] if args.sample else []
    rep = group_law_probe(fam, samples, args.samples, args.tol, args.seed)
    period = None
    if args.period_at is not None:
        period = family_period(fam, parse_floats(args.period_at))
    print(f"group law: {'pass' if rep.passed else 'FAIL'} (max deviation {rep.max_deviation:.3g})")
    emit(args, "family", {"module": B.name, "section": dsl.section_to_str(alpha, B.ambient), "period": period, **rep.to_json()})
    return 0 if rep.passed else 2


def _float_matrix(text: str) -> list[list[float]]:
    rows = [r.split() for r in text.split(";")]
    try:
        return [[float(Fraction(c)) for c in r] for r in rows]
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad matrix {text!r}") from None


def _exact_or_float(text: str):
    rows = [r.split() for r in text.split(";")]
    try:
        return [[Fraction(c) for c in r] for r in rows]
    except ValueError:
        return _float_matrix(text)


def cmd_integrate(args) -> int:
    if args.file:
        B = load_module(args.file)
        if B.ambient.kind != "liealgebra":
            raise UsageError("integrate needs a liealgebra module or --matrix")
        mats = B.ambient.matrices
        d = len(mats[0])
        basis = [
            [[sum((c.evaluate(()) * m[r][s] for c, m in zip(g, mats)), Fraction(0)) for s in range(d)] for r in range(d)]
            for g in B.generators
        ]
    elif args.matrix:
        basis = [_exact_or_float(m) for m in args.matrix]
    else:
        raise UsageError("give a module file or at least one --matrix")
    try:
        rep = integrate_lie_subalgebra(basis, args.lam_max, args.step, seed=args.seed)
    except SubalgebraError as exc:
        print(f"not a subalgebra: {exc}")
        emit(args, "integrate", {"subalgebra": False, "pair": list(exc.pair or ())})
        return 2
    print(f"kernel={rep.kernel} injectivity_radius={rep.injectivity_radius:.12g} {rep.closed}")
    emit(args, "integrate", {"subalgebra": True, **rep.to_json()})
    return 0


def cmd_differentiate(args) -> int:
    B = load_module(args.file)
    names = [*B.ambient.names, "l"]
    if len(args.family) != B.ngens:
        raise UsageError(f"need one --family polynomial per generator ({B.ngens})")
    coeffs = [dsl.parse_poly(f, names) for f in args.family]
    try:
        spec = FamilySpec(B, coeffs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    samples = [[float(c) for c in p] for p in grid_points(parse_axis(args.grid), B.nvars)] if args.grid else []
    try:
        res = differentiate_family(spec, samples, tol=args.tol)
    except NumericalInconsistency as exc:
        print(f"numerical inconsistency: {exc}")
        emit(args, "differentiate", {"module": B.name, "consistent": False, "curve": exc.curve})
        return 2
    print(f"derivative: {dsl.section_to_str(res.section, B.ambient)} member={res.member} max_dev={res.max_deviation:.3g}")
    emit(args, "differentiate", {"module": B.name, "consistent": True, **res.to_json(B.ambient)})
    return 0


def cmd_counterexample(args) -> int:
    if args.which == "openness":
        arc = parse_floats(args.arc) if args.arc else [-math.pi / 4, math.pi / 4]
        if len(arc) != 2:
            raise UsageError("--arc needs lo,hi")
        rep = openness_counterexample(tuple(arc))
        print(f"saturation identity: {rep.saturation_ok}; witnesses pass: {rep.passed}")
        emit(args, "counterexample", {"which": "openness", **rep.to_json()})
        return 0 if rep.passed or rep.degenerate else 2
    B = load_module(args.file or "x2dx")
    names = [*B.ambient.names, "l"]
    fams = [[dsl.parse_poly(c, names) for c in f.split(",")] for f in (args.family or ["(1+l)*x"])]
    samples = [parse_floats(s) for s in args.sample] if args.sample else [[1.0], [-1.0], [0.0]]
    try:
        res = subspace_diffeology_differentiation(B, fams, samples)
    except PreconditionError as exc:
        raise UsageError(str(exc)) from None
    for r in res:
        print(f"{r.family}: derivative {dsl.section_to_str(r.derivative, B.ambient)} member={r.member}")
    emit(args, "counterexample", {"which": "subspace", "module": B.name, "results": [r.to_json(B.ambient.names) for r in res]})
    return 0


def cmd_render(args) -> int:
    from . import render

    B = load_module(args.file)
    if args.kind == "strata":
        axis = parse_axis(args.grid or "-1:1:21")
        svg = render.strata_svg(B, axis)
    elif args.kind == "leaf":
        if not args.path:
            raise UsageError("leaf rendering needs --path files")
        paths = [LeafPath.from_json(json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.path]
        svg = render.leaf_svg(B, paths)
    else:
        starts = [parse_floats(s) for s in args.sample] if args.sample else [[0.5] * B.nvars, [1.0] * B.nvars]
        svg = render.traces_svg(B, starts)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out}")
    emit(args, "render", {"module": B.name, "kind": args.kind, "out": str(args.out)})
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="folia", description="Singular subalgebroids: exact invariants, flows, holonomy charts.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", metavar="PATH", help="write the JSON report here")
    common.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", parents=[common], help="involutivity")
    p.add_argument("file")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("dims", parents=[common], help="fiber, evaluation and isotropy dimensions")
    p.add_argument("file")
    p.add_argument("--point", action="append", help="p/q components, comma separated")
    p.add_argument("--grid", help="lo:hi:n per axis")
    p.add_argument("--no-structure", action="store_true", help="skip isotropy structure constants")
    p.set_defaults(fn=cmd_dims)

    p = sub.add_parser("proj", parents=[common], help="sampled projectivity")
    p.add_argument("file")
    p.add_argument("--point", action="append")
    p.add_argument("--grid", help="lo:hi:n per axis (default -1:1:5)")
    p.set_defaults(fn=cmd_proj)

    p = sub.add_parser("leaf", parents=[common], help="same-leaf search")
    p.add_argument("file")
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--to", dest="dst", required=True)
    p.add_argument("--budget", type=int, default=100_000)
    p.add_argument("--path-out", help="write the replayable path here")
    p.set_defaults(fn=cmd_leaf)

    p = sub.add_parser("graph-eq", parents=[common], help="compare same-leaf relations on a grid")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--grid", required=True, help="points separated by ';', components by ','")
    p.add_argument("--budget", type=int, default=300)
    p.set_defaults(fn=cmd_graph_eq)

    p = sub.add_parser("exp", parents=[common], help="path-holonomy exponential")
    p.add_argument("file")
    p.add_argument("--lam", required=True)
    p.add_argument("--point", default="")
    p.set_defaults(fn=cmd_exp)

    p = sub.add_parser("family", parents=[common], help="one-parameter group and group-law probe")
    p.add_argument("file")
    p.add_argument("--section", required=True)
    p.add_argument("--interval", type=_positive, default=1.0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--sample", action="append", help="base point; repeatable")
    p.add_argument("--tol", type=_positive, default=1e-6)
    p.add_argument("--period-at", help="also search the first return at this point")
    p.set_defaults(fn=cmd_family)

    p = sub.add_parser("integrate", parents=[common], help="integrate a matrix Lie subalgebra")
    p.add_argument("file", nargs="?")
    p.add_argument("--matrix", action="append", help="row-major 'a b; c d' (decimals allowed)")
    p.add_argument("--lam-max", type=_positive, default=20.0)
    p.add_argument("--step", type=_positive, default=1e-3)
    p.set_defaults(fn=cmd_integrate)

    p = sub.add_parser("differentiate", parents=[common], help="differentiate a bisection family")
    p.add_argument("file")
    p.add_argument("--family", action="append", required=True, help="coefficient polynomial in the variables and l")
    p.add_argument("--grid", help="sample axis lo:hi:n")
    p.add_argument("--tol", type=_positive, default=1e-5)
    p.set_defaults(fn=cmd_differentiate)

    p = sub.add_parser("counterexample", parents=[common], help="graph counterexamples")
    p.add_argument("which", choices=["openness", "subspace"])
    p.add_argument("file", nargs="?")
    p.add_argument("--arc", help="lo,hi of the open arc (openness)")
    p.add_argument("--family", action="append", help="map components in the variables and l (subspace)")
    p.add_argument("--sample", action="append")
    p.set_defaults(fn=cmd_counterexample)

    p = sub.add_parser("render", parents=[common], help="SVG pictures")
    p.add_argument("file")
    p.add_argument("--kind", choices=["strata", "leaf", "traces"], default="strata")
    p.add_argument("--out", required=True)
    p.add_argument("--grid")
    p.add_argument("--path", action="append", help="LeafPath JSON file (leaf)")
    p.add_argument("--sample", action="append", help="start point (traces)")
    p.set_defaults(fn=cmd_render)
    return ap


_VALUE_OPTIONS = {"--grid", "--point", "--from", "--to", "--lam", "--arc", "--sample", "--period-at", "--section", "--family", "--matrix"}


def _glue_negative_values(argv: Sequence[str]) -> list[str]:
    """Let option values start with '-' (``--point -1,0``) by gluing them as ``--point=-1,0``."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_OPTIONS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            else:
                out.append(f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    argv = _glue_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"folia: error: {exc}", file=sys.stderr)
        return 1
    except dsl.DSLError as exc:
        print(f"folia: parse error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"folia: {exc}", file=sys.stderr)
        return 1
    except (DegreeBoundExceeded, FiniteEscape, StepLimit) as exc:
        print(f"folia: aborted: {exc}", file=sys.stderr)
        return 1
    except (PreconditionError, ValueError) as exc:
        print(f"folia: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
