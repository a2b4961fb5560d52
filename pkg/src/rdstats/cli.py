"""Command-line interface: ``rdstats <subcommand> SITES.csv --seed N ...``.

All outputs of a run are collected in memory and written together at the
end, so a run that fails on its input leaves nothing behind.

Exit codes: 0 success, 1 input or data error, 2 numerical problem (outputs
are still written, with warning flags, when there is something to write).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

from . import export
from .bootstrap_region import DEFAULT_RESAMPLES, bootstrap_cloud, fit_ellipse
from .codebook_search import SearchConfig, search
from .curve_analysis import (BifurcationReport, bifurcation_scan, bounds, compare_models,
                             detect_bifurcations, sweep)
from .dataset import load_sites, uniform_distribution, write_sites, year_before
from .diagnostics import classify, screen_outliers
from .errors import DataError, DegenerateCovariance, GeometryError, NumericalError
from .geodesy import GeoPoint, model_label, parse_model
from .synth import generate_sites

log = logging.getLogger("rdstats")

EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors, not the numerical exit code 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DATA, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers") from None
    if len(values) != n or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers")
    return values


def point_arg(text: str) -> GeoPoint:
    lat, lon = _floats(text, 2, "point")
    try:
        return GeoPoint(lat, lon)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def box_arg(text: str) -> tuple[float, float, float, float]:
    return _floats(text, 4, "box")


def model_arg(text: str):
    try:
        return parse_model(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def seed_arg(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return seed


def slopes_arg(text: str) -> list[float]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step == 0 or (stop - start) * step < 0:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + k * step, 10) for k in range(count)]
        else:
            values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse slopes {text!r}") from None
    if not values or any(not math.isfinite(v) or v > 0 for v in values):
        raise argparse.ArgumentTypeError("slopes must be finite and <= 0")
    return values


def _add_data_args(p: argparse.ArgumentParser):
    p.add_argument("sites", type=Path, help="site CSV")
    p.add_argument("--exclude", type=Path, help="file of site ids to drop, one per line")
    p.add_argument("--before", type=int, metavar="YEAR",
                   help="keep only dated sites with year_ce < YEAR")
    p.add_argument("--model", type=model_arg, default="rhumb",
                   help="great-circle, rhumb or bisector:LAT,LON:LAT,LON[:base]")
    p.add_argument("--seed", type=seed_arg, required=True)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--fix-point", type=point_arg, action="append", default=[],
                   metavar="LAT,LON", help="frozen reconstruction point (repeatable)")
    g = p.add_argument_group("search")
    defaults = SearchConfig()
    g.add_argument("--n-init", type=int, default=defaults.n_init)
    g.add_argument("--dirichlet-alpha", type=float, default=defaults.dirichlet_alpha)
    g.add_argument("--outer-tol", type=float, default=defaults.outer_tol)
    g.add_argument("--prune-weight", type=float, default=defaults.prune_weight)
    g.add_argument("--merge-distance", type=float, default=defaults.merge_distance)
    g.add_argument("--max-outer-iters", type=int, default=defaults.max_outer_iters)
    g.add_argument("--simplex-step", type=float, default=defaults.simplex_step)
    g.add_argument("--simplex-ftol", type=float, default=defaults.simplex_ftol)
    g.add_argument("--simplex-maxiter", type=int, default=defaults.simplex_maxiter)
    g.add_argument("--removal-check", action="store_true",
                   help="finish with a pass that drops points whose removal lowers F")


def _add_format(p: argparse.ArgumentParser, choices, default):
    p.add_argument("--format", choices=choices, default=default,
                   help="what to print on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdstats", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="solve one slope; solution, classification, outliers")
    _add_data_args(p)
    p.add_argument("--slope", type=float, required=True)
    p.add_argument("--support-threshold", type=float, default=0.90)
    p.add_argument("--max-support-count", type=int, default=2)
    _add_format(p, ["text", "json", "geojson", "csv"], "text")

    p = sub.add_parser("classify", help="soft classification table at one slope")
    _add_data_args(p)
    p.add_argument("--slope", type=float, required=True)
    p.add_argument("--support-threshold", type=float, default=0.90)
    p.add_argument("--max-support-count", type=int, default=2)
    _add_format(p, ["text", "csv", "json"], "text")

    p = sub.add_parser("curve", help="slope sweep with bounds and bifurcation report")
    _add_data_args(p)
    p.add_argument("--slopes", type=slopes_arg, required=True,
                   help="a,b,c or start:stop:step (use --slopes=... for negative values)")
    p.add_argument("--compare-model", type=model_arg,
                   help="also compare against this model and write verdict.json")
    p.add_argument("--geo-delta", type=float, default=1.0)
    p.add_argument("--weight-cap", type=float, default=0.01)
    _add_format(p, ["text", "csv", "json"], "text")

    p = sub.add_parser("compare-models", help="which bearing model compresses better")
    _add_data_args(p)
    p.add_argument("--model-b", type=model_arg, required=True)
    p.add_argument("--slopes", type=slopes_arg, required=True)
    _add_format(p, ["text", "json"], "text")

    p = sub.add_parser("bifurcation-scan", help="flag noise-splitting slopes")
    _add_data_args(p)
    p.add_argument("--slopes", type=slopes_arg, required=True)
    p.add_argument("--geo-delta", type=float, default=1.0)
    p.add_argument("--weight-cap", type=float, default=0.01)
    _add_format(p, ["text", "json", "csv"], "text")

    p = sub.add_parser("bootstrap", help="bootstrap cloud and confidence ellipse")
    _add_data_args(p)
    p.add_argument("--n-resamples", type=int, default=DEFAULT_RESAMPLES)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--slope", type=float, default=-80.0,
                   help="slope of the frozen search (only with --fix-point)")
    _add_format(p, ["text", "json", "geojson", "csv"], "text")

    p = sub.add_parser("synth", help="write a synthetic site CSV")
    p.add_argument("--anchor", type=point_arg, action="append", default=[], metavar="LAT,LON")
    p.add_argument("--per-anchor", type=int, default=30)
    p.add_argument("--sigma", type=float, default=5.0, help="circular std of orientations, deg")
    p.add_argument("--box", type=box_arg, action="append", default=[],
                   metavar="LATMIN,LATMAX,LONMIN,LONMAX", help="one box, or one per anchor")
    p.add_argument("--min-distance", type=float, default=0.01)
    p.add_argument("--max-distance", type=float, default=math.inf)
    p.add_argument("--year", type=int)
    p.add_argument("--model", type=model_arg, default="rhumb")
    p.add_argument("--seed", type=seed_arg, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV file to write")
    return parser


def _config(args, slope: float = -80.0) -> SearchConfig:
    try:
        return SearchConfig(
            slope=slope, n_init=args.n_init, dirichlet_alpha=args.dirichlet_alpha,
            outer_tol=args.outer_tol, prune_weight=args.prune_weight,
            merge_distance=args.merge_distance, max_outer_iters=args.max_outer_iters,
            seed=args.seed, simplex_step=args.simplex_step, simplex_ftol=args.simplex_ftol,
            simplex_maxiter=args.simplex_maxiter, removal_check=args.removal_check)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _source(args):
    predicate = year_before(args.before) if args.before is not None else None
    sites = load_sites(args.sites, predicate, args.exclude)
    return uniform_distribution(sites)


@dataclasses.dataclass
class Result:
    files: dict[str, str]
    stdout: dict[str, str]
    code: int = EXIT_OK


def _solution_text(sol) -> str:
    doc = export.solution_doc(sol)
    lines = [f"model {doc['model']}  slope {doc['slope']:g}  sites {doc['n_sites']}",
             f"{'point':<6}{'lat':>10}{'lon':>11}{'weight %':>10}{'distortion':>12}{'sigma':>8}"]
    for p in doc["points"]:
        sigma = "" if p["sigma_deg"] is None else f"{p['sigma_deg']:.1f}"
        lines.append(f"{p['id']:<6}{p['lat']:>10.4f}{p['lon']:>11.4f}{100 * p['weight']:>10.2f}"
                     f"{p['distortion']:>12.5f}{sigma:>8}")
    lines.append(f"rate {doc['rate_nats']:.4f} nats  mean distortion "
                 f"{doc['mean_distortion']:.5f}")
    for w in doc["warnings"]:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def _solve(args):
    source = _source(args)
    config = _config(args, args.slope)
    sol = search(source, args.model, config, args.fix_point)
    table = classify(sol)
    report = screen_outliers(sol, args.support_threshold, args.max_support_count)
    return sol, table, report


def cmd_compress(args) -> Result:
    sol, table, report = _solve(args)
    files = {
        "solution.json": export.dumps(export.solution_doc(sol)),
        "classification.csv": table.to_csv(),
        "outliers.json": export.dumps(export.outliers_doc(report)),
        "points.geojson": export.dumps(export.points_geojson(sol)),
    }
    stdout = {"text": _solution_text(sol), "json": files["solution.json"],
              "geojson": files["points.geojson"], "csv": files["classification.csv"]}
    return Result(files, stdout, EXIT_OK if sol.converged else EXIT_NUMERIC)


def cmd_classify(args) -> Result:
    sol, table, report = _solve(args)
    files = {"classification.csv": table.to_csv(),
             "classification.txt": table.to_text(),
             "outliers.json": export.dumps(export.outliers_doc(report))}
    stdout = {"text": files["classification.txt"], "csv": files["classification.csv"],
              "json": files["outliers.json"]}
    return Result(files, stdout, EXIT_OK if sol.converged else EXIT_NUMERIC)


def _curve_text(curve) -> str:
    lines = [f"{'slope':>9}{'rate':>10}{'distortion':>13}{'points':>8}"]
    for p in curve:
        if p.ok:
            lines.append(f"{p.slope:>9g}{p.rate_nats:>10.4f}{p.distortion:>13.6f}"
                         f"{p.codebook_size:>8}")
        else:
            lines.append(f"{p.slope:>9g}  failed: {p.error}")
    return "\n".join(lines) + "\n"


def _bifurcation_text(report) -> str:
    lines = [f"{'slope':>9}{'points':>8}{'min sep':>10}{'min weight':>12}  flag"]
    for r in report.rows:
        sep = "" if r.min_separation is None else f"{r.min_separation:.3f}"
        wt = "" if r.min_weight is None else f"{r.min_weight:.5f}"
        lines.append(f"{r.slope:>9g}{r.codebook_size:>8}{sep:>10}{wt:>12}  "
                     f"{'*' if r.flagged else ''}")
    return "\n".join(lines) + "\n"


def _verdict_text(cmp) -> str:
    def fmt(xs):
        return ", ".join(f"[{a:.4f}, {b:.4f}]" for a, b in xs) or "none"

    return (f"verdict: {cmp.verdict}\n"
            f"{cmp.model_a} better at rates: {fmt(cmp.a_better)}\n"
            f"{cmp.model_b} better at rates: {fmt(cmp.b_better)}\n")


def _curve_sorted(slopes):
    return sorted(set(slopes), reverse=True)


def _any_failed(curve) -> bool:
    return any(not p.ok or not p.solution.converged for p in curve)


def cmd_curve(args) -> Result:
    source = _source(args)
    config = _config(args)
    curve = sweep(source, args.model, _curve_sorted(args.slopes), config, args.fix_point)
    code = EXIT_NUMERIC if _any_failed(curve) else EXIT_OK
    rows = detect_bifurcations(curve, args.geo_delta, args.weight_cap)
    report = BifurcationReport(rows, args.geo_delta, args.weight_cap, curve)
    files = {"curve.csv": export.curve_csv(curve),
             "bifurcations.json": export.dumps(export.bifurcations_doc(report))}
    try:
        b = bounds(curve)
    except NumericalError as exc:
        log.error("bounds: %s", exc)
        code = EXIT_NUMERIC
    else:
        files["bounds.json"] = export.dumps(export.bounds_doc(b, model_label(args.model)))
    if args.compare_model is not None:
        cmp = compare_models(source, args.model, args.compare_model,
                             _curve_sorted(args.slopes), config)
        files["verdict.json"] = export.dumps(export.verdict_doc(cmp))
    stdout = {"text": _curve_text(curve), "csv": files["curve.csv"],
              "json": files.get("bounds.json", files["bifurcations.json"])}
    return Result(files, stdout, code)


def cmd_compare(args) -> Result:
    source = _source(args)
    if args.fix_point:
        raise UsageError("compare-models does not take --fix-point")
    cmp = compare_models(source, args.model, args.model_b, _curve_sorted(args.slopes),
                         _config(args))
    doc = export.verdict_doc(cmp)
    doc["curve_a"] = export.curve_points_doc(cmp.curve_a)
    doc["curve_b"] = export.curve_points_doc(cmp.curve_b)
    doc["bounds_a"] = export.bounds_doc(cmp.bounds_a, cmp.model_a)
    doc["bounds_b"] = export.bounds_doc(cmp.bounds_b, cmp.model_b)
    files = {"verdict.json": export.dumps(doc)}
    code = EXIT_NUMERIC if _any_failed(cmp.curve_a) or _any_failed(cmp.curve_b) else EXIT_OK
    return Result(files, {"text": _verdict_text(cmp), "json": files["verdict.json"]}, code)


def cmd_bifurcation(args) -> Result:
    source = _source(args)
    report = bifurcation_scan(source, args.model, args.slopes, _config(args),
                              args.geo_delta, args.weight_cap, args.fix_point)
    files = {"bifurcations.json": export.dumps(export.bifurcations_doc(report)),
             "curve.csv": export.curve_csv(report.curve)}
    code = EXIT_NUMERIC if _any_failed(report.curve) else EXIT_OK
    return Result(files, {"text": _bifurcation_text(report), "json": files["bifurcations.json"],
                          "csv": files["curve.csv"]}, code)


def cmd_bootstrap(args) -> Result:
    source = _source(args)
    if args.n_resamples < 1:
        raise UsageError("--n-resamples must be positive")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    config = _config(args, args.slope)
    cloud = bootstrap_cloud(source, args.model, config, args.n_resamples,
                            frozen_points=args.fix_point)
    code = EXIT_OK
    degenerate = False
    try:
        ell = fit_ellipse(cloud, args.level)
    except DegenerateCovariance as exc:
        log.error("%s", exc)
        ell, degenerate, code = exc.ellipse, True, EXIT_NUMERIC
    files = {
        "cloud.csv": export.cloud_csv(cloud),
        "ellipse.geojson": export.dumps(export.ellipse_geojson(ell)),
        "bootstrap.json": export.dumps(export.bootstrap_summary(cloud, ell, degenerate)),
    }
    summary = export.bootstrap_summary(cloud, ell, degenerate)
    text = (f"replicates {summary['n_replicates']} of {summary['n_resamples']}\n"
            f"center {ell.center.lat:.4f}, {ell.center.lon:.4f}\n"
            f"semi-axes {summary['semi_axes_deg']['major']:.4f}, "
            f"{summary['semi_axes_deg']['minor']:.4f} deg, "
            f"orientation {summary['orientation_deg']:.1f} deg\n")
    return Result(files, {"text": text, "json": files["bootstrap.json"],
                          "geojson": files["ellipse.geojson"], "csv": files["cloud.csv"]}, code)


def cmd_synth(args) -> Result:
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    if args.per_anchor < 0:
        raise UsageError("--per-anchor must be non-negative")
    if args.anchor:
        if len(args.box) not in (1, len(args.anchor)):
            raise UsageError("give one --box, or one per --anchor")
        box = args.box[0] if len(args.box) == 1 else args.box
        try:
            sites = generate_sites(args.anchor, args.per_anchor, args.sigma, box, args.model,
                                   seed=args.seed, year_ce=args.year,
                                   min_distance=args.min_distance,
                                   max_distance=args.max_distance)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        sites = []
    # writing goes through write_sites so the format matches the reader
    return Result({}, {"text": f"{len(sites)} sites\n"}, EXIT_OK), sites


COMMANDS = {
    "compress": cmd_compress,
    "classify": cmd_classify,
    "curve": cmd_curve,
    "compare-models": cmd_compare,
    "bifurcation-scan": cmd_bifurcation,
    "bootstrap": cmd_bootstrap,
}


def _write(out: Path, files: dict[str, str]):
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        export.write_text(out / name, text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "synth":
            result, sites = cmd_synth(args)
            args.out.parent.mkdir(parents=True, exist_ok=True)
            write_sites(sites, args.out)
        else:
            result = COMMANDS[args.command](args)
            _write(args.out, result.files)
    except UsageError as exc:
        print(f"rdstats: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, GeometryError, OSError) as exc:
        print(f"rdstats: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"rdstats: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    fmt = getattr(args, "format", "text")
    sys.stdout.write(result.stdout.get(fmt, ""))
    return result.code


if __name__ == "__main__":
    sys.exit(main())
