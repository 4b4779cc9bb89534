"""Command-line entry point: ``tdbm <subcommand> ...``.

Structured results are JSON documents with a ``manifest`` member; tabular
results are CSV files with a ``<file>.manifest.json`` next to them. Every
manifest records the subcommand, resolved settings, SHA-256 digests of the
inputs and the package version. Wall-clock information lives only under
``manifest.timestamp``, so two runs on identical inputs differ in nothing
else.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical or fit
failure, 4 a simulated run ended in an ego collision.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .errors import InputError, NumericalError, ParseError, UsageError, ValidationError
from .features import FeatureParams, FeatureVector, NormalizationParams, extract_all, features_json, normalize
from .mapping import PUBLISHED_MAPS, LinearMapSet, fit_ols, lasso_path, loocv, pca, read_survey_csv, safety_from_pc1, score
from .mapping.lasso import DEFAULT_ATTENTION_THRESHOLD, DEFAULT_BEHAVIOR_THRESHOLD, select_features
from .planner import CostMode
from .sim import SHIPPED_SCENARIOS, compare, load_scenario, lowest_attention_neighbor, packaged_normalization, run, shipped_scenario
from .trajectory import LaneGeometry, ingest_csv, write_csv

log = logging.getLogger("tdbm")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL, EXIT_COLLISION = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as :class:`UsageError` so they map to exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Run:
    """Collects manifest data while a subcommand runs."""

    def __init__(self, subcommand: str):
        self.subcommand = subcommand
        self.config: dict = {}
        self.inputs: dict = {}
        self.started = time.time()

    def input(self, path) -> Path:
        path = Path(path)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            raise ValidationError(f"input file not found: {path}") from None
        except IsADirectoryError:
            raise ValidationError(f"input path is a directory: {path}") from None
        self.inputs[str(path)] = hashlib.sha256(data).hexdigest()
        return path

    def manifest(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": dict(sorted(self.inputs.items())),
            "version": __version__,
            "timestamp": {
                "started": _dt.datetime.fromtimestamp(self.started, _dt.timezone.utc).isoformat(),
                "duration_s": round(time.time() - self.started, 6),
            },
        }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _emit_json(run_: _Run, payload: dict, out) -> None:
    text = _dumps({**payload, "manifest": run_.manifest()})
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _write_csv(run_: _Run, rows: list[dict], out, columns=None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    if out is None:
        sys.stdout.write(buf.getvalue())
        return
    Path(out).write_text(buf.getvalue())
    Path(f"{out}.manifest.json").write_text(_dumps(run_.manifest()))


def _read_json(run_: _Run, path) -> dict:
    path = run_.input(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None


# -- argument helpers ---------------------------------------------------------

def _geometry(args, run_: _Run) -> LaneGeometry:
    if args.geometry is not None:
        return LaneGeometry.from_dict(_read_json(run_, args.geometry))
    return LaneGeometry.uniform(args.lanes, args.lane_width)


def _maps(args, run_: _Run) -> LinearMapSet:
    if args.maps == "builtin":
        run_.config["maps"] = "builtin"
        return PUBLISHED_MAPS
    run_.config["maps"] = str(args.maps)
    return LinearMapSet.from_dict(_read_json(run_, args.maps))


def _norm(args, run_: _Run, default_packaged: bool) -> NormalizationParams | None:
    if args.norm is None:
        run_.config["norm"] = "packaged" if default_packaged else None
        return packaged_normalization() if default_packaged else None
    if args.norm == "none":
        run_.config["norm"] = None
        return None
    run_.config["norm"] = str(args.norm)
    return NormalizationParams.from_dict(_read_json(run_, args.norm))


def _feature_params(args, run_: _Run) -> FeatureParams:
    params = FeatureParams.from_dict(_read_json(run_, args.params)) if args.params else FeatureParams()
    if args.window is not None:
        t0, t1 = args.window
        if not t1 > t0:
            raise UsageError("--window needs T0 < T1")
        params = FeatureParams.from_dict({**params.to_dict(), "window": (t0, t1)})
    return params


def _load_log(args, run_: _Run):
    geometry = _geometry(args, run_)
    path = run_.input(args.trajectories)
    log_ = ingest_csv(path, geometry, args.dt)
    run_.config.update(geometry=geometry.to_dict(), dt=log_.metadata["dt"])
    return log_


def _scenario(args, run_: _Run):
    path = Path(args.scenario)
    if not path.exists() and args.scenario in SHIPPED_SCENARIOS:
        run_.config["scenario"] = f"shipped:{args.scenario}"
        sc = shipped_scenario(args.scenario)
    else:
        sc = load_scenario(run_.input(path))
        run_.config["scenario"] = str(path)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _survey(args, run_: _Run):
    return read_survey_csv(run_.input(args.survey), strict=not args.lenient)


# -- subcommands --------------------------------------------------------------

def cmd_extract(args, run_: _Run) -> int:
    log_ = _load_log(args, run_)
    params = _feature_params(args, run_)
    run_.config.update(target=args.target, params=params.to_dict())
    vector = extract_all(log_, args.target, params)
    window = params.window if params.window is not None else log_[args.target].time_span
    _emit_json(run_, features_json(args.target, vector, params, window), args.out)
    return EXIT_OK


def cmd_score(args, run_: _Run) -> int:
    if (args.features is None) == (args.trajectories is None):
        raise UsageError("give exactly one of --features or --trajectories")
    maps = _maps(args, run_)
    if args.features is not None:
        vector = FeatureVector.from_dict(_read_json(run_, args.features))
        norm = _norm(args, run_, default_packaged=False)
    else:
        if args.target is None:
            raise UsageError("--trajectories needs --target")
        log_ = _load_log(args, run_)
        params = _feature_params(args, run_)
        run_.config.update(target=args.target, params=params.to_dict())
        vector = extract_all(log_, args.target, params)
        norm = _norm(args, run_, default_packaged=True)
    scaled = normalize(vector, norm) if norm is not None else vector
    report = score(scaled, maps)
    _emit_json(run_, {**report.to_dict(), "features": scaled.to_dict()}, args.out)
    return EXIT_OK


def cmd_fit(args, run_: _Run) -> int:
    data = _survey(args, run_)
    run_.config["rows"] = len(data)
    maps = fit_ols(data)
    _emit_json(run_, maps.to_dict(), args.out)
    return EXIT_OK


def cmd_lasso_path(args, run_: _Run) -> int:
    data = _survey(args, run_)
    run_.config.update(rows=len(data), n_grid=args.n_grid, ratio=args.ratio,
                       alpha_behavior=args.alpha_behavior, alpha_attention=args.alpha_attention)
    path = lasso_path(data, n_grid=args.n_grid, ratio=args.ratio)
    behavior, attention = select_features(path, args.alpha_behavior, args.alpha_attention)
    run_.config["selected"] = {"behavior": list(behavior), "attention": list(attention)}
    _write_csv(run_, list(path.to_rows()), args.out, ["response", "feature", "log10_alpha"])
    if args.out is not None:
        sys.stdout.write(_dumps(run_.config["selected"]))
    return EXIT_OK


def cmd_pca(args, run_: _Run) -> int:
    data = _survey(args, run_)
    run_.config["rows"] = len(data)
    result = pca(data)
    _emit_json(run_, {**result.to_dict(), "safety_row": safety_from_pc1(result, data).tolist()}, args.out)
    return EXIT_OK


def cmd_loocv(args, run_: _Run) -> int:
    data = _survey(args, run_)
    run_.config["rows"] = len(data)
    res = loocv(data)
    payload = {"mean_abs_error": {f"b{i}": e for i, e in enumerate(res.mean_abs_error)}, "n_fits": res.n_fits}
    _emit_json(run_, payload, args.out)
    return EXIT_OK


def _sim_kwargs(args, run_: _Run) -> dict:
    return {"maps": _maps(args, run_), "normalization": _norm(args, run_, default_packaged=True)}


def cmd_simulate(args, run_: _Run) -> int:
    sc = _scenario(args, run_)
    if args.cost is not None:
        sc = sc.with_cost_mode(args.cost)
    kw = _sim_kwargs(args, run_)
    run_.config.update(cost_mode=sc.planner.cost_mode.value, seed=sc.seed)
    trace = run(sc, record_costs=args.dump_costs is not None, **kw)
    payload = trace.to_dict()
    payload["lowest_attention_neighbor"] = lowest_attention_neighbor(trace)
    if args.out is None:
        _emit_json(run_, payload, None)
    else:
        out = Path(args.out)
        csv_path = out.with_name(out.stem + ".trajectories.csv")
        write_csv(trace.log, csv_path)
        Path(f"{csv_path}.manifest.json").write_text(_dumps(run_.manifest()))
        payload["trajectories_csv"] = csv_path.name
        _emit_json(run_, payload, out)
    if args.dump_costs is not None:
        columns = ["t", "lane_delta", "speed_offset", "target_lane", "feasible", "fallback", "selected",
                   "path_deviation", "smoothness", "lane_change", "proximity", "total"]
        _write_csv(run_, trace.cost_rows, args.dump_costs, columns)
    if trace.collided:
        log.error("ego collided with %s at t=%.2f s", trace.summary["collided_with"],
                  trace.summary["duration_simulated"])
        return EXIT_COLLISION
    return EXIT_OK


def cmd_compare(args, run_: _Run) -> int:
    sc = _scenario(args, run_)
    modes = [CostMode.parse(m) for m in args.costs.split(",") if m.strip()]
    if not modes:
        raise UsageError("--costs needs at least one cost mode")
    kw = _sim_kwargs(args, run_)
    run_.config.update(costs=[m.value for m in modes], seed=sc.seed)
    rows = compare(sc, modes, **kw)
    _write_csv(run_, rows, args.out)
    if args.out is not None:
        for row in rows:
            sys.stdout.write(f"{row['cost_mode']:<13} {row['status']:<9} min_distance_flagged="
                             f"{row['min_distance_flagged']} final_leader={row['final_leader']}\n")
    return EXIT_COLLISION if any(r["status"] == "COLLIDED" for r in rows) else EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_geometry(p):
    p.add_argument("--lanes", type=int, default=3, help="number of lanes [count] (default 3)")
    p.add_argument("--lane-width", type=float, default=3.7, help="lane width [m] (default 3.7)")
    p.add_argument("--geometry", metavar="PATH",
                   help="lane geometry JSON with lane_count, lane_width, lane_centers [m]; overrides --lanes")
    p.add_argument("--dt", type=float, help="resampling step [s] (default: median sample spacing)")


def _add_window(p):
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"),
                   help="feature window start and end [s]")
    p.add_argument("--params", metavar="PATH",
                   help="JSON feature parameters: k [s], tau [s], mu [-], radius [m], d_max [m]")


def _add_maps(p, norm_default: str):
    p.add_argument("--maps", default="builtin", metavar="PATH|builtin",
                   help="linear map set JSON [path], or 'builtin' for the published maps (default)")
    p.add_argument("--norm", metavar="PATH|none",
                   help=f"normalization JSON with p5/p95 per feature [feature units]; {norm_default}")


def _add_survey(p):
    p.add_argument("--survey", required=True, metavar="PATH",
                   help="survey CSV: normalized features [-] and responses b0..b9 [Likert points]")
    p.add_argument("--lenient", action="store_true",
                   help="accept responses off the integer Likert grid [flag]")


def _add_out(p, what: str):
    p.add_argument("--out", metavar="PATH", help=f"{what} [path] (default stdout)")


def _add_scenario(p):
    p.add_argument("--scenario", required=True, metavar="PATH|NAME",
                   help=f"scenario JSON [path] or a shipped name: {', '.join(SHIPPED_SCENARIOS)}")
    p.add_argument("--seed", type=int, help="override the scenario seed [integer]")
    _add_maps(p, "default: the packaged normalization")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tdbm", description="Driver-behavior scoring and behavior-aware planning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr [flag]")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("extract", help="extract features f0..f9 for one vehicle",
                       description="Extract features f0..f9 of one vehicle from a trajectory CSV. "
                                   "Speeds in m/s, distances in m, jerk in m/s^3.")
    p.add_argument("--trajectories", required=True, metavar="PATH",
                   help="trajectory CSV with vehicle_id, t [s], s [m], y [m], v [m/s], lane_id")
    p.add_argument("--target", required=True, help="vehicle id to describe [string]")
    _add_window(p)
    _add_geometry(p)
    _add_out(p, "feature JSON")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score", help="behavior, attention and safety scores",
                       description="Apply the linear maps to one feature vector. Behaviors are in "
                                   "Likert points on -3..3, attentions on -2..2.")
    p.add_argument("--features", metavar="PATH",
                   help="feature JSON [path] with keys f0..f9 or names, used as already normalized unless --norm")
    p.add_argument("--trajectories", metavar="PATH",
                   help="trajectory CSV [path]; features are extracted and then normalized")
    p.add_argument("--target", help="vehicle id when scoring from --trajectories [string]")
    _add_window(p)
    _add_geometry(p)
    _add_maps(p, "default: none for --features, the packaged one for --trajectories")
    _add_out(p, "score JSON")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit", help="fit behavior, attention and safety maps by least squares")
    _add_survey(p)
    _add_out(p, "map set JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("lasso-path", help="Lasso elimination value of every feature and response")
    _add_survey(p)
    p.add_argument("--n-grid", type=int, default=100, help="penalties per response [count] (default 100)")
    p.add_argument("--ratio", type=float, default=1e-4,
                   help="smallest penalty as a fraction of lambda_max [-] (default 1e-4)")
    p.add_argument("--alpha-behavior", type=float, default=DEFAULT_BEHAVIOR_THRESHOLD,
                   help=f"selection threshold for b0..b5 [log10 lambda] (default {DEFAULT_BEHAVIOR_THRESHOLD})")
    p.add_argument("--alpha-attention", type=float, default=DEFAULT_ATTENTION_THRESHOLD,
                   help=f"selection threshold for b6..b9 [log10 lambda] (default {DEFAULT_ATTENTION_THRESHOLD})")
    _add_out(p, "CSV of response, feature, log10_alpha")
    p.set_defaults(func=cmd_lasso_path)

    p = sub.add_parser("pca", help="principal components of the behavior responses")
    _add_survey(p)
    _add_out(p, "PCA JSON")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("loocv", help="leave-one-out mean absolute error per response")
    _add_survey(p)
    _add_out(p, "JSON with errors [Likert points]")
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("simulate", help="run one scenario",
                       description="Simulate a scenario. Writes the trace JSON and, next to it, "
                                   "<stem>.trajectories.csv. Exit code 4 on an ego collision.")
    _add_scenario(p)
    p.add_argument("--cost", choices=[m.value for m in CostMode],
                   help="proximity cost mode [-] (default: the scenario's)")
    _add_out(p, "trace JSON")
    p.add_argument("--dump-costs", metavar="PATH",
                   help="CSV of every candidate's cost terms at every planning step [path]")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run one scenario under several cost modes",
                       description="Run a scenario once per cost mode with the same seed. "
                                   "Distances in m, times in s.")
    _add_scenario(p)
    p.add_argument("--costs", default=",".join(m.value for m in CostMode),
                   help="comma-separated cost modes [-] (default: all)")
    _add_out(p, "comparison CSV")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("missing subcommand; see tdbm --help")
        return args.func(args, _Run(args.command))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
