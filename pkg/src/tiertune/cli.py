"""Command-line front end: database building, workload runs, tuning, accuracy.

Exit codes: 0 success, 2 usage error, 3 infeasible input, 4 I/O error.
All outputs are deterministic under a fixed --seed except the wall-time
field in the build manifest.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import perfdb, tiersim, tuner, workgen

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

DB_ENV_VAR = "TIERTUNE_DB"

# Accuracy fractions default to the usual reduced-size sampling points.
DEFAULT_ACCURACY_FRACTIONS = (0.99, 0.98, 0.97, 0.96, 0.95, 0.88, 0.85)


class UsageError(Exception):
    pass


def _cost_params(fast_capacity: int = 1, slow_capacity: int = 1) -> tiersim.TierParams:
    return tiersim.TierParams(fast_capacity=fast_capacity, slow_capacity=slow_capacity)


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared experiment knobs resolved once per subcommand."""

    seed: int
    sim_params: tiersim.TierParams
    db: str | None
    out: str | None
    mode: str

    @classmethod
    def from_args(cls, args) -> "ExperimentConfig":
        return cls(
            seed=args.seed,
            sim_params=_cost_params(),
            db=args.db or os.environ.get(DB_ENV_VAR),
            out=args.out,
            mode=args.mode,
        )

    def require_db(self) -> str:
        if not self.db:
            raise UsageError("no database given: use --db or set " + DB_ENV_VAR)
        return self.db


def _load_target(path: str) -> workgen.WorkloadTarget:
    doc = json.loads(Path(path).read_text())
    return workgen.WorkloadTarget(**doc)


def _load_spec_or_target(args, mode: str) -> workgen.WorkloadSpec:
    if args.spec:
        return workgen.WorkloadSpec.load(args.spec)
    if args.target:
        return workgen.synthesize(_load_target(args.target), mode=mode)
    raise UsageError("one of --spec or --target is required")


def _parse_fractions(text: str) -> list[float]:
    """Comma list ("1.0,0.95") or an evenly spaced grid ("start:stop:n")."""
    if ":" in text:
        start, stop, n = text.split(":")
        start, stop, n = float(start), float(stop), int(n)
        if n < 1:
            raise ValueError("fraction grid needs at least one point")
        if n == 1:
            return [stop]
        step = (stop - start) / (n - 1)
        return [start + i * step for i in range(n)]
    return [float(tok) for tok in text.split(",") if tok]


def cmd_build_db(args) -> int:
    cfg = ExperimentConfig.from_args(args)
    grid_doc = json.loads(Path(args.grid).read_text())
    fractions = (
        _parse_fractions(args.fm_fractions)
        if args.fm_fractions
        else grid_doc.pop("fm_fractions", None)
    )
    if fractions is None:
        fractions = _parse_fractions("0.5:1.0:100")
    missing = [k for k in perfdb.CONFIG_FIELDS if k not in grid_doc]
    if missing:
        raise UsageError(f"grid file missing dimensions: {', '.join(missing)}")
    axes = [grid_doc[k] for k in perfdb.CONFIG_FIELDS]
    if any(not isinstance(a, list) or not a for a in axes):
        raise UsageError("every grid dimension must be a non-empty list")
    configs = [
        perfdb.ConfigVector(*combo) for combo in itertools.product(*axes)
    ]
    started = time.perf_counter()
    db = perfdb.build(
        configs,
        fractions,
        sim_params=cfg.sim_params,
        seed=cfg.seed,
        mode=cfg.mode,
        workers=args.workers,
    )
    wall = time.perf_counter() - started
    db_path = cfg.require_db()
    db.save(db_path)
    manifest = {
        "db": str(db_path),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "configs": len(configs),
        "records": len(db),
        "fm_fractions": sorted(set(float(f) for f in fractions), reverse=True),
        "skipped": db.skipped,
        "wall_time_s": wall,  # informational; not covered by determinism
    }
    manifest_path = args.manifest or db_path + ".manifest.json"
    Path(manifest_path).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    print(f"built {len(db)} records ({len(db.skipped)} skipped) -> {db_path}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_args(args)
    spec = _load_spec_or_target(args, cfg.mode)
    result = workgen.execute(spec, params=cfg.sim_params, fm_fraction=args.fm_fraction)
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "counters.csv", "w") as fh:
            tiersim.write_reports_csv([result.report], fh)
    row = ",".join(str(v) for v in tiersim.report_row(result.report))
    print(",".join(tiersim.CSV_COLUMNS))
    print(row)
    print(f"exec_time={result.exec_time!r}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = ExperimentConfig.from_args(args)
    db = perfdb.PerfDatabase.load(cfg.require_db())
    spec = _load_spec_or_target(args, cfg.mode)
    loop_cfg = tuner.TunerConfig(
        tau=args.tau,
        interval=args.interval,
        min_step=args.min_step,
        mode=args.tuner_mode,
    )
    trace = tuner.run_loop(
        spec,
        db,
        loop_cfg,
        horizon=args.horizon,
        params=cfg.sim_params,
        tuner_on=(args.tuner == "on"),
    )
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    trace.save(out / "trace.csv", out / "summary.json")
    summary = trace.summary()
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_accuracy(args) -> int:
    cfg = ExperimentConfig.from_args(args)
    db = perfdb.PerfDatabase.load(cfg.require_db())
    spec = _load_spec_or_target(args, cfg.mode)
    fractions = (
        _parse_fractions(args.fm_fractions)
        if args.fm_fractions
        else list(DEFAULT_ACCURACY_FRACTIONS)
    )
    rows = tuner.evaluate_accuracy(spec, db, fractions, params=cfg.sim_params)
    lines = ["fm_fraction,measured_pd,predicted_pd,error,absolute"]
    for r in rows:
        lines.append(
            f"{r.fm_fraction!r},{r.measured_pd!r},{r.predicted_pd!r},"
            f"{r.error!r},{int(r.absolute)}"
        )
    text = "\n".join(lines)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "accuracy.csv").write_text(text + "\n")
    print(text)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="reproducibility seed")
    p.add_argument("--db", help=f"database path (or ${DB_ENV_VAR})")
    p.add_argument("--out", help="output directory")
    p.add_argument(
        "--mode",
        choices=list(workgen.MODES),
        default=workgen.GUARANTEED,
        help="workload capacity-schedule mode",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiertune",
        description="Tiered-memory modeling and fast-memory sizing toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="build a performance database from a grid")
    _add_common(p)
    p.add_argument("--grid", required=True, help="JSON file with per-dimension value lists")
    p.add_argument("--fm-fractions", help='comma list or "lo:hi:n" grid')
    p.add_argument("--manifest", help="manifest path (default <db>.manifest.json)")
    p.add_argument("--workers", type=int, default=1, help="parallel build workers")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("run", help="execute one workload and emit its counters")
    _add_common(p)
    p.add_argument("--target", help="workload target JSON file")
    p.add_argument("--spec", help="planned workload document")
    p.add_argument("--fm-fraction", type=float, default=1.0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="closed-loop sizing over a stationary workload")
    _add_common(p)
    p.add_argument("--target", help="workload target JSON file")
    p.add_argument("--spec", help="planned workload document")
    p.add_argument("--tau", type=float, default=0.05, help="performance loss budget")
    p.add_argument("--interval", type=float, default=2.5, help="tuning cadence, time units")
    p.add_argument("--horizon", type=int, default=20, help="profiling intervals to run")
    p.add_argument("--min-step", type=int, default=None, help="anti-thrash step, pages")
    p.add_argument("--tuner", choices=["on", "off"], default="on")
    p.add_argument(
        "--tuner-mode",
        choices=[tuner.DECREASE_ONLY, tuner.BIDIRECTIONAL],
        default=tuner.BIDIRECTIONAL,
    )
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("accuracy", help="model error across fast-memory fractions")
    _add_common(p)
    p.add_argument("--target", help="workload target JSON file")
    p.add_argument("--spec", help="planned workload document")
    p.add_argument("--fm-fractions", help='comma list or "lo:hi:n" grid')
    p.set_defaults(func=cmd_accuracy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (workgen.InfeasibleTarget, workgen.InvalidHotThr, tiersim.InvalidTarget) as exc:
        print(f"infeasible input: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (perfdb.ParseError, perfdb.VersionError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
