"""Closed-loop fast-memory sizing.

Every tuning step samples the latest interval counters into a configuration
vector, looks up the nearest execution record in the performance database,
and picks the smallest sampled fast-memory size whose predicted slowdown
stays within the loss budget ``tau``. The chosen size is applied through the
watermark controls and the loop continues.

:func:`run_loop` drives a stationary workload through this cycle interval by
interval, recording the applied sizes and the realized loss against a
tuner-off baseline. :func:`evaluate_accuracy` compares database predictions
with fresh measurements across fast-memory fractions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

from .perfdb import ConfigVector, PerfDatabase, loss_curve
from .tiersim import TierParams, TieredMemState, Watermarks
from .workgen import WorkloadSpec, execute

DECREASE_ONLY = "decrease-only"
BIDIRECTIONAL = "bidirectional"

TRACE_COLUMNS = (
    "interval",
    "fm_pages",
    "fm_fraction",
    "predicted_pd",
    "realized_pd",
    "pm_de",
    "pm_pr",
    "mig_failures",
)


class DegenerateInterval(RuntimeError):
    """Raised when an interval carries no accesses to sample from."""


@dataclass(frozen=True)
class TunerConfig:
    tau: float = 0.05        # acceptable relative performance loss
    interval: float = 2.5    # time units between size adjustments
    min_step: int | None = None  # pages; None = 1% of the full fast size
    mode: str = BIDIRECTIONAL

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.interval <= 0:
            raise ValueError("interval must be > 0")
        if self.mode not in (DECREASE_ONLY, BIDIRECTIONAL):
            raise ValueError(f"unknown tuner mode {self.mode!r}")

    def resolved_min_step(self, rss_fm: int) -> int:
        if self.min_step is not None:
            return self.min_step
        return max(1, round(0.01 * rss_fm))

    def steps_every(self, prof_int: float) -> int:
        """Whole profiling intervals per tuning step."""
        return max(1, round(self.interval / prof_int))


@dataclass
class TunerDecision:
    probe: ConfigVector | None
    matched: tuple[float, ...] | None  # config key of the queried record
    curve: list[tuple[float, float]]
    chosen_fm: int
    chosen_fraction: float
    predicted_pd: float
    applied_watermarks: Watermarks | None
    applied: bool
    reason: str  # "applied", "min-step", "decrease-only", "degenerate"


def sample_counters(state: TieredMemState) -> ConfigVector:
    """Configuration vector from the state's most recent interval report.

    Arithmetic intensity is measured as executed ops per access; static
    dimensions come from the state itself.
    """
    report = state.last_report
    if report is None or report.accesses == 0:
        raise DegenerateInterval("no accesses in the last profiling interval")
    return ConfigVector(
        pm_de=report.pm_de,
        pm_pr=report.pm_pr,
        ai=report.ops_executed / report.accesses,
        pacc_fast=report.pacc_fast,
        pacc_slow=report.pacc_slow,
        prof_int=state.prof_int,
        hot_thr=state.hot_thr,
        free_page_thr=state.free_page_thr,
        num_threads=state.num_threads,
    )


def choose_fast_mem_size(
    curve: list[tuple[float, float]], tau: float, rss_fm: int
) -> int:
    """Smallest sampled size whose predicted loss is within ``tau``.

    Falls back to the full size when no reduced sample qualifies. No
    interpolation between samples.
    """
    fraction, _ = choose_fraction(curve, tau)
    return round(fraction * rss_fm)


def choose_fraction(curve: list[tuple[float, float]], tau: float) -> tuple[float, float]:
    """(fraction, predicted pd) for the smallest qualifying sample."""
    if not curve:
        raise ValueError("empty loss curve")
    if not any(math.isclose(f, 1.0) for f, _ in curve):
        raise ValueError("loss curve must include fraction 1.0")
    best = (1.0, 0.0)
    for f, pd in sorted(curve):
        if pd <= tau:
            best = (f, pd)
            break
    return best


def tune_step(
    state: TieredMemState,
    db: PerfDatabase,
    cfg: TunerConfig,
    rss_fm: int | None = None,
    current_fm: int | None = None,
) -> TunerDecision:
    """One decision cycle: sample, query, choose, apply.

    The new target is installed on ``state`` unless the change is smaller
    than the anti-thrash step or disallowed by decrease-only mode. A
    degenerate interval yields a no-change decision flagged as such.
    """
    if rss_fm is None:
        rss_fm = state.params.fast_capacity
    if current_fm is None:
        current_fm = state.watermarks.low_wm
    try:
        probe = sample_counters(state)
    except DegenerateInterval:
        return TunerDecision(
            probe=None,
            matched=None,
            curve=[],
            chosen_fm=current_fm,
            chosen_fraction=current_fm / rss_fm,
            predicted_pd=0.0,
            applied_watermarks=None,
            applied=False,
            reason="degenerate",
        )
    record = db.query_nearest(probe)
    curve = loss_curve(record)
    fraction, predicted = choose_fraction(curve, cfg.tau)
    chosen = round(fraction * rss_fm)
    decision = TunerDecision(
        probe=probe,
        matched=record.config.as_tuple(),
        curve=curve,
        chosen_fm=chosen,
        chosen_fraction=fraction,
        predicted_pd=predicted,
        applied_watermarks=None,
        applied=False,
        reason="applied",
    )
    if abs(chosen - current_fm) < cfg.resolved_min_step(rss_fm):
        decision.reason = "min-step"
        return decision
    if cfg.mode == DECREASE_ONLY and chosen > current_fm:
        decision.reason = "decrease-only"
        return decision
    decision.applied_watermarks = state.set_fast_mem_target(max(1, chosen))
    decision.applied = True
    return decision


@dataclass
class TraceRow:
    interval: int
    fm_pages: int
    fm_fraction: float
    predicted_pd: float
    realized_pd: float
    pm_de: int
    pm_pr: int
    mig_failures: int
    exec_time: float
    baseline_time: float


@dataclass
class TuneTrace:
    """Per-interval record of a tuning run plus its summary metrics."""

    rows: list[TraceRow] = field(default_factory=list)
    decisions: list[TunerDecision] = field(default_factory=list)
    rss_fm: int = 0
    tau: float = 0.0

    @property
    def overall_pd(self) -> float:
        x = sum(r.baseline_time for r in self.rows)
        y = sum(r.exec_time for r in self.rows)
        return (y - x) / x if x > 0 else 0.0

    @property
    def savings(self) -> list[float]:
        return [1.0 - r.fm_pages / self.rss_fm for r in self.rows]

    @property
    def cumulative_saving(self) -> float:
        return sum(self.savings)

    @property
    def quantization_margin(self) -> float:
        """Largest single interval's share of the baseline, the resolution
        at which overall loss can be attributed."""
        x = sum(r.baseline_time for r in self.rows)
        if x <= 0:
            return 0.0
        return max(r.baseline_time for r in self.rows) / x

    def summary(self) -> dict:
        savings = self.savings
        return {
            "intervals": len(self.rows),
            "tau": self.tau,
            "rss_fm_pages": self.rss_fm,
            "overall_pd": self.overall_pd,
            "avg_saving": sum(savings) / len(savings) if savings else 0.0,
            "peak_saving": max(savings) if savings else 0.0,
            "final_fm_pages": self.rows[-1].fm_pages if self.rows else 0,
            "final_fm_fraction": self.rows[-1].fm_fraction if self.rows else 1.0,
            "quantization_margin": self.quantization_margin,
        }

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.rows:
            writer.writerow([getattr(r, name) for name in TRACE_COLUMNS])

    def save(self, csv_path: str | Path, summary_path: str | Path | None = None) -> None:
        with open(csv_path, "w") as fh:
            self.write_csv(fh)
        if summary_path is not None:
            Path(summary_path).write_text(
                json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"
            )


def run_loop(
    spec: WorkloadSpec,
    db: PerfDatabase,
    cfg: TunerConfig,
    horizon: int,
    params: TierParams | None = None,
    tuner_on: bool = True,
) -> TuneTrace:
    """Drive a stationary workload for ``horizon`` profiling intervals.

    Each interval replays the workload at the currently applied fast-memory
    fraction; the baseline time is the same workload at full size with the
    tuner off. Tuning decisions fire every ``cfg.interval`` worth of
    profiling intervals, and an applied decision takes effect from the next
    interval on.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rss_fm = spec.init_fast_capacity
    baseline = execute(spec, params=params, fm_fraction=1.0)
    x = baseline.exec_time

    trace = TuneTrace(rss_fm=rss_fm, tau=cfg.tau)
    every = cfg.steps_every(spec.target.prof_int)
    fraction = 1.0
    fm_pages = rss_fm
    predicted = 0.0
    for i in range(horizon):
        result = execute(spec, params=params, fm_fraction=fraction)
        rep = result.report
        realized = (rep.exec_time - x) / x if x > 0 else 0.0
        trace.rows.append(
            TraceRow(
                interval=i,
                fm_pages=fm_pages,
                fm_fraction=fraction,
                predicted_pd=predicted,
                realized_pd=realized,
                pm_de=rep.pm_de,
                pm_pr=rep.pm_pr,
                mig_failures=rep.mig_failures,
                exec_time=rep.exec_time,
                baseline_time=x,
            )
        )
        if tuner_on and (i + 1) % every == 0:
            decision = tune_step(
                result.state, db, cfg, rss_fm=rss_fm, current_fm=fm_pages
            )
            trace.decisions.append(decision)
            if decision.applied:
                fraction = decision.chosen_fraction
                fm_pages = decision.chosen_fm
                predicted = decision.predicted_pd
    return trace


@dataclass(frozen=True)
class AccuracyRow:
    fm_fraction: float
    measured_pd: float
    predicted_pd: float
    error: float
    absolute: bool  # True when measured pd was 0 and the error is |pd' - pd|


def evaluate_accuracy(
    spec: WorkloadSpec,
    db: PerfDatabase,
    fm_fractions,
    params: TierParams | None = None,
) -> list[AccuracyRow]:
    """Model error per fraction: |predicted - measured| / measured.

    The probe is sampled from the full-size run, predictions come from the
    nearest record's loss curve (closest sampled fraction), and measurements
    from fresh runs at each fraction. A zero measured loss switches the row
    to absolute error, flagged.
    """
    baseline = execute(spec, params=params, fm_fraction=1.0)
    x = baseline.exec_time
    if x <= 0:
        raise ValueError("baseline execution time must be positive")
    probe = sample_counters(baseline.state)
    record = db.query_nearest(probe)
    curve = dict(loss_curve(record))

    rows = []
    for f in fm_fractions:
        f = float(f)
        y = execute(spec, params=params, fm_fraction=f).exec_time
        pd = (y - x) / x
        nearest = min(curve, key=lambda s: (abs(s - f), s))
        predicted = curve[nearest]
        if pd == 0.0:
            rows.append(AccuracyRow(f, pd, predicted, abs(predicted - pd), True))
        else:
            rows.append(AccuracyRow(f, pd, predicted, abs(predicted - pd) / abs(pd), False))
    return rows


__all__ = [
    "BIDIRECTIONAL",
    "DECREASE_ONLY",
    "AccuracyRow",
    "DegenerateInterval",
    "TRACE_COLUMNS",
    "TraceRow",
    "TuneTrace",
    "TunerConfig",
    "TunerDecision",
    "choose_fast_mem_size",
    "choose_fraction",
    "evaluate_accuracy",
    "run_loop",
    "sample_counters",
    "tune_step",
]
