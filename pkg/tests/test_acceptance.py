"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with ``pytest tests/test_acceptance.py -v -s``.

Tolerances are pinned here: counter reproduction and query agreement are
exact, self-consistent model error is bounded by 1e-9, trend checks allow
1e-12 of float slack, and the closed-loop budget carries the reported
one-interval quantization margin.
"""

import functools
import hashlib
import random
import time

from _helpers import random_target, report_counts
from tiertune import cli, perfdb, tuner, workgen
from tiertune.perfdb import ConfigVector, ExecutionRecord, PerfDatabase
from tiertune.tiersim import Tier, TierParams, TieredMemState, Watermarks
from tiertune.tuner import TunerConfig, run_loop
from tiertune.workgen import WorkloadTarget, adjust_pacc, split_accesses

SEED = 20240811
FLOAT_SLACK = 1e-12

STATIONARY = WorkloadTarget(
    pacc_fast=2000,
    pacc_slow=500,
    pm_pr=8,
    pm_de=8,
    ai=5.0,
    hot_thr=6,
    free_page_thr=10,
    num_threads=1,
)
LOOP_FRACTIONS = [1.0 - 0.01 * i for i in range(16)]  # 1.00 down to 0.85
TABLE_FRACTIONS = [1.0, 0.99, 0.98, 0.97, 0.96, 0.95, 0.88, 0.85]


def criterion(number, title):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL criterion {number}: {title}")
                raise
            print(f"PASS criterion {number}: {title}")

        return wrapper

    return decorate


def thousand_targets():
    rng = random.Random(SEED)
    return [random_target(rng) for _ in range(1000)]


@criterion(1, "generator soundness: 1000 random targets reproduce exactly")
def test_generator_soundness_exact():
    targets = thousand_targets()
    started = time.perf_counter()
    for target in targets:
        report = workgen.run_target(target).report
        assert report_counts(report) == (
            target.pacc_fast,
            target.pacc_slow,
            target.pm_pr,
            target.pm_de,
        ), target
    elapsed = time.perf_counter() - started
    print(f"  [1000 targets replayed in {elapsed:.1f}s]")
    assert elapsed < 60.0


@criterion(2, "planning identities: pages*(hot_thr-1)+residual == adjusted pacc")
def test_planning_identities_exact():
    for target in thousand_targets():
        adj_fast, adj_slow = adjust_pacc(target)
        npf, rf = split_accesses(adj_fast, target.hot_thr)
        nps, rs = split_accesses(adj_slow, target.hot_thr)
        assert npf * (target.hot_thr - 1) + rf == adj_fast
        assert nps * (target.hot_thr - 1) + rs == adj_slow


@criterion(3, "watermark state machine: safety, trigger exclusivity, 0.8 rule")
def test_watermark_state_machine():
    total_pages = 10_000
    params = TierParams(fast_capacity=6000, slow_capacity=4 * total_pages)
    rng = random.Random(SEED + 1)

    # (a) after every reclaim pass usage respects the high watermark
    state = TieredMemState(params, hot_thr=3)
    for pid in range(total_pages):
        state.add_page(pid, Tier.FAST if rng.random() < 0.5 else Tier.SLOW)
    for _ in range(3000):
        op = rng.random()
        if op < 0.70:
            state.access_page(rng.randrange(total_pages), rng.randrange(3))
        elif op < 0.80:
            state.run_promotion_queue()
        elif op < 0.90:
            state.background_reclaim()
            assert state.fast_used <= state.watermarks.high_wm
        else:
            state.set_fast_mem_target(rng.randint(1000, 6000))
        if rng.random() < 0.01:
            state.interval_tick()
    state.assert_conserved()

    # (b) zero demotions while usage never exceeds the low watermark
    state = TieredMemState(params, hot_thr=3)
    for pid in range(total_pages):
        state.add_page(pid, Tier.FAST if pid < 3000 else Tier.SLOW)
    peak = state.fast_used
    for _ in range(5000):
        state.access_page(rng.randrange(total_pages), rng.randrange(2))
        state.run_promotion_queue()
        state.background_reclaim()
        peak = max(peak, state.fast_used)
    assert peak <= state.watermarks.low_wm
    assert state.counters.pm_de == 0
    assert state.counters.direct_reclaims == 0

    # (c) the published 0.8 coupling, exactly
    state = TieredMemState(params, hot_thr=3)
    assert state.set_fast_mem_target(1000) == Watermarks(800, 1000, 1000)


@criterion(4, "exact nearest-record queries at database scale")
def test_query_exactness_and_latency():
    rng = random.Random(SEED + 2)

    def rand_vec():
        return ConfigVector(
            pm_de=rng.randint(0, 50),
            pm_pr=rng.randint(0, 50),
            ai=rng.uniform(0, 8),
            pacc_fast=rng.randint(100, 100_000),
            pacc_slow=rng.randint(100, 100_000),
            prof_int=rng.choice([0.5, 1.0, 2.0]),
            hot_thr=rng.randint(2, 20),
            free_page_thr=rng.randint(0, 20),
            num_threads=rng.randint(1, 8),
        )

    seen, records = set(), []
    while len(records) < 10_000:
        cfg = rand_vec()
        if cfg.as_tuple() in seen:
            continue
        seen.add(cfg.as_tuple())
        t = rng.uniform(50, 500)
        records.append(ExecutionRecord(cfg, ((1.0, t), (0.9, t * 1.1))))
    db = PerfDatabase(records)

    probes = [rand_vec() for _ in range(10_000)]
    db.query_nearest(probes[0])  # build the index outside the timed loop
    agree = 0
    started = time.perf_counter()
    answers = [db.query_nearest(p) for p in probes]
    elapsed = time.perf_counter() - started
    for probe, fast in zip(probes, answers):
        if fast is db.scan_nearest(probe):
            agree += 1
    mean_ms = 1000.0 * elapsed / len(probes)
    print(f"  [agreement {agree}/{len(probes)}, mean query {mean_ms:.3f} ms]")
    assert agree == len(probes)
    assert mean_ms <= 5.0


@criterion(5, "model accuracy: self-consistency and the shrinking-size trend")
def test_accuracy_self_consistency_and_trend():
    spec = workgen.synthesize(STATIONARY)
    cfg = ConfigVector.from_target(STATIONARY)
    db = perfdb.build([cfg], TABLE_FRACTIONS)

    rows = tuner.evaluate_accuracy(spec, db, TABLE_FRACTIONS)
    for row in rows:
        assert row.error <= 1e-9, row

    perturbed_target = WorkloadTarget(
        pacc_fast=STATIONARY.pacc_fast,
        pacc_slow=STATIONARY.pacc_slow,
        pm_pr=STATIONARY.pm_pr,
        pm_de=STATIONARY.pm_de,
        ai=STATIONARY.ai * 1.1,
        hot_thr=STATIONARY.hot_thr,
        free_page_thr=STATIONARY.free_page_thr,
    )
    perturbed = workgen.synthesize(perturbed_target)
    rows = tuner.evaluate_accuracy(perturbed, db, TABLE_FRACTIONS)
    reduced = [r for r in rows if r.fm_fraction < 1.0]  # 0.99 down to 0.85
    assert any(r.error > 0 for r in reduced)
    for earlier, later in zip(reduced, reduced[1:]):
        assert later.error >= earlier.error - FLOAT_SLACK, (earlier, later)


def loop_db():
    return perfdb.build([ConfigVector.from_target(STATIONARY)], LOOP_FRACTIONS)


@criterion(6, "closed-loop compliance at tau=0.05 with memory actually saved")
def test_closed_loop_compliance():
    started = time.perf_counter()
    spec = workgen.synthesize(STATIONARY)
    trace = run_loop(spec, loop_db(), TunerConfig(tau=0.05, interval=1.0), horizon=20)
    summary = trace.summary()
    elapsed = time.perf_counter() - started
    print(
        f"  [overall pd {summary['overall_pd']:.4f}, margin "
        f"{summary['quantization_margin']:.4f}, avg saving {summary['avg_saving']:.3f}]"
    )
    assert summary["overall_pd"] <= 0.05 + summary["quantization_margin"]
    assert summary["final_fm_pages"] < summary["rss_fm_pages"]
    assert all(d.predicted_pd <= 0.05 for d in trace.decisions)
    assert elapsed < 120.0


@criterion(7, "loss-budget sweep: saving grows with tau, loss stays within it")
def test_tau_sweep_monotone():
    spec = workgen.synthesize(STATIONARY)
    db = loop_db()
    savings = []
    for tau in (0.05, 0.10, 0.15):
        trace = run_loop(spec, db, TunerConfig(tau=tau, interval=1.0), horizon=12)
        summary = trace.summary()
        assert summary["overall_pd"] <= tau + summary["quantization_margin"]
        savings.append(summary["avg_saving"])
    print(f"  [avg savings by tau: {[round(s, 4) for s in savings]}]")
    assert savings[0] <= savings[1] + FLOAT_SLACK
    assert savings[1] <= savings[2] + FLOAT_SLACK


@criterion(8, "cadence trade-off: faster tuning never saves or loses less")
def test_cadence_trade_off():
    spec = workgen.synthesize(STATIONARY)
    db = loop_db()
    coarse = run_loop(spec, db, TunerConfig(tau=0.05, interval=2.5), horizon=12)
    fine = run_loop(spec, db, TunerConfig(tau=0.05, interval=1.25), horizon=12)
    print(
        f"  [saving {coarse.cumulative_saving:.3f} -> {fine.cumulative_saving:.3f}, "
        f"pd {coarse.overall_pd:.4f} -> {fine.overall_pd:.4f}]"
    )
    assert fine.cumulative_saving >= coarse.cumulative_saving - FLOAT_SLACK
    assert fine.overall_pd >= coarse.overall_pd - FLOAT_SLACK


@criterion(9, "determinism and persistence: identical bytes, lossless round trip")
def test_determinism_and_persistence(tmp_path):
    grid = [
        ConfigVector.from_target(STATIONARY),
        ConfigVector(2, 3, 1.0, 400, 300, 1.0, 4, 5, 1),
    ]
    fractions = [1.0, 0.95, 0.9]
    paths = [tmp_path / "a.db", tmp_path / "b.db"]
    for path in paths:
        perfdb.build(grid, fractions, seed=SEED).save(path)
    digests = [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]
    assert digests[0] == digests[1]

    db = perfdb.build(grid, fractions, seed=SEED)
    db.save(paths[0])
    assert PerfDatabase.load(paths[0]) == db

    target_file = tmp_path / "target.json"
    target_file.write_text(
        '{"pacc_fast": 110, "pacc_slow": 1000, "pm_pr": 10, "pm_de": 10,'
        ' "ai": 2.0, "hot_thr": 11, "free_page_thr": 5}'
    )
    outs = [tmp_path / "run1", tmp_path / "run2"]
    for out in outs:
        assert cli.main(["run", "--target", str(target_file), "--out", str(out)]) == 0
    assert (outs[0] / "counters.csv").read_bytes() == (outs[1] / "counters.csv").read_bytes()
