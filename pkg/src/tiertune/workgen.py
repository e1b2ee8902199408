"""Micro-benchmark synthesis for the two-tier simulator.

A :class:`WorkloadTarget` names the per-interval figures a benchmark must
reproduce: fast/slow page accesses, promotion and demotion counts, and
arithmetic intensity. Planning turns the target into page groups and
per-thread access streams; :func:`execute` replays the plan through
:mod:`tiertune.tiersim` and, in guaranteed-count mode, lands exactly on the
requested counters.

The core trick is ordering. Pages slated for promotion start in the slow
tier and receive ``hot_thr`` accesses; pages slated for demotion start in
the fast tier, receive one access, and are handed the lowest page ids so a
single capacity shrink at the end of the measured interval reclaims exactly
them. Everything else gets ``hot_thr - 1`` accesses per page, one notch
below the promotion threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .tiersim import (
    IntervalReport,
    Tier,
    TierParams,
    TieredMemState,
    default_params,
)

GUARANTEED = "guaranteed"
PROMO_SHRINK = "promo-shrink"
MODES = (GUARANTEED, PROMO_SHRINK)

SPEC_FORMAT = "tiertune-workload"
SPEC_VERSION = 1


class InfeasibleTarget(ValueError):
    """Raised when a target cannot be realized by any plan."""


class InvalidHotThr(ValueError):
    """Raised when the promotion threshold is below 2."""


@dataclass(frozen=True)
class WorkloadTarget:
    """Per-interval figures the synthesized benchmark must reproduce.

    ``rss`` of 0 means the footprint is whatever the plan needs; a larger
    value pads with cold slow pages. ``prof_int`` and ``free_page_thr`` are
    carried into the simulator state and the database key.
    """

    pacc_fast: int
    pacc_slow: int
    pm_pr: int
    pm_de: int
    ai: float
    hot_thr: int
    free_page_thr: int = 0
    prof_int: float = 1.0
    num_threads: int = 1
    rss: int = 0

    def validate(self) -> None:
        if self.hot_thr < 2:
            raise InvalidHotThr("hot_thr must be >= 2")
        if min(self.pacc_fast, self.pacc_slow, self.pm_pr, self.pm_de) < 0:
            raise InfeasibleTarget("counts must be >= 0")
        if self.ai < 0:
            raise InfeasibleTarget("arithmetic intensity must be >= 0")
        if self.free_page_thr < 0 or self.rss < 0:
            raise InfeasibleTarget("free_page_thr and rss must be >= 0")
        if self.num_threads < 1:
            raise InfeasibleTarget("num_threads must be >= 1")
        if self.prof_int <= 0:
            raise InfeasibleTarget("prof_int must be > 0")
        if self.pacc_fast < self.pm_de:
            raise InfeasibleTarget("pacc_fast must cover one access per demoted page")
        if self.pacc_slow < self.pm_pr * self.hot_thr:
            raise InfeasibleTarget("pacc_slow must cover hot_thr accesses per promoted page")


@dataclass(frozen=True)
class PageGroup:
    """A run of consecutively numbered pages with one access plan."""

    name: str
    tier: Tier
    start_id: int
    count: int
    accesses_per_page: int
    thread: int  # -1 for groups outside any thread stream (padding)

    @property
    def page_ids(self) -> range:
        return range(self.start_id, self.start_id + self.count)


@dataclass
class WorkloadSpec:
    """A fully planned benchmark: page groups, capacities, thread streams.

    ``thread_streams`` holds one run-length list per thread; each entry is
    ``(page_id, ai_ops, repeat)``. ``init_fast_capacity`` is the fast-size
    target during placement and ``post_init_capacity`` the target installed
    for the measured interval (its timing depends on ``mode``).
    """

    target: WorkloadTarget
    page_groups: list[PageGroup]
    init_fast_capacity: int
    post_init_capacity: int
    ai_ops_per_access: int
    thread_streams: list[list[tuple[int, int, int]]]
    mode: str = GUARANTEED
    version: int = SPEC_VERSION

    @property
    def total_pages(self) -> int:
        return sum(g.count for g in self.page_groups)

    @property
    def rss(self) -> int:
        return self.total_pages

    @property
    def np_fast(self) -> int:
        return sum(g.count for g in self.page_groups if g.name == "np_fast")

    @property
    def np_slow(self) -> int:
        return sum(g.count for g in self.page_groups if g.name == "np_slow")

    @property
    def promo_candidates(self) -> int:
        return sum(g.count for g in self.page_groups if g.name == "promo")

    @property
    def demo_candidates(self) -> int:
        return sum(g.count for g in self.page_groups if g.name == "demo")

    @property
    def per_page_access_plan(self) -> dict[str, int]:
        plan: dict[str, int] = {}
        for g in self.page_groups:
            plan.setdefault(g.name, g.accesses_per_page)
        return plan

    # -- serialization ------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "format": SPEC_FORMAT,
            "version": self.version,
            "mode": self.mode,
            "target": asdict(self.target),
            "page_groups": [
                {
                    "name": g.name,
                    "tier": g.tier.value,
                    "start_id": g.start_id,
                    "count": g.count,
                    "accesses_per_page": g.accesses_per_page,
                    "thread": g.thread,
                }
                for g in self.page_groups
            ],
            "capacities": {
                "init_fast": self.init_fast_capacity,
                "post_init": self.post_init_capacity,
            },
            "ai_ops_per_access": self.ai_ops_per_access,
            "thread_streams": [
                [[pid, ops, rep] for pid, ops, rep in stream]
                for stream in self.thread_streams
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "WorkloadSpec":
        doc = json.loads(text)
        if doc.get("format") != SPEC_FORMAT:
            raise ValueError("not a workload document")
        if doc.get("version") != SPEC_VERSION:
            raise ValueError(f"unsupported workload version {doc.get('version')}")
        target = WorkloadTarget(**doc["target"])
        groups = [
            PageGroup(
                name=g["name"],
                tier=Tier(g["tier"]),
                start_id=g["start_id"],
                count=g["count"],
                accesses_per_page=g["accesses_per_page"],
                thread=g["thread"],
            )
            for g in doc["page_groups"]
        ]
        streams = [
            [(pid, ops, rep) for pid, ops, rep in stream]
            for stream in doc["thread_streams"]
        ]
        return cls(
            target=target,
            page_groups=groups,
            init_fast_capacity=doc["capacities"]["init_fast"],
            post_init_capacity=doc["capacities"]["post_init"],
            ai_ops_per_access=doc["ai_ops_per_access"],
            thread_streams=streams,
            mode=doc["mode"],
            version=doc["version"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WorkloadSpec":
        return cls.from_json(Path(path).read_text())


# ----------------------------------------------------------------------
# planning arithmetic

def adjust_pacc(target: WorkloadTarget) -> tuple[int, int]:
    """Remove migration-owned accesses from the access goals.

    Each demoted page is accessed once in fast memory and each promoted page
    ``hot_thr`` times in slow memory; what remains must come from plain page
    groups.
    """
    target.validate()
    adj_fast = target.pacc_fast - target.pm_de
    adj_slow = target.pacc_slow - target.pm_pr * target.hot_thr
    if adj_fast < 0 or adj_slow < 0:
        raise InfeasibleTarget("migration accesses exceed the access goals")
    return adj_fast, adj_slow


def split_accesses(adjusted: int, hot_thr: int) -> tuple[int, int]:
    """Number of (hot_thr - 1)-access pages plus leftover accesses.

    The leftover goes to one residual page, always below the promotion
    threshold.
    """
    if hot_thr < 2:
        raise InvalidHotThr("hot_thr must be >= 2")
    return divmod(adjusted, hot_thr - 1)


def plan_pages(target: WorkloadTarget) -> tuple[int, int]:
    """Pages needed per tier for the non-migrating access groups."""
    adj_fast, adj_slow = adjust_pacc(target)
    np_fast, _ = split_accesses(adj_fast, target.hot_thr)
    np_slow, _ = split_accesses(adj_slow, target.hot_thr)
    return np_fast, np_slow


def plan_migrations(target: WorkloadTarget, mode: str = GUARANTEED) -> tuple[int, int, int, int]:
    """Migration groups and capacity schedule.

    Returns ``(promo_candidates, demo_candidates, init_fast_capacity,
    post_init_capacity)``. The initial fast size covers every page plus
    ``free_page_thr`` headroom. In guaranteed-count mode the post-interval
    target equals the fast occupancy after all planned promotions minus
    ``pm_de``, so one daemon pass demotes exactly the demotion candidates.
    Promo-shrink mode instead reduces the initial size by ``pm_pr``, which
    generally leaves too much headroom to force any demotions at all; it
    exists to expose that gap empirically.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    spec = synthesize(target, mode=mode)
    return (
        spec.promo_candidates,
        spec.demo_candidates,
        spec.init_fast_capacity,
        spec.post_init_capacity,
    )


def _share(total: int, parts: int) -> list[int]:
    """Even split with the remainder spread over the first parts."""
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def synthesize(target: WorkloadTarget, mode: str = GUARANTEED) -> WorkloadSpec:
    """Plan a benchmark realizing ``target`` within one profiling interval.

    Page and access shares are divided evenly across threads. Demotion
    candidates take the lowest page ids so the end-of-interval reclaim pass
    selects exactly them as coldest.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    target.validate()
    t = target.num_threads
    hot_thr = target.hot_thr
    fast_shares = _share(target.pacc_fast, t)
    slow_shares = _share(target.pacc_slow, t)
    promo_shares = _share(target.pm_pr, t)
    demo_shares = _share(target.pm_de, t)

    plans = []
    for i in range(t):
        adj_fast = fast_shares[i] - demo_shares[i]
        adj_slow = slow_shares[i] - promo_shares[i] * hot_thr
        if adj_fast < 0 or adj_slow < 0:
            raise InfeasibleTarget(
                f"thread {i} share infeasible after migration adjustment"
            )
        npf, resf = split_accesses(adj_fast, hot_thr)
        nps, ress = split_accesses(adj_slow, hot_thr)
        plans.append((npf, resf, nps, ress))

    groups: list[PageGroup] = []
    next_id = 0

    def alloc(name: str, tier: Tier, count: int, accesses: int, thread: int) -> None:
        nonlocal next_id
        if count <= 0:
            return
        groups.append(PageGroup(name, tier, next_id, count, accesses, thread))
        next_id += count

    # Demotion candidates first: lowest ids win cold-selection ties.
    for i in range(t):
        alloc("demo", Tier.FAST, demo_shares[i], 1, i)
    for i, (npf, resf, _, _) in enumerate(plans):
        alloc("np_fast", Tier.FAST, npf, hot_thr - 1, i)
        alloc("np_fast_residual", Tier.FAST, 1 if resf else 0, resf, i)
    for i, (_, _, nps, ress) in enumerate(plans):
        alloc("np_slow", Tier.SLOW, nps, hot_thr - 1, i)
        alloc("np_slow_residual", Tier.SLOW, 1 if ress else 0, ress, i)
    for i in range(t):
        alloc("promo", Tier.SLOW, promo_shares[i], hot_thr, i)

    placed = sum(g.count for g in groups)
    if target.rss:
        if target.rss < placed:
            raise InfeasibleTarget(
                f"rss {target.rss} smaller than the {placed} pages the plan needs"
            )
        alloc("padding", Tier.SLOW, target.rss - placed, 0, -1)

    fast_placed = sum(g.count for g in groups if g.tier is Tier.FAST)
    total = sum(g.count for g in groups)
    init_cap = total + target.free_page_thr
    occupancy_after_promotions = fast_placed + target.pm_pr
    if mode == GUARANTEED:
        post_cap = max(1, occupancy_after_promotions - target.pm_de)
    else:
        post_cap = max(1, init_cap - target.pm_pr)

    ai_ops = int(round(target.ai))
    streams: list[list[tuple[int, int, int]]] = [[] for _ in range(t)]
    for g in groups:
        if g.thread < 0 or g.accesses_per_page == 0:
            continue
        stream = streams[g.thread]
        for pid in g.page_ids:
            stream.append((pid, ai_ops, g.accesses_per_page))

    return WorkloadSpec(
        target=target,
        page_groups=groups,
        init_fast_capacity=init_cap,
        post_init_capacity=post_cap,
        ai_ops_per_access=ai_ops,
        thread_streams=streams,
        mode=mode,
    )


# ----------------------------------------------------------------------
# execution

@dataclass
class RunResult:
    state: TieredMemState
    init_report: IntervalReport
    report: IntervalReport
    exec_time: float


def build_state(
    spec: WorkloadSpec,
    params: TierParams | None = None,
    fm_fraction: float = 1.0,
) -> TieredMemState:
    """Fresh simulator state sized for ``spec`` at a fast-memory fraction.

    ``params`` supplies the cost model; capacities are derived from the
    plan. The raw fast capacity always covers the full-size layout so the
    fraction is applied purely through watermarks.
    """
    if not 0.0 < fm_fraction <= 1.0:
        raise ValueError("fm_fraction must be in (0, 1]")
    fast_cap = max(1, spec.init_fast_capacity)
    slow_cap = max(1, spec.total_pages)
    if params is None:
        params = default_params(fast_cap, slow_cap)
    else:
        params = replace(params, fast_capacity=fast_cap, slow_capacity=slow_cap)
    state = TieredMemState(
        params,
        hot_thr=spec.target.hot_thr,
        prof_int=spec.target.prof_int,
        free_page_thr=spec.target.free_page_thr,
        num_threads=spec.target.num_threads,
    )
    state.set_fast_mem_target(max(1, round(fm_fraction * spec.init_fast_capacity)))
    return state


def _merged_stream(spec: WorkloadSpec):
    """Round-robin interleave of the per-thread streams, one access per turn.

    Single-thread specs keep their run-length blocks intact; promotion
    outcomes are identical either way because a block belongs to one page.
    """
    streams = [list(s) for s in spec.thread_streams if s]
    if len(streams) == 1:
        yield from streams[0]
        return
    streams = [[(p, o, r) for p, o, r in s if r > 0] for s in streams]
    cursors = [0] * len(streams)
    consumed = [0] * len(streams)
    live = [i for i, s in enumerate(streams) if s]
    while live:
        still_live = []
        for idx in live:
            pid, ops, rep = streams[idx][cursors[idx]]
            yield pid, ops, 1
            consumed[idx] += 1
            if consumed[idx] == rep:
                consumed[idx] = 0
                cursors[idx] += 1
            if cursors[idx] < len(streams[idx]):
                still_live.append(idx)
        live = still_live


def execute(
    spec: WorkloadSpec,
    state: TieredMemState | None = None,
    params: TierParams | None = None,
    fm_fraction: float = 1.0,
) -> RunResult:
    """Replay a planned benchmark and report the measured interval.

    The run has two phases. Initialization touches every page once
    (first-touch placement) and is closed off by an interval boundary; the
    main phase replays the thread streams with promotions pumped after every
    access, applies the capacity schedule for ``mode``, runs one reclaim
    pass, and closes the measured interval. The returned ``exec_time`` is
    the cost model applied to that interval's snapshot.
    """
    if not 0.0 < fm_fraction <= 1.0:
        raise ValueError("fm_fraction must be in (0, 1]")
    if state is None:
        state = build_state(spec, params, fm_fraction)

    for group in spec.page_groups:
        for pid in group.page_ids:
            state.add_page(pid, group.tier)
            state.access_run(pid, 0, 1)
    if spec.mode == PROMO_SHRINK:
        state.set_fast_mem_target(max(1, round(fm_fraction * spec.post_init_capacity)))
    init_report = state.interval_tick()

    for pid, ops, rep in _merged_stream(spec):
        state.access_run(pid, ops, rep, pump_promotions=True)
    if spec.mode == GUARANTEED:
        state.set_fast_mem_target(max(1, round(fm_fraction * spec.post_init_capacity)))
    state.background_reclaim()
    report = state.interval_tick()
    return RunResult(state, init_report, report, report.exec_time)


def run_target(
    target: WorkloadTarget,
    params: TierParams | None = None,
    fm_fraction: float = 1.0,
    mode: str = GUARANTEED,
) -> RunResult:
    """Synthesize and execute in one step."""
    return execute(synthesize(target, mode=mode), params=params, fm_fraction=fm_fraction)


__all__ = [
    "GUARANTEED",
    "InfeasibleTarget",
    "InvalidHotThr",
    "MODES",
    "PROMO_SHRINK",
    "PageGroup",
    "RunResult",
    "WorkloadSpec",
    "WorkloadTarget",
    "adjust_pacc",
    "build_state",
    "execute",
    "plan_migrations",
    "plan_pages",
    "run_target",
    "split_accesses",
    "synthesize",
]
