"""Deterministic two-tier memory simulator.

Models a small fast tier and a large slow tier managed by a hot-threshold
page-migration system: a slow page that collects ``hot_thr`` accesses within
one profiling interval is queued for promotion, and a background daemon
demotes the coldest fast pages whenever fast usage exceeds the low watermark.
A blocking direct-reclaim path exists for allocations that cannot wait for
the daemon.

Watermarks are expressed as bounds on *used* fast pages rather than on free
pages; at fixed capacity the two views are equivalent, and the used view is
how sizing targets are assigned. They are the only trigger for page
reclamation.

Everything is a plain deterministic state machine: the same page layout and
access stream reproduce counters and simulated time bit for bit. A single
state instance must not be shared across threads; separate instances are
independent.
"""

from __future__ import annotations

import csv
import heapq
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable


class UnknownPage(KeyError):
    """Raised when an access names a page that was never allocated."""


class DuplicatePage(ValueError):
    """Raised when a page id is allocated twice."""


class InvalidTarget(ValueError):
    """Raised for a fast-memory size target outside [1, fast_capacity]."""


class TierFull(RuntimeError):
    """Raised when the slow tier cannot absorb another page."""


class Tier(str, Enum):
    FAST = "fast"
    SLOW = "slow"


@dataclass(frozen=True)
class TierParams:
    """Hardware and cost-model parameters.

    Latencies and costs are in abstract time units per event; ``ops_rate``
    converts arithmetic operations into time.
    """

    fast_capacity: int                    # pages
    slow_capacity: int                    # pages
    lat_fast: float = 1.0                 # time units per fast access
    lat_slow: float = 3.0                 # time units per slow access
    mig_cost: float = 8.0                 # time units per migrated page
    contention_beta: float = 0.5          # bandwidth-competition weight, >= 0
    direct_reclaim_penalty: float = 50.0  # time units per blocking reclaim
    ops_rate: float = 100.0               # arithmetic ops per time unit

    def __post_init__(self) -> None:
        if self.fast_capacity < 1 or self.slow_capacity < 1:
            raise ValueError("tier capacities must be >= 1 page")
        if not (self.lat_slow >= self.lat_fast > 0):
            raise ValueError("need lat_slow >= lat_fast > 0")
        if self.mig_cost < 0 or self.contention_beta < 0:
            raise ValueError("mig_cost and contention_beta must be >= 0")
        if self.ops_rate <= 0:
            raise ValueError("ops_rate must be > 0")


def default_params(fast_capacity: int, slow_capacity: int) -> TierParams:
    """Default cost model with caller-chosen capacities."""
    return TierParams(fast_capacity=fast_capacity, slow_capacity=slow_capacity)


@dataclass(frozen=True)
class Watermarks:
    """Reclamation thresholds as used-fast-page bounds, min <= low <= high.

    Usage above ``low_wm`` triggers the background daemon, which demotes
    down to ``high_wm``. ``min_wm`` is the blocking direct-reclaim bound.
    """

    min_wm: int
    low_wm: int
    high_wm: int

    def __post_init__(self) -> None:
        if not (0 <= self.min_wm <= self.low_wm <= self.high_wm):
            raise ValueError("watermarks must satisfy 0 <= min <= low <= high")


@dataclass(slots=True)
class PageState:
    page_id: int
    tier: Tier
    interval_access_count: int = 0  # reset at every profiling-interval boundary
    lifetime_access_count: int = 0


@dataclass
class Counters:
    """Monotone event counters plus the simulated clock."""

    pacc_fast: int = 0
    pacc_slow: int = 0
    pm_pr: int = 0
    pm_de: int = 0
    mig_failures: int = 0
    direct_reclaims: int = 0
    ops_executed: int = 0
    sim_time: float = 0.0

    def reset(self) -> None:
        self.pacc_fast = self.pacc_slow = 0
        self.pm_pr = self.pm_de = 0
        self.mig_failures = self.direct_reclaims = 0
        self.ops_executed = 0
        self.sim_time = 0.0


@dataclass(frozen=True)
class IntervalReport:
    """Interval-scoped counter snapshot emitted by :meth:`TieredMemState.interval_tick`."""

    interval_index: int
    fm_target: int  # low watermark in force when the interval closed
    pacc_fast: int
    pacc_slow: int
    pm_de: int
    pm_pr: int
    mig_failures: int
    direct_reclaims: int
    ops_executed: int
    exec_time: float

    @property
    def accesses(self) -> int:
        return self.pacc_fast + self.pacc_slow


# Fixed CSV schema for counter snapshots; header is mandatory.
CSV_COLUMNS = (
    "interval_index",
    "fm_target",
    "pacc_fast",
    "pacc_slow",
    "pm_de",
    "pm_pr",
    "mig_failures",
    "direct_reclaims",
    "exec_time",
)


def report_row(report: IntervalReport) -> list:
    return [getattr(report, name) for name in CSV_COLUMNS]


def write_reports_csv(reports: Iterable[IntervalReport], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow(report_row(rep))


def exec_time_model(snapshot, params: TierParams) -> float:
    """Additive execution-time estimate for one interval snapshot.

    Three effects are combined: raw compute time, tier access latencies
    inflated by migration/access bandwidth competition, and per-event
    migration and blocking-reclaim costs. ``snapshot`` may be any object
    carrying the interval counter fields.
    """
    accesses = snapshot.pacc_fast + snapshot.pacc_slow
    migrations = snapshot.pm_pr + snapshot.pm_de
    mig_ratio = migrations / max(1, accesses)
    access_time = (
        snapshot.pacc_fast * params.lat_fast + snapshot.pacc_slow * params.lat_slow
    ) * (1.0 + params.contention_beta * mig_ratio)
    return (
        snapshot.ops_executed / params.ops_rate
        + access_time
        + migrations * params.mig_cost
        + snapshot.direct_reclaims * params.direct_reclaim_penalty
    )


class TieredMemState:
    """Mutable simulator state: pages, watermarks, daemon queues, counters.

    ``hot_thr`` is the number of accesses within one profiling interval that
    marks a slow page hot; ``free_page_thr`` is carried for workload sizing
    and telemetry. ``persist_hotness`` keeps per-page interval counts across
    interval boundaries (multi-interval hotness variant, off by default).
    """

    def __init__(
        self,
        params: TierParams,
        hot_thr: int,
        prof_int: float = 1.0,
        free_page_thr: int = 0,
        num_threads: int = 1,
        rng_seed: int = 0,
        persist_hotness: bool = False,
    ) -> None:
        if hot_thr < 2:
            raise ValueError("hot_thr must be >= 2")
        if prof_int <= 0:
            raise ValueError("prof_int must be > 0")
        self.params = params
        self.hot_thr = hot_thr
        self.prof_int = prof_int
        self.free_page_thr = free_page_thr
        self.num_threads = num_threads
        self.rng_seed = rng_seed
        self.persist_hotness = persist_hotness

        cap = params.fast_capacity
        self.watermarks = Watermarks(round(0.8 * cap), cap, cap)
        self.pages: dict[int, PageState] = {}
        self.fast_used = 0
        self.slow_used = 0
        self.counters = Counters()
        self._interval = Counters()
        self._interval_index = 0
        self._promo_queue: deque[int] = deque()
        self._queued: set[int] = set()
        self._fast_ids: set[int] = set()
        self.last_report: IntervalReport | None = None

    # ------------------------------------------------------------------
    # allocation

    def add_page(self, page_id: int, preferred: Tier = Tier.FAST) -> Tier:
        """Allocate a page, first-touch style.

        A fast-preferred page spills to the slow tier when fast usage has
        reached the low watermark.
        """
        if page_id in self.pages:
            raise DuplicatePage(f"page {page_id} already allocated")
        tier = preferred
        if tier is Tier.FAST and self.fast_used >= self.watermarks.low_wm:
            tier = Tier.SLOW
        if tier is Tier.SLOW and self.slow_used >= self.params.slow_capacity:
            raise TierFull("slow tier has no free pages")
        self.pages[page_id] = PageState(page_id, tier)
        if tier is Tier.FAST:
            self.fast_used += 1
            self._fast_ids.add(page_id)
        else:
            self.slow_used += 1
        return tier

    # ------------------------------------------------------------------
    # accesses

    def access_page(self, page_id: int, ai_ops: int = 0) -> float:
        """Access a page once, returning the time charged.

        The charge is the tier latency plus ``ai_ops / ops_rate`` compute
        time. A slow page whose interval count reaches ``hot_thr`` is queued
        for promotion; the queue is drained separately by
        :meth:`run_promotion_queue`.
        """
        return self.access_run(page_id, ai_ops, 1)

    def access_run(
        self,
        page_id: int,
        ai_ops: int = 0,
        count: int = 1,
        pump_promotions: bool = False,
    ) -> float:
        """Access a page ``count`` times in a row.

        Equivalent to ``count`` calls of :meth:`access_page`; with
        ``pump_promotions`` the promotion queue is drained the moment the
        page crosses the hot threshold, so later accesses in the same run
        land in the page's new tier.
        """
        page = self.pages.get(page_id)
        if page is None:
            raise UnknownPage(f"page {page_id} does not exist")
        if count < 0:
            raise ValueError("count must be >= 0")
        params = self.params
        hot_thr = self.hot_thr
        compute = ai_ops / params.ops_rate
        elapsed = 0.0
        remaining = count
        while remaining > 0:
            if page.tier is Tier.SLOW and page.interval_access_count < hot_thr:
                step = min(remaining, hot_thr - page.interval_access_count)
            else:
                step = remaining
            page.interval_access_count += step
            page.lifetime_access_count += step
            if page.tier is Tier.FAST:
                self.counters.pacc_fast += step
                self._interval.pacc_fast += step
                elapsed += step * (params.lat_fast + compute)
            else:
                self.counters.pacc_slow += step
                self._interval.pacc_slow += step
                elapsed += step * (params.lat_slow + compute)
            ops = step * ai_ops
            self.counters.ops_executed += ops
            self._interval.ops_executed += ops
            if (
                page.tier is Tier.SLOW
                and page.interval_access_count == hot_thr
                and page_id not in self._queued
            ):
                self._promo_queue.append(page_id)
                self._queued.add(page_id)
                if pump_promotions:
                    self.run_promotion_queue()
            remaining -= step
        self.counters.sim_time += elapsed
        self._interval.sim_time += elapsed
        return elapsed

    # ------------------------------------------------------------------
    # migration machinery

    def run_promotion_queue(self) -> int:
        """Attempt every queued promotion; return how many succeeded.

        A promotion needs headroom below the low watermark. Without it the
        page stays in the slow tier with its count intact and the failure
        counter is bumped.
        """
        promoted = 0
        low_wm = self.watermarks.low_wm
        while self._promo_queue:
            page_id = self._promo_queue.popleft()
            self._queued.discard(page_id)
            page = self.pages[page_id]
            if page.tier is not Tier.SLOW:
                continue
            if self.fast_used < low_wm:
                page.tier = Tier.FAST
                self.fast_used += 1
                self.slow_used -= 1
                self._fast_ids.add(page_id)
                self.counters.pm_pr += 1
                self._interval.pm_pr += 1
                self._charge(self.params.mig_cost)
                promoted += 1
            else:
                self.counters.mig_failures += 1
                self._interval.mig_failures += 1
        return promoted

    def background_reclaim(self) -> int:
        """One daemon pass: demote coldest fast pages down to the high watermark.

        Triggers only when usage exceeds the low watermark; never blocks the
        application (no penalty charged). Returns the demotion count.
        """
        if self.fast_used <= self.watermarks.low_wm:
            return 0
        need = self.fast_used - self.watermarks.high_wm
        if need <= 0:
            return 0
        self._demote_coldest(need)
        return need

    def direct_reclaim(self) -> float:
        """Blocking reclaim: demote down to the min watermark, charging a penalty.

        A no-op returning 0 when usage is within the min bound. Used by
        callers whose allocation or promotion cannot otherwise proceed.
        """
        need = self.fast_used - self.watermarks.min_wm
        if need <= 0:
            return 0.0
        charged = self._demote_coldest(need)
        charged += self.params.direct_reclaim_penalty
        self.counters.direct_reclaims += 1
        self._interval.direct_reclaims += 1
        self.counters.sim_time += self.params.direct_reclaim_penalty
        self._interval.sim_time += self.params.direct_reclaim_penalty
        return charged

    def _demote_coldest(self, n: int) -> float:
        """Demote the ``n`` coldest fast pages (interval count, then page id)."""
        if self.slow_used + n > self.params.slow_capacity:
            raise TierFull("slow tier cannot absorb demoted pages")
        pages = self.pages
        victims = heapq.nsmallest(
            n,
            self._fast_ids,
            key=lambda pid: (pages[pid].interval_access_count, pid),
        )
        charged = 0.0
        for pid in victims:
            page = pages[pid]
            page.tier = Tier.SLOW
            self._fast_ids.discard(pid)
            self.fast_used -= 1
            self.slow_used += 1
            self.counters.pm_de += 1
            self._interval.pm_de += 1
            charged += self._charge(self.params.mig_cost)
        return charged

    def _charge(self, cost: float) -> float:
        self.counters.sim_time += cost
        self._interval.sim_time += cost
        return cost

    # ------------------------------------------------------------------
    # sizing control

    def set_fast_mem_target(self, new_fm: int, band: int = 0) -> Watermarks:
        """Install watermarks bounding usable fast memory to ``new_fm`` pages.

        low = high = ``new_fm`` and min = round(0.8 * new_fm), so one daemon
        pass reclaims down to exactly the target. ``band`` > 0 reopens a
        hysteresis gap by lifting the high watermark (experimental knob).
        From this point the watermarks are the only reclamation trigger;
        raising the target immediately restores promotion headroom.
        """
        if not 1 <= new_fm <= self.params.fast_capacity:
            raise InvalidTarget(
                f"fast-memory target {new_fm} outside [1, {self.params.fast_capacity}]"
            )
        if band < 0:
            raise InvalidTarget("band must be >= 0")
        high = min(new_fm + band, self.params.fast_capacity)
        self.watermarks = Watermarks(round(0.8 * new_fm), new_fm, high)
        return self.watermarks

    # ------------------------------------------------------------------
    # profiling intervals

    def interval_tick(self) -> IntervalReport:
        """Close the current profiling interval.

        Emits the interval-scoped snapshot (with its modeled execution
        time), then zeroes the interval counters and every page's interval
        access count. Pending promotion requests survive the boundary.
        """
        iv = self._interval
        report = IntervalReport(
            interval_index=self._interval_index,
            fm_target=self.watermarks.low_wm,
            pacc_fast=iv.pacc_fast,
            pacc_slow=iv.pacc_slow,
            pm_de=iv.pm_de,
            pm_pr=iv.pm_pr,
            mig_failures=iv.mig_failures,
            direct_reclaims=iv.direct_reclaims,
            ops_executed=iv.ops_executed,
            exec_time=exec_time_model(iv, self.params),
        )
        iv.reset()
        if not self.persist_hotness:
            for page in self.pages.values():
                page.interval_access_count = 0
        self._interval_index += 1
        self.last_report = report
        return report

    # ------------------------------------------------------------------
    # introspection

    @property
    def total_pages(self) -> int:
        return len(self.pages)

    def pending_promotions(self) -> int:
        return len(self._promo_queue)

    def assert_conserved(self) -> None:
        """Check that no page was duplicated or lost (debug aid for tests)."""
        fast = sum(1 for p in self.pages.values() if p.tier is Tier.FAST)
        slow = len(self.pages) - fast
        if fast != self.fast_used or slow != self.slow_used:
            raise AssertionError(
                f"tier accounting drifted: fast {fast} vs {self.fast_used}, "
                f"slow {slow} vs {self.slow_used}"
            )
        if self._fast_ids != {p.page_id for p in self.pages.values() if p.tier is Tier.FAST}:
            raise AssertionError("fast-page index out of sync")


__all__ = [
    "CSV_COLUMNS",
    "Counters",
    "DuplicatePage",
    "IntervalReport",
    "InvalidTarget",
    "PageState",
    "Tier",
    "TierFull",
    "TierParams",
    "TieredMemState",
    "UnknownPage",
    "Watermarks",
    "default_params",
    "exec_time_model",
    "report_row",
    "write_reports_csv",
]
