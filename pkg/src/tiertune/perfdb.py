"""Performance database keyed by 9-element configuration vectors.

Each record pairs a configuration vector with the execution times of its
synthesized benchmark across a set of fast-memory fractions. Queries return
the record whose vector is nearest in z-score-normalized Euclidean distance;
a KD-tree accelerates the search but the final candidate selection reuses
the same arithmetic as the brute-force scan, so both paths agree exactly.

The on-disk format is line-oriented: a JSON header carrying the version,
normalization statistics, and build metadata, followed by one JSON record
per line in lexicographic key order (byte-reproducible builds).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .tiersim import TierParams
from .workgen import (
    GUARANTEED,
    InfeasibleTarget,
    InvalidHotThr,
    WorkloadTarget,
    execute,
    synthesize,
)

DB_FORMAT = "tiertune-perfdb"
DB_VERSION = 1

CONFIG_FIELDS = (
    "pm_de",
    "pm_pr",
    "ai",
    "pacc_fast",
    "pacc_slow",
    "prof_int",
    "hot_thr",
    "free_page_thr",
    "num_threads",
)


class EmptyDatabase(LookupError):
    """Raised when querying a database with no records."""


class MalformedRecord(ValueError):
    """Raised when a record violates its sample invariants."""


class ParseError(ValueError):
    """Raised for unreadable database files; carries the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class VersionError(ValueError):
    """Raised when a database file declares an unsupported version."""


@dataclass(frozen=True)
class ConfigVector:
    """Database key, ordered [pm_de, pm_pr, ai, pacc_fast, pacc_slow,
    prof_int, hot_thr, free_page_thr, num_threads]."""

    pm_de: float
    pm_pr: float
    ai: float
    pacc_fast: float
    pacc_slow: float
    prof_int: float
    hot_thr: float
    free_page_thr: float
    num_threads: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        if not all(np.isfinite(values)):
            raise ValueError("configuration components must be finite")
        if min(values) < 0:
            raise ValueError("configuration components must be >= 0")
        if self.hot_thr < 2:
            raise ValueError("hot_thr must be >= 2")
        if self.num_threads < 1:
            raise ValueError("num_threads must be >= 1")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in CONFIG_FIELDS)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    def to_target(self, rss: int = 0) -> WorkloadTarget:
        return WorkloadTarget(
            pacc_fast=int(round(self.pacc_fast)),
            pacc_slow=int(round(self.pacc_slow)),
            pm_pr=int(round(self.pm_pr)),
            pm_de=int(round(self.pm_de)),
            ai=float(self.ai),
            hot_thr=int(round(self.hot_thr)),
            free_page_thr=int(round(self.free_page_thr)),
            prof_int=float(self.prof_int),
            num_threads=int(round(self.num_threads)),
            rss=rss,
        )

    @classmethod
    def from_target(cls, target: WorkloadTarget) -> "ConfigVector":
        return cls(
            pm_de=target.pm_de,
            pm_pr=target.pm_pr,
            ai=target.ai,
            pacc_fast=target.pacc_fast,
            pacc_slow=target.pacc_slow,
            prof_int=target.prof_int,
            hot_thr=target.hot_thr,
            free_page_thr=target.free_page_thr,
            num_threads=target.num_threads,
        )


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean and standard deviation of the stored configs.

    Constant dimensions get a std of 1 so z-scoring never divides by zero.
    """

    mean: tuple[float, ...]
    std: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(s <= 0 for s in self.std):
            raise ValueError("std components must be > 0")

    @classmethod
    def from_configs(cls, configs) -> "NormStats":
        matrix = np.array([c.as_tuple() for c in configs])
        if matrix.size == 0:
            n = len(CONFIG_FIELDS)
            return cls(tuple([0.0] * n), tuple([1.0] * n))
        mean = matrix.mean(axis=0)
        std = matrix.std(axis=0)
        std[std == 0.0] = 1.0
        return cls(tuple(mean.tolist()), tuple(std.tolist()))


@dataclass(frozen=True)
class ExecutionRecord:
    """One configuration's (fm_fraction -> execution time) curve.

    Samples are sorted descending by fraction, fractions are unique, and the
    full-size sample (fraction 1.0) must be present.
    """

    config: ConfigVector
    samples: tuple[tuple[float, float], ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        fractions = [f for f, _ in self.samples]
        if not fractions:
            raise MalformedRecord("record has no samples")
        if any(not 0.0 < f <= 1.0 for f in fractions):
            raise MalformedRecord("fm fractions must lie in (0, 1]")
        if len(set(fractions)) != len(fractions):
            raise MalformedRecord("fm fractions must be unique")
        if sorted(fractions, reverse=True) != fractions:
            raise MalformedRecord("samples must be sorted descending by fraction")
        if 1.0 not in fractions:
            raise MalformedRecord("record must include the fraction-1.0 sample")

    def time_at(self, fraction: float, tol: float = 1e-12) -> float:
        for f, t in self.samples:
            if abs(f - fraction) <= tol:
                return t
        raise MalformedRecord(f"no sample at fraction {fraction}")


def loss_curve(record: ExecutionRecord) -> list[tuple[float, float]]:
    """Relative slowdown versus the full-size sample, per fraction.

    The fraction-1.0 entry is exactly 0 by construction.
    """
    baseline = record.time_at(1.0)
    if baseline <= 0:
        raise MalformedRecord("full-size sample must have positive time")
    return [(f, (t - baseline) / baseline) for f, t in record.samples]


def params_hash(params: TierParams) -> str:
    blob = json.dumps(
        {
            "lat_fast": params.lat_fast,
            "lat_slow": params.lat_slow,
            "mig_cost": params.mig_cost,
            "contention_beta": params.contention_beta,
            "direct_reclaim_penalty": params.direct_reclaim_penalty,
            "ops_rate": params.ops_rate,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class PerfDatabase:
    """Immutable record store with exact nearest-configuration queries."""

    def __init__(
        self,
        records: list[ExecutionRecord],
        seed: int = 0,
        cost_hash: str = "",
        mode: str = GUARANTEED,
        skipped: list[dict] | None = None,
    ):
        self.records = sorted(records, key=lambda r: r.config.as_tuple())
        self.seed = seed
        self.cost_hash = cost_hash
        self.mode = mode
        self.skipped = skipped or []
        self._matrix: np.ndarray | None = None
        self._zmatrix: np.ndarray | None = None
        self._tree: cKDTree | None = None
        self.norm_stats = NormStats.from_configs([r.config for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PerfDatabase):
            return NotImplemented
        return (
            self.records == other.records
            and self.seed == other.seed
            and self.cost_hash == other.cost_hash
            and self.mode == other.mode
            and self.skipped == other.skipped
        )

    # -- normalization and indexing ------------------------------------

    @property
    def norm_mean(self) -> np.ndarray:
        return np.array(self.norm_stats.mean, dtype=np.float64)

    @property
    def norm_std(self) -> np.ndarray:
        return np.array(self.norm_stats.std, dtype=np.float64)

    def _ensure_index(self) -> None:
        if self._zmatrix is None:
            self._matrix = np.array([r.config.as_tuple() for r in self.records])
            self._zmatrix = (self._matrix - self.norm_mean) / self.norm_std
            self._tree = cKDTree(self._zmatrix)

    def _normalize(self, probe: ConfigVector) -> np.ndarray:
        return (probe.as_array() - self.norm_mean) / self.norm_std

    def _pick(self, probe_z: np.ndarray, candidates: np.ndarray) -> int:
        """Least-distance candidate, ties broken by raw config order."""
        dists = np.sqrt(((self._zmatrix[candidates] - probe_z) ** 2).sum(axis=1))
        best = dists.min()
        tied = candidates[dists == best]
        if len(tied) == 1:
            return int(tied[0])
        return min(int(i) for i in tied)  # records are config-sorted

    def query_nearest(self, probe: ConfigVector) -> ExecutionRecord:
        """Exact nearest record in normalized Euclidean distance.

        The KD-tree narrows the search; every candidate within the tree's
        best distance is re-scored with the scan arithmetic, so the result
        matches :meth:`scan_nearest` on every probe.
        """
        if not self.records:
            raise EmptyDatabase("no records to query")
        self._ensure_index()
        probe_z = self._normalize(probe)
        d_best, _ = self._tree.query(probe_z)
        radius = d_best * (1.0 + 1e-9) if d_best > 0 else 1e-12
        candidates = np.array(
            sorted(self._tree.query_ball_point(probe_z, radius)), dtype=np.intp
        )
        if candidates.size == 0:  # degenerate radius, fall back to the scan
            return self.scan_nearest(probe)
        return self.records[self._pick(probe_z, candidates)]

    def scan_nearest(self, probe: ConfigVector) -> ExecutionRecord:
        """Brute-force linear scan; the reference for query exactness."""
        if not self.records:
            raise EmptyDatabase("no records to query")
        self._ensure_index()
        probe_z = self._normalize(probe)
        all_rows = np.arange(len(self.records), dtype=np.intp)
        return self.records[self._pick(probe_z, all_rows)]

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = {
            "format": DB_FORMAT,
            "version": DB_VERSION,
            "n_records": len(self.records),
            "seed": self.seed,
            "cost_hash": self.cost_hash,
            "mode": self.mode,
            "norm_mean": list(self.norm_stats.mean),
            "norm_std": list(self.norm_stats.std),
            "skipped": self.skipped,
        }
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for rec in self.records:
            lines.append(
                json.dumps(
                    {
                        "config": list(rec.config.as_tuple()),
                        "samples": [[f, t] for f, t in rec.samples],
                        "metadata": rec.metadata,
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PerfDatabase":
        text = Path(path).read_text()
        lines = text.splitlines()
        if not lines:
            raise ParseError("empty file", line=1)
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad header: {exc.msg}", line=1) from exc
        if not isinstance(header, dict) or header.get("format") != DB_FORMAT:
            raise ParseError("not a performance database file", line=1)
        if header.get("version") != DB_VERSION:
            raise VersionError(
                f"unsupported database version {header.get('version')!r}"
            )
        expected = header.get("n_records", 0)
        body = lines[1:]
        if len(body) != expected:
            raise ParseError(
                f"expected {expected} records, found {len(body)}", line=len(lines)
            )
        records = []
        for i, line in enumerate(body, start=2):
            try:
                doc = json.loads(line)
                config = ConfigVector(*doc["config"])
                samples = tuple((float(f), float(t)) for f, t in doc["samples"])
                records.append(
                    ExecutionRecord(config, samples, metadata=doc.get("metadata", {}))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, MalformedRecord):
                    raise
                raise ParseError(f"bad record: {exc}", line=i) from exc
        db = cls(
            records,
            seed=header.get("seed", 0),
            cost_hash=header.get("cost_hash", ""),
            mode=header.get("mode", GUARANTEED),
            skipped=header.get("skipped", []),
        )
        # Trust the persisted stats so save/load round-trips exactly.
        db.norm_stats = NormStats(
            tuple(float(v) for v in header["norm_mean"]),
            tuple(float(v) for v in header["norm_std"]),
        )
        return db


def build(
    config_grid,
    fm_fractions,
    sim_params: TierParams | None = None,
    seed: int = 0,
    mode: str = GUARANTEED,
    workers: int = 1,
) -> PerfDatabase:
    """Execute every configuration at every fraction and collect the records.

    Infeasible configurations are recorded as skipped with their reason,
    never dropped silently. The build is deterministic: configurations are
    processed in lexicographic order and the seed is stamped into each
    record's metadata.
    """
    configs = sorted(set(config_grid), key=lambda c: c.as_tuple())
    fractions = sorted(set(float(f) for f in fm_fractions), reverse=True)
    if not configs:
        raise ValueError("configuration grid is empty")
    if not fractions or abs(fractions[0] - 1.0) > 1e-12:
        raise ValueError("fm fractions must include 1.0")
    chash = params_hash(sim_params) if sim_params else params_hash(
        TierParams(fast_capacity=1, slow_capacity=1)
    )

    jobs = [(cfg, fractions, sim_params, seed, mode, chash) for cfg in configs]
    if workers > 1 and len(jobs) > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_build_one, jobs)
    else:
        results = [_build_one(job) for job in jobs]

    records, skipped = [], []
    for cfg, record, reason in results:
        if record is not None:
            records.append(record)
        else:
            skipped.append({"config": list(cfg.as_tuple()), "reason": reason})
    return PerfDatabase(records, seed=seed, cost_hash=chash, mode=mode, skipped=skipped)


def _build_one(job):
    cfg, fractions, sim_params, seed, mode, chash = job
    try:
        spec = synthesize(cfg.to_target(), mode=mode)
        samples = tuple(
            (f, execute(spec, params=sim_params, fm_fraction=f).exec_time)
            for f in fractions
        )
        record = ExecutionRecord(
            cfg, samples, metadata={"seed": seed, "cost_hash": chash}
        )
        return cfg, record, ""
    except (InfeasibleTarget, InvalidHotThr, ValueError) as exc:
        return cfg, None, str(exc)


__all__ = [
    "CONFIG_FIELDS",
    "ConfigVector",
    "EmptyDatabase",
    "ExecutionRecord",
    "MalformedRecord",
    "NormStats",
    "ParseError",
    "PerfDatabase",
    "VersionError",
    "build",
    "loss_curve",
    "params_hash",
]
