"""Long-format functional samples: containers, CSV I/O, splitting and resampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, ParseError, SchemaError
from .numerics import RngStream

REQUIRED_COLUMNS = ("subject_id", "time", "value", "group")


@dataclass(frozen=True)
class ObservationRecord:
    subject_id: str
    time: float
    value: float
    group: str = ""


@dataclass(frozen=True, eq=False)
class Subject:
    """One subject's discretized, noisy trajectory (times need not be sorted)."""

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise InputError(f"subject {self.subject_id}: times and values must be 1-d of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InputError(f"subject {self.subject_id}: non-finite time or value")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def n_obs(self) -> int:
        return self.times.size

    def renamed(self, subject_id: str) -> "Subject":
        return Subject(subject_id, self.times, self.values)

    def same_observations(self, other: "Subject") -> bool:
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    def __eq__(self, other):
        if not isinstance(other, Subject):
            return NotImplemented
        return self.subject_id == other.subject_id and self.same_observations(other)

    def __hash__(self):
        return hash((self.subject_id, self.times.tobytes(), self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """One group of subjects.

    Every subject must carry at least two observations (the diagonal-removed
    moments need an off-diagonal pair) and subject ids must be unique.
    Per-subject counts may differ.
    """

    group_label: str
    subjects: Tuple[Subject, ...]
    _flat: Dict[str, np.ndarray] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise InputError(f"group {self.group_label}: duplicate subject ids")
        short = [s.subject_id for s in subjects if s.n_obs < 2]
        if short:
            raise InputError(f"group {self.group_label}: subjects with fewer than 2 observations: {short[:5]}")

    def __len__(self):
        return len(self.subjects)

    def __eq__(self, other):
        if not isinstance(other, FunctionalSample):
            return NotImplemented
        return self.group_label == other.group_label and self.subjects == other.subjects

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.n_obs for s in self.subjects], dtype=int)

    def flat(self) -> Dict[str, np.ndarray]:
        """Concatenated ``times``, ``values``, subject ``starts`` and ``counts`` (cached)."""
        if self._flat is None:
            counts = self.counts
            starts = np.concatenate(([0], np.cumsum(counts)[:-1])) if counts.size else counts
            flat = {
                "times": np.concatenate([s.times for s in self.subjects]) if self.subjects else np.empty(0),
                "values": np.concatenate([s.values for s in self.subjects]) if self.subjects else np.empty(0),
                "starts": starts.astype(int),
                "counts": counts,
            }
            object.__setattr__(self, "_flat", flat)
        return self._flat

    def subset(self, indices: Sequence[int]) -> "FunctionalSample":
        return FunctionalSample(self.group_label, tuple(self.subjects[i] for i in indices))

    def with_label(self, label: str) -> "FunctionalSample":
        return FunctionalSample(label, self.subjects)

    def records(self) -> List[ObservationRecord]:
        return [
            ObservationRecord(s.subject_id, float(t), float(v), self.group_label)
            for s in self.subjects
            for t, v in zip(s.times, s.values)
        ]


@dataclass
class IngestReport:
    dropped_subjects: int = 0
    rescaled: bool = False
    time_min: Optional[float] = None
    time_max: Optional[float] = None


def ingest_csv(path, rescale_time: bool = False, columns: Optional[Dict[str, str]] = None):
    """Read a long-format CSV into two :class:`FunctionalSample` objects.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row.
    rescale_time : bool
        If True and any time falls outside [0, 1], map times affinely onto
        [0, 1] with the pooled min/max of both groups.
    columns : dict, optional
        Maps the logical names ``subject_id, time, value, group`` to header names.

    Returns
    -------
    (FunctionalSample, FunctionalSample, IngestReport)
        Groups ordered by first appearance in the file.
    """
    colmap = {c: c for c in REQUIRED_COLUMNS}
    if columns:
        colmap.update(columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if colmap[c] not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(colmap[c] for c in missing)}")
        groups: Dict[str, Dict[str, List[Tuple[float, float]]]] = {}
        for row_no, row in enumerate(reader, start=1):
            sid = row[colmap["subject_id"]]
            grp = row[colmap["group"]]
            try:
                t = float(row[colmap["time"]])
                v = float(row[colmap["value"]])
            except (TypeError, ValueError):
                raise ParseError(f"row {row_no}: non-numeric time or value", row=row_no) from None
            if not (math.isfinite(t) and math.isfinite(v)):
                raise ParseError(f"row {row_no}: non-finite time or value", row=row_no)
            groups.setdefault(grp, {}).setdefault(sid, []).append((t, v))

    if len(groups) != 2:
        raise InputError(f"expected exactly two groups, found {len(groups)}: {sorted(groups)}")

    report = IngestReport()
    all_t = [t for subj in groups.values() for obs in subj.values() for t, _ in obs]
    if all_t:
        report.time_min, report.time_max = min(all_t), max(all_t)
    lo, hi = 0.0, 1.0
    if rescale_time and all_t and (report.time_min < 0.0 or report.time_max > 1.0):
        lo, hi = report.time_min, report.time_max
        if hi == lo:
            raise InputError("cannot rescale: all observation times are equal")
        report.rescaled = True

    samples = []
    for label, subjects in groups.items():
        kept = []
        for sid, obs in subjects.items():
            if len(obs) < 2:
                report.dropped_subjects += 1
                continue
            t = np.array([o[0] for o in obs])
            v = np.array([o[1] for o in obs])
            if report.rescaled:
                t = (t - lo) / (hi - lo)
            kept.append(Subject(sid, t, v))
        if not kept:
            raise InputError(f"group {label!r} has no subject with at least 2 observations")
        samples.append(FunctionalSample(label, tuple(kept)))
    return samples[0], samples[1], report


def write_csv(path, sample_x: FunctionalSample, sample_y: FunctionalSample) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUIRED_COLUMNS)
        for sample in (sample_x, sample_y):
            for rec in sample.records():
                writer.writerow([rec.subject_id, repr(rec.time), repr(rec.value), rec.group])


class SplitPolicy(str, Enum):
    EVEN_ODD = "even_odd"
    RANDOM = "random"


@dataclass(frozen=True)
class SplitAssignment:
    """Per-group halves of subject indices (0-based, input order).

    ``*_a`` is the half built from 1-based even positions (after the random
    permutation, for the random policy); ``*_b`` holds the odd positions.
    """

    x_a: Tuple[int, ...]
    x_b: Tuple[int, ...]
    y_a: Tuple[int, ...]
    y_b: Tuple[int, ...]
    policy: SplitPolicy
    seed: Optional[int] = None

    def reversed(self) -> "SplitAssignment":
        return SplitAssignment(self.x_b, self.x_a, self.y_b, self.y_a, self.policy, self.seed)


def _alternate(order: Sequence[int]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    # 1-based even positions go to half a, odd positions to half b.
    evens = tuple(int(order[i]) for i in range(1, len(order), 2))
    odds = tuple(int(order[i]) for i in range(0, len(order), 2))
    return evens, odds


def split_sample(sample_x: FunctionalSample, sample_y: FunctionalSample, policy="even_odd",
                 seed: Optional[int] = None) -> SplitAssignment:
    """Split each group into two disjoint halves whose sizes differ by at most one."""
    policy = SplitPolicy(policy)
    for s in (sample_x, sample_y):
        if len(s) < 4:
            raise InputError(f"group {s.group_label!r} needs at least 4 subjects to split, has {len(s)}")
    if policy is SplitPolicy.EVEN_ODD:
        ox, oy = np.arange(len(sample_x)), np.arange(len(sample_y))
    else:
        if seed is None:
            raise InputError("random split policy requires a seed")
        gen = RngStream(seed).generator
        ox, oy = gen.permutation(len(sample_x)), gen.permutation(len(sample_y))
    x_a, x_b = _alternate(ox)
    y_a, y_b = _alternate(oy)
    return SplitAssignment(x_a, x_b, y_a, y_b, policy, seed if policy is SplitPolicy.RANDOM else None)


def permute_groups(sample_x: FunctionalSample, sample_y: FunctionalSample, rng: RngStream):
    """Pool both groups and reassign labels uniformly at random, keeping group sizes.

    Subject ids are prefixed with their original group label so they stay unique.
    """
    pooled = [s.renamed(f"{sample_x.group_label}:{s.subject_id}") for s in sample_x.subjects]
    pooled += [s.renamed(f"{sample_y.group_label}:{s.subject_id}") for s in sample_y.subjects]
    order = rng.generator.permutation(len(pooled))
    n = len(sample_x)
    new_x = FunctionalSample(sample_x.group_label, tuple(pooled[i] for i in order[:n]))
    new_y = FunctionalSample(sample_y.group_label, tuple(pooled[i] for i in order[n:]))
    return new_x, new_y


def _bootstrap_one(sample: FunctionalSample, gen: np.random.Generator) -> FunctionalSample:
    idx = gen.integers(0, len(sample), size=len(sample))
    seen: Dict[int, int] = {}
    out = []
    for i in idx:
        k = seen.get(int(i), 0)
        seen[int(i)] = k + 1
        src = sample.subjects[int(i)]
        out.append(src.renamed(f"{src.subject_id}#{k}"))
    return FunctionalSample(sample.group_label, tuple(out))


def bootstrap_within_groups(sample_x: FunctionalSample, sample_y: FunctionalSample, rng: RngStream):
    """Resample each group with replacement to its own size.

    Copies of a subject get ids ``<id>#0``, ``<id>#1``, ... in draw order.
    """
    return _bootstrap_one(sample_x, rng.generator), _bootstrap_one(sample_y, rng.generator)
