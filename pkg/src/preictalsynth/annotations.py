"""Seizure annotations and timeline period labelling.

Period semantics around a seizure with onset t and end `offset`, all in
seconds relative to the start of the recording:

    ictal      [t, offset]
    sph        [t - sph, t)                prediction horizon, never harvested
    preictal   [t - sph - preictal, t - sph)
    postictal  (offset, offset + postictal]

When periods of different seizures overlap, ictal wins, then sph. Time that
is simultaneously preictal for a later seizure and postictal for an earlier
one is contaminated in both directions and labelled `excluded`. Remaining
time is interictal, so the labels always partition the timeline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SummaryParseError

DEFAULT_LEADING_GAP = 4.0 * 3600.0  # a seizure is leading when this much
                                    # seizure-free time precedes its onset


@dataclass
class SeizureAnnotations:
    """Per-record seizure list with leading-seizure flags."""

    seizures: list            # [(onset_s, offset_s)] in record time, ascending
    leading: list             # bool per seizure

    def __post_init__(self):
        for i, (on, off) in enumerate(self.seizures):
            if off < on:
                raise DataError(f"seizure {i}: end {off} before start {on}")
        if len(self.leading) != len(self.seizures):
            raise DataError("leading flags do not match seizure count")

    @property
    def leading_indices(self) -> tuple:
        return tuple(i for i, flag in enumerate(self.leading) if flag)


def mark_leading(seizures, gap_seconds: float = DEFAULT_LEADING_GAP) -> list:
    """A seizure leads when its onset is at least gap_seconds after the
    previous seizure's end. The first seizure of a record leads."""
    flags = []
    prev_end = None
    for onset, offset in seizures:
        flags.append(prev_end is None or onset - prev_end >= gap_seconds)
        prev_end = offset if prev_end is None else max(prev_end, offset)
    return flags


_FILE_RE = re.compile(r"^File Name:\s*(\S+)\s*$")
_COUNT_RE = re.compile(r"^Number of Seizures in File:\s*(\S+)\s*$")
_START_RE = re.compile(r"^Seizure(?:\s+\d+)? Start Time:\s*(\S+)\s*seconds?\s*$")
_END_RE = re.compile(r"^Seizure(?:\s+\d+)? End Time:\s*(\S+)\s*seconds?\s*$")


def parse_chb_summary(text: str, gap_seconds: float = DEFAULT_LEADING_GAP) -> dict:
    """Parse a subject summary into {file name: SeizureAnnotations}.

    The summary format lists, per file, a `File Name:` line, a
    `Number of Seizures in File:` line, and that many Start/End second
    pairs. Any violation raises with the 1-based line number.
    """
    out: dict[str, SeizureAnnotations] = {}
    current = None            # file currently being read
    expected = 0              # seizures still owed to `current`
    pending_start = None      # onset waiting for its end line
    seizures: list = []

    def close(line_no):
        nonlocal current, expected, pending_start, seizures
        if current is None:
            return
        if pending_start is not None:
            raise SummaryParseError(line_no, f"{current}: seizure start at "
                                             f"{pending_start}s has no end time")
        if len(seizures) != expected:
            raise SummaryParseError(line_no, f"{current}: {expected - len(seizures)} "
                                             f"more seizure time pair(s) expected")
        out[current] = SeizureAnnotations(seizures, mark_leading(seizures, gap_seconds))
        current, expected, pending_start, seizures = None, 0, None, []

    lines = text.splitlines()
    for no, raw in enumerate(lines, start=1):
        line = raw.strip()
        m = _FILE_RE.match(line)
        if m:
            close(no)
            name = m.group(1)
            if name in out:
                raise SummaryParseError(no, f"duplicate file entry {name}")
            current = name
            continue
        m = _COUNT_RE.match(line)
        if m:
            if current is None:
                raise SummaryParseError(no, "seizure count before any File Name")
            try:
                expected = int(m.group(1))
            except ValueError:
                raise SummaryParseError(no, f"non-numeric seizure count {m.group(1)!r}") \
                    from None
            if expected < 0:
                raise SummaryParseError(no, f"negative seizure count {expected}")
            continue
        m = _START_RE.match(line)
        if m:
            if current is None:
                raise SummaryParseError(no, "seizure time before any File Name")
            if pending_start is not None:
                raise SummaryParseError(no, "two start times without an end time")
            if expected <= len(seizures):
                raise SummaryParseError(no, f"{current}: more seizure times than "
                                            f"the declared count")
            try:
                pending_start = float(m.group(1))
            except ValueError:
                raise SummaryParseError(no, f"non-numeric start time {m.group(1)!r}") \
                    from None
            continue
        m = _END_RE.match(line)
        if m:
            if pending_start is None:
                raise SummaryParseError(no, "end time without a start time")
            try:
                end = float(m.group(1))
            except ValueError:
                raise SummaryParseError(no, f"non-numeric end time {m.group(1)!r}") \
                    from None
            if end < pending_start:
                raise SummaryParseError(no, f"seizure end {end:g}s before start "
                                            f"{pending_start:g}s")
            seizures.append((pending_start, end))
            pending_start = None
            continue
    close(len(lines) + 1)
    return out


@dataclass
class PeriodConfig:
    sph_seconds: float = 300.0
    preictal_seconds: float = 1800.0
    postictal_seconds: float = 1800.0


@dataclass
class Interval:
    start: float
    end: float                # half-open [start, end)
    label: str
    seizure: int = -1         # owning seizure for ictal/sph/preictal/postictal

    @property
    def span(self) -> float:
        return self.end - self.start


@dataclass
class PeriodMap:
    """Disjoint half-open intervals covering [0, duration)."""

    duration: float
    intervals: list
    leading: tuple = ()               # seizure indices usable as CV folds
    truncated: tuple = ()             # seizures whose preictal hit record start

    def by_label(self, label: str) -> list:
        return [iv for iv in self.intervals if iv.label == label]

    def total(self, label: str) -> float:
        return sum(iv.span for iv in self.by_label(label))


def _point_label(t: float, seizures, cfg: PeriodConfig):
    """Label of instant t plus owning seizure index (pointwise rules)."""
    for i, (on, off) in enumerate(seizures):
        if on <= t <= off:
            return "ictal", i
    for i, (on, _) in enumerate(seizures):
        if on - cfg.sph_seconds <= t < on:
            return "sph", i
    pre = [i for i, (on, _) in enumerate(seizures)
           if on - cfg.sph_seconds - cfg.preictal_seconds <= t < on - cfg.sph_seconds]
    post = [i for i, (_, off) in enumerate(seizures)
            if off < t <= off + cfg.postictal_seconds]
    if pre and post:
        return "excluded", -1
    if pre:
        return "preictal", pre[0]     # earliest upcoming seizure owns the span
    if post:
        return "postictal", post[0]
    return "interictal", -1


def annotate_periods(duration: float, ann: SeizureAnnotations,
                     cfg: PeriodConfig | None = None) -> PeriodMap:
    """Label the whole timeline [0, duration) of one record."""
    cfg = cfg or PeriodConfig()
    if duration <= 0:
        raise DataError(f"record duration must be positive, got {duration}")
    seizures = ann.seizures
    for i, (on, off) in enumerate(seizures):
        if on > duration:
            raise DataError(f"seizure {i} onset {on:g}s is past the record end "
                            f"{duration:g}s")
    cuts = {0.0, duration}
    truncated = []
    for i, (on, off) in enumerate(seizures):
        pre_start = on - cfg.sph_seconds - cfg.preictal_seconds
        if pre_start < 0 < on - cfg.sph_seconds:
            truncated.append(i)
        for t in (pre_start, on - cfg.sph_seconds, on, off, off + cfg.postictal_seconds):
            if 0.0 < t < duration:
                cuts.add(float(t))
    bounds = sorted(cuts)
    intervals = []
    for a, b in zip(bounds, bounds[1:]):
        label, seiz = _point_label((a + b) / 2.0, seizures, cfg)
        if intervals and intervals[-1].label == label and intervals[-1].seizure == seiz:
            intervals[-1].end = b
        else:
            intervals.append(Interval(a, b, label, seiz))
    return PeriodMap(duration=duration, intervals=intervals,
                     leading=ann.leading_indices, truncated=tuple(truncated))
