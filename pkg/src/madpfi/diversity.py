"""Media attention diversity: size of the union of daily top-k topic sets.

Topic-level diversity counts distinct topics; subtopic-level diversity counts
distinct (topic, co-mention) pairs built from the first ``l`` co-mentions of
each top-k mention.
"""
from __future__ import annotations

import calendar
import datetime as dt
from itertools import repeat
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .corpus import DailySnapshot, TopicMention
from .errors import InsufficientDepthError, NotEligibleError, ValidationError
from .filtering import FilteredDataset

DEFAULT_L = 3


class SubtopicKey(NamedTuple):
    """A (topic, co-mention) pair.

    A mention without co-mentions yields the sentinel ``(topic, topic)``.
    """

    topic: str
    comention: str

    @property
    def is_sentinel(self):
        return self.topic == self.comention


@dataclass(frozen=True, order=True)
class Window:
    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.start > self.end:
            raise ValidationError(f"window {self.start}..{self.end} is reversed")

    def contains(self, day):
        return self.start <= day <= self.end

    @property
    def label(self):
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


@dataclass(frozen=True)
class DiversityRecord:
    country: str
    k: int
    l: int | None
    window: Window
    value: int
    sentinel_keys: int = 0

    @property
    def window_start(self):
        return self.window.start

    @property
    def window_end(self):
        return self.window.end


def top_k_topics(snapshot: DailySnapshot, k: int) -> frozenset[str]:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if snapshot.depth < k:
        raise InsufficientDepthError(
            f"{snapshot.country} {snapshot.date}: {snapshot.depth} topics, need {k}"
        )
    return frozenset(snapshot.topics[:k])


def subtopic_keys(mention: TopicMention, l: int) -> set[SubtopicKey]:
    if l < 1:
        raise ValidationError(f"l must be >= 1, got {l}")
    if not mention.comentions:
        return {SubtopicKey(mention.topic, mention.topic)}
    return {SubtopicKey(mention.topic, c) for c in mention.comentions[:l]}


def _days_in(dataset: FilteredDataset, country, window):
    if country not in dataset.topic_sets:
        raise NotEligibleError(f"{country} is not in C^{dataset.k}")
    if window is None:
        return list(dataset.dates)
    lo, hi = dataset.date_range
    if window.start < lo or window.end > hi:
        raise ValidationError(f"window {window.label} extends beyond the corpus range")
    return [d for d in dataset.dates if window.contains(d)]


def topic_diversity(dataset: FilteredDataset, country: str, window: Window | None = None) -> int:
    """U^c(k) over ``window`` (the whole observed period when omitted)."""
    days = _days_in(dataset, country, window)
    sets = dataset.topic_sets[country]
    return len(frozenset().union(*(sets[d] for d in days)))


def _subtopic_union(dataset, country, l, days):
    k = dataset.k
    snaps = dataset.snapshots[country]
    # the same (topic, co-mentions) signature recurs across days; expand each once
    signatures = set()
    for d in days:
        snap = snaps[d]
        signatures.update(zip(snap.topics[:k], snap.comentions[:k]))
    keys = set()
    sentinels = 0
    for topic, cms in signatures:
        if cms:
            keys.update(zip(repeat(topic), cms[:l]))
        elif (topic, topic) not in keys:
            keys.add((topic, topic))
            sentinels += 1
    return keys, sentinels


def subtopic_diversity(dataset: FilteredDataset, country: str, l: int = DEFAULT_L,
                       window: Window | None = None) -> int:
    if l < 1:
        raise ValidationError(f"l must be >= 1, got {l}")
    days = _days_in(dataset, country, window)
    keys, _ = _subtopic_union(dataset, country, l, days)
    return len(keys)


def make_windows(spec: str, date_range, dates: Sequence[dt.date] | None = None) -> list[Window]:
    """Partition the calendar span into windows.

    ``full`` is one window; ``monthly`` splits at calendar month boundaries;
    ``days:N`` uses consecutive N-day blocks from the first date (the last block
    may be shorter). When ``dates`` is given, a window holding none of them is
    rejected.
    """
    first, last = date_range
    spec = spec.strip().lower()
    windows = []
    if spec == "full":
        windows = [Window(first, last)]
    elif spec == "monthly":
        start = first
        while start <= last:
            month_end = dt.date(start.year, start.month,
                                calendar.monthrange(start.year, start.month)[1])
            end = min(month_end, last)
            windows.append(Window(start, end))
            start = end + dt.timedelta(days=1)
    elif spec.startswith("days:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"bad window spec {spec!r}") from None
        if n < 1:
            raise ValidationError("days:N needs N >= 1")
        start = first
        while start <= last:
            end = min(start + dt.timedelta(days=n - 1), last)
            windows.append(Window(start, end))
            start = end + dt.timedelta(days=1)
    else:
        raise ValidationError(f"unknown window spec {spec!r} (full|monthly|days:N)")
    if dates is not None:
        for w in windows:
            if not any(w.contains(d) for d in dates):
                raise ValidationError(f"window {w.label} contains no observed dates")
    return windows


def _validate_windows(windows: Sequence[Window], dataset: FilteredDataset):
    ordered = list(windows)
    for a, b in zip(ordered, ordered[1:]):
        if b.start <= a.end:
            raise ValidationError(f"windows {a.label} and {b.label} overlap or are unordered")
    for w in ordered:
        if not any(w.contains(d) for d in dataset.dates):
            raise ValidationError(f"window {w.label} contains no observed dates")


def diversity_table(dataset: FilteredDataset, l: int | None = None,
                    windows: Sequence[Window] | None = None) -> list[DiversityRecord]:
    """One record per (country, window), ordered by country then window start.

    ``l=None`` gives topic-level values; an integer gives subtopic-level values.
    """
    if windows is None:
        windows = [Window(*dataset.date_range)] if dataset.date_range else []
    _validate_windows(windows, dataset)
    records = []
    for country in sorted(dataset.countries):
        sets = dataset.topic_sets[country]
        for w in windows:
            days = [d for d in dataset.dates if w.contains(d)]
            if l is None:
                value = len(frozenset().union(*(sets[d] for d in days)))
                sentinels = 0
            else:
                keys, sentinels = _subtopic_union(dataset, country, l, days)
                value = len(keys)
            records.append(DiversityRecord(country, dataset.k, l, w, value, sentinels))
    return records
