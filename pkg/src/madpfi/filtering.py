"""Completeness elimination: the eligible country set C^k and the top-k dataset M(k)."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

from .corpus import Corpus, DailySnapshot
from .errors import ValidationError

DEFAULT_K = 90


def _check_k(k):
    if not isinstance(k, int) or isinstance(k, bool) or not 1 <= k <= 100:
        raise ValidationError(f"k must be an integer in 1..100, got {k!r}")


def eligible_countries(corpus: Corpus, k: int) -> frozenset[str]:
    """Countries that have at least ``k`` ranked topics on every observed date.

    The observed dates are the corpus-wide set of dates carrying at least one
    snapshot, so a crawl day missing for everyone does not disqualify anybody.
    A country missing any single observed date is excluded.
    """
    _check_k(k)
    n_dates = len(corpus.dates)
    out = set()
    for country, by_date in corpus.snapshots.items():
        if len(by_date) != n_dates:
            continue
        if all(snap.depth >= k for snap in by_date.values()):
            out.add(country)
    return frozenset(out)


def survival_curve(corpus: Corpus, ks: Iterable[int]) -> list[tuple[int, int]]:
    ks = list(ks)
    if not ks:
        raise ValidationError("ks must be non-empty")
    for k in ks:
        _check_k(k)
    # min depth per complete country answers every k at once
    n_dates = len(corpus.dates)
    min_depths = [
        min(s.depth for s in by_date.values())
        for by_date in corpus.snapshots.values()
        if len(by_date) == n_dates
    ]
    return [(k, sum(1 for m in min_depths if m >= k)) for k in ks]


@dataclass(frozen=True)
class FilteredDataset:
    """M(k): per eligible country, per observed date, the set of rank <= k topics.

    ``snapshots`` keeps the underlying daily snapshots so subtopic measures can
    reach the co-mentions of the same top-k mentions.
    """

    k: int
    countries: tuple[str, ...]
    dates: tuple[dt.date, ...]
    topic_sets: Mapping[str, Mapping[dt.date, frozenset]]
    snapshots: Mapping[str, Mapping[dt.date, DailySnapshot]]
    date_range: tuple

    def __post_init__(self):
        for country in self.countries:
            sets = self.topic_sets[country]
            if len(sets) != len(self.dates):
                raise ValidationError(f"{country} is not present on every date")
            if any(len(s) != self.k for s in sets.values()):
                raise ValidationError(f"{country} has a day without exactly {self.k} topics")


def build_topk_dataset(corpus: Corpus, k: int) -> FilteredDataset:
    countries = tuple(sorted(eligible_countries(corpus, k)))
    topic_sets = {}
    snapshots = {}
    for country in countries:
        by_date = corpus.snapshots[country]
        topic_sets[country] = MappingProxyType(
            {d: frozenset(s.topics[:k]) for d, s in by_date.items()}
        )
        snapshots[country] = by_date
    return FilteredDataset(
        k=k,
        countries=countries,
        dates=corpus.dates,
        topic_sets=MappingProxyType(topic_sets),
        snapshots=MappingProxyType(snapshots),
        date_range=corpus.date_range,
    )
