"""Snapshot data model, JSON Lines parsing, corpus loading and a polite fetch client.

One snapshot is one country's ranked topic list for one calendar date. Ranks are
implicit in list order (rank 1 first). Snapshot files are JSON Lines::

    {"country": "EG", "date": "2016-03-07",
     "topics": [{"id": "/m/0d05w3", "name": "...", "comentions": ["...", "..."]}]}
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import os
import tempfile
import time
import unicodedata
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

from .countries import is_iso_alpha2
from .errors import EmptyCorpusError, ParseError, SnapshotValidationError

log = logging.getLogger(__name__)

MAX_TOPICS = 100


def normalize_topic_id(raw: str) -> str:
    """Trim and NFC-normalize a topic identifier; reject empty ids."""
    if not isinstance(raw, str):
        raise SnapshotValidationError(f"topic id must be text, got {raw!r}")
    text = raw.strip()
    if not unicodedata.is_normalized("NFC", text):
        text = unicodedata.normalize("NFC", text)
    if not text:
        raise SnapshotValidationError("empty topic id")
    return text


@dataclass(frozen=True)
class TopicMention:
    topic: str
    rank: int
    comentions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.rank < 1:
            raise SnapshotValidationError(f"rank must be >= 1, got {self.rank}")
        _check_comentions(self.topic, self.comentions)


def _check_comentions(topic, comentions):
    if len(set(comentions)) != len(comentions):
        raise SnapshotValidationError(f"duplicate co-mention for topic {topic!r}")
    if topic in comentions:
        raise SnapshotValidationError(f"topic {topic!r} lists itself as a co-mention")


@dataclass(frozen=True)
class DailySnapshot:
    """Ranked topics of one country on one date.

    ``topics[i]`` has rank ``i + 1`` and co-mentions ``comentions[i]``. Ids are
    expected to be normalized already; use :meth:`from_mentions` or
    :func:`parse_snapshot_record` for raw input.
    """

    country: str
    date: dt.date
    topics: tuple[str, ...]
    comentions: tuple[tuple[str, ...], ...] = None
    names: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.topics, tuple):
            object.__setattr__(self, "topics", tuple(self.topics))
        if self.comentions is None:
            object.__setattr__(self, "comentions", ((),) * len(self.topics))
        elif not isinstance(self.comentions, tuple):
            object.__setattr__(self, "comentions", tuple(tuple(c) for c in self.comentions))
        n = len(self.topics)
        if n > MAX_TOPICS:
            raise SnapshotValidationError(
                f"{self.country} {self.date}: {n} topics exceeds the top-{MAX_TOPICS} limit"
            )
        if len(self.comentions) != n:
            raise SnapshotValidationError("co-mention lists do not align with topics")
        if self.names is not None and len(self.names) != n:
            raise SnapshotValidationError("topic names do not align with topics")
        if len(set(self.topics)) != n:
            dup = next(t for t, c in Counter(self.topics).items() if c > 1)
            raise SnapshotValidationError(
                f"{self.country} {self.date}: duplicate topic {dup!r}"
            )
        for topic, cms in zip(self.topics, self.comentions):
            if cms and (topic in cms or len(frozenset(cms)) != len(cms)):
                _check_comentions(topic, cms)

    @classmethod
    def from_mentions(cls, country, date, mentions: Sequence[TopicMention]):
        ranks = [m.rank for m in mentions]
        if ranks != list(range(1, len(ranks) + 1)):
            raise SnapshotValidationError(f"{country} {date}: ranks must be 1..n, got {ranks}")
        return cls(
            country=country,
            date=date,
            topics=tuple(normalize_topic_id(m.topic) for m in mentions),
            comentions=tuple(tuple(normalize_topic_id(c) for c in m.comentions) for m in mentions),
        )

    @property
    def mentions(self) -> tuple[TopicMention, ...]:
        return tuple(
            TopicMention(t, i + 1, c)
            for i, (t, c) in enumerate(zip(self.topics, self.comentions))
        )

    @property
    def depth(self) -> int:
        return len(self.topics)


def _parse_date(value):
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(value)
    except (TypeError, ValueError):
        raise SnapshotValidationError(f"invalid date {value!r}") from None


def _record_to_snapshot(rec) -> DailySnapshot:
    if not isinstance(rec, dict):
        raise SnapshotValidationError("record must be a JSON object")
    for key in ("country", "date", "topics"):
        if key not in rec:
            raise SnapshotValidationError(f"missing field {key!r}")
    country = rec["country"]
    if not isinstance(country, str) or not country.strip():
        raise SnapshotValidationError(f"invalid country {country!r}")
    country = country.strip().upper()
    date = _parse_date(rec["date"])
    raw_topics = rec["topics"]
    if not isinstance(raw_topics, list):
        raise SnapshotValidationError("'topics' must be a list")

    topics, comentions, names, ranks = [], [], [], []
    has_names = False
    for pos, item in enumerate(raw_topics, start=1):
        if isinstance(item, str):
            item = {"id": item}
        elif not isinstance(item, dict):
            raise SnapshotValidationError(f"topic #{pos} must be an object or string")
        raw_id = item.get("id") or item.get("name")
        if raw_id is None:
            raise SnapshotValidationError(f"topic #{pos} has neither 'id' nor 'name'")
        topic = normalize_topic_id(raw_id)
        cms = item.get("comentions") or ()
        if not isinstance(cms, (list, tuple)):
            raise SnapshotValidationError(f"topic {topic!r}: 'comentions' must be a list")
        topics.append(topic)
        comentions.append(tuple(normalize_topic_id(c) for c in cms))
        name = item.get("name")
        has_names = has_names or name is not None
        names.append(name)
        ranks.append(item.get("rank"))

    seen = set()
    for topic in topics:
        if topic in seen:
            raise SnapshotValidationError(f"{country} {date}: duplicate topic {topic!r}")
        seen.add(topic)
    if any(r is not None for r in ranks):
        if any(r is None for r in ranks):
            raise SnapshotValidationError("ranks given for some topics but not all")
        for prev, (topic, r) in zip([0] + ranks, zip(topics, ranks)):
            if not isinstance(r, int) or r <= prev:
                raise SnapshotValidationError(
                    f"rank inversion: topic {topic!r} has rank {r!r} after rank {prev}"
                )
        for expected, (topic, r) in enumerate(zip(topics, ranks), start=1):
            if r != expected:
                kind = "gap"
                raise SnapshotValidationError(
                    f"rank {kind}: topic {topic!r} has rank {r}, expected {expected}"
                )
    return DailySnapshot(
        country=country,
        date=date,
        topics=tuple(topics),
        comentions=tuple(comentions),
        names=tuple(names) if has_names else None,
    )


def parse_snapshot_record(record: str, source=None, line=None) -> DailySnapshot:
    """Parse and validate one JSON Lines record.

    Errors carry ``source``/``line`` context when given.
    """
    try:
        rec = json.loads(record)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON ({exc.msg})", source, line) from None
    try:
        return _record_to_snapshot(rec)
    except SnapshotValidationError as exc:
        where = f"{source}:{line}: " if source is not None else ""
        raise SnapshotValidationError(where + str(exc)) from None


def snapshot_to_record(snap: DailySnapshot) -> dict:
    topics = []
    for i, (topic, cms) in enumerate(zip(snap.topics, snap.comentions)):
        item = {"id": topic}
        if snap.names is not None and snap.names[i] is not None:
            item["name"] = snap.names[i]
        if cms:
            item["comentions"] = list(cms)
        topics.append(item)
    return {"country": snap.country, "date": snap.date.isoformat(), "topics": topics}


def serialize_snapshot(snap: DailySnapshot) -> str:
    return json.dumps(snapshot_to_record(snap), ensure_ascii=False, separators=(",", ":"))


class Corpus:
    """Immutable snapshots indexed by country then date.

    ``dates`` is the set D of distinct observed dates (sorted); ``date_range`` is
    the inclusive calendar span, which may be declared wider than the data.
    """

    __slots__ = ("_snapshots", "_countries", "_dates", "_date_range", "duplicates", "label")

    def __init__(self, snapshots: Iterable[DailySnapshot] = (), date_range=None, label=None):
        table: dict[str, dict[dt.date, DailySnapshot]] = {}
        duplicates = 0
        for snap in snapshots:
            per_country = table.setdefault(snap.country, {})
            if snap.date in per_country:
                duplicates += 1
            per_country[snap.date] = snap
        if duplicates:
            log.warning("%d duplicate (country, date) snapshots; kept the last of each", duplicates)

        frozen = {}
        dates = set()
        for country in sorted(table):
            by_date = dict(sorted(table[country].items()))
            dates.update(by_date)
            frozen[country] = MappingProxyType(by_date)
        self._snapshots = MappingProxyType(frozen)
        self._countries = tuple(frozen)
        self._dates = tuple(sorted(dates))
        if date_range is not None:
            first, last = _parse_date(date_range[0]), _parse_date(date_range[1])
            if first > last:
                raise SnapshotValidationError(f"date_range {first}..{last} is reversed")
            if self._dates and (self._dates[0] < first or self._dates[-1] > last):
                raise SnapshotValidationError("snapshot dates fall outside the declared date_range")
            self._date_range = (first, last)
        else:
            self._date_range = (self._dates[0], self._dates[-1]) if self._dates else None
        self.duplicates = duplicates
        self.label = label

        unknown = [c for c in self._countries if not is_iso_alpha2(c)]
        if unknown:
            log.warning("country codes not in the ISO 3166-1 table: %s", ", ".join(unknown))

    @property
    def snapshots(self) -> Mapping[str, Mapping[dt.date, DailySnapshot]]:
        return self._snapshots

    @property
    def countries(self) -> tuple[str, ...]:
        return self._countries

    @property
    def dates(self) -> tuple[dt.date, ...]:
        return self._dates

    @property
    def date_range(self):
        return self._date_range

    def __len__(self):
        return sum(len(v) for v in self._snapshots.values())

    def __iter__(self) -> Iterator[DailySnapshot]:
        for by_date in self._snapshots.values():
            yield from by_date.values()

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (
            self._date_range == other._date_range
            and {c: dict(v) for c, v in self._snapshots.items()}
            == {c: dict(v) for c, v in other._snapshots.items()}
        )

    def __repr__(self):
        return (
            f"Corpus(countries={len(self._countries)}, dates={len(self._dates)}, "
            f"snapshots={len(self)}, date_range={self._date_range})"
        )

    def get(self, country, date):
        return self._snapshots.get(country, {}).get(date)


def _snapshot_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise FileNotFoundError(f"no such file or directory: {path}")
    return sorted(p for p in path.rglob("*") if p.is_file() and p.suffix in (".jsonl", ".json"))


def iter_snapshot_file(path) -> Iterator[DailySnapshot]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield parse_snapshot_record(line, source=str(path), line=lineno)


def load_corpus(path, date_range=None) -> Corpus:
    """Load every ``*.jsonl``/``*.json`` file under ``path`` (or a single file).

    Files are read in sorted path order, so duplicate (country, date) records
    resolve deterministically: the last one read wins.
    """
    path = Path(path)
    snaps = []
    for f in _snapshot_files(path):
        snaps.extend(iter_snapshot_file(f))
    if not snaps:
        raise EmptyCorpusError(f"no snapshot records found under {path}")
    return Corpus(snaps, date_range=date_range, label=str(path))


def write_corpus(corpus: Corpus, out, per_country=False) -> list[Path]:
    """Write snapshots as JSON Lines, either one file or one file per country."""
    out = Path(out)
    written = []
    if per_country:
        out.mkdir(parents=True, exist_ok=True)
        for country, by_date in corpus.snapshots.items():
            p = out / f"{country}.jsonl"
            with open(p, "w", encoding="utf-8") as fh:
                for snap in by_date.values():
                    fh.write(serialize_snapshot(snap) + "\n")
            written.append(p)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            for snap in corpus:
                fh.write(serialize_snapshot(snap) + "\n")
        written.append(out)
    return written


@dataclass
class CorpusSummary:
    n_countries: int = 0
    n_dates: int = 0
    n_snapshots: int = 0
    days_per_country: dict = field(default_factory=dict)
    depth_histogram: dict = field(default_factory=dict)
    date_range: tuple | None = None

    def to_dict(self):
        return {
            "n_countries": self.n_countries,
            "n_dates": self.n_dates,
            "n_snapshots": self.n_snapshots,
            "date_range": [d.isoformat() for d in self.date_range] if self.date_range else None,
            "days_per_country": self.days_per_country,
            "depth_histogram": {str(k): v for k, v in self.depth_histogram.items()},
        }


def corpus_summary(corpus: Corpus) -> CorpusSummary:
    hist = Counter(snap.depth for snap in corpus)
    return CorpusSummary(
        n_countries=len(corpus.countries),
        n_dates=len(corpus.dates),
        n_snapshots=len(corpus),
        days_per_country={c: len(v) for c, v in corpus.snapshots.items()},
        depth_histogram=dict(sorted(hist.items())),
        date_range=corpus.date_range,
    )


# --- fetch client -----------------------------------------------------------


class RateLimiter:
    """Blocks until at least ``min_interval`` seconds have passed since the last call."""

    def __init__(self, min_interval, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = float(min_interval)
        self._clock = clock
        self._sleep = sleep
        self._last = None

    def wait(self):
        if self._last is not None:
            remaining = self.min_interval - (self._clock() - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


@dataclass
class FetchSummary:
    fetched: int = 0
    skipped: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)

    def to_dict(self):
        return {"fetched": self.fetched, "skipped": self.skipped, "failed": self.failed,
                "failures": self.failures}


def snapshot_path(out: Path, country: str, date) -> Path:
    return Path(out) / country / f"{_parse_date(date).isoformat()}.jsonl"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _http_get_json(url, timeout):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def fetch_snapshots(
    source,
    out,
    rate_limit=1.0,
    *,
    attempts=3,
    backoff=1.0,
    timeout=30.0,
    clock=time.monotonic,
    sleep=time.sleep,
    getter=None,
) -> FetchSummary:
    """Materialize snapshots from a local directory or an HTTP source into ``out``.

    Output layout is ``out/<country>/<date>.jsonl``, one record per file; files that
    already exist are skipped. A remote source must serve ``<base>/index.json`` (a
    list of ``{"country", "date"}`` objects) and ``<base>/<country>/<date>.json``.
    Remote requests are spaced by at least ``rate_limit`` seconds, and a failing
    request is retried ``attempts`` times with exponential backoff before being
    recorded as failed.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = FetchSummary()
    src = str(source)

    if not src.startswith(("http://", "https://")):
        src_path = Path(src)
        for f in _snapshot_files(src_path):
            for snap in iter_snapshot_file(f):
                target = snapshot_path(out, snap.country, snap.date)
                if target.exists():
                    summary.skipped += 1
                    continue
                _atomic_write(target, serialize_snapshot(snap) + "\n")
                summary.fetched += 1
        return summary

    if rate_limit is None or rate_limit <= 0:
        raise ValueError("rate_limit must be > 0 for remote sources")
    get = getter or (lambda url: _http_get_json(url, timeout))
    limiter = RateLimiter(rate_limit, clock=clock, sleep=sleep)
    base = src.rstrip("/")

    def request(url):
        last_exc = None
        for attempt in range(attempts):
            if attempt:
                sleep(backoff * 2 ** (attempt - 1))
            limiter.wait()
            try:
                return get(url)
            except (urllib.error.URLError, OSError, ValueError) as exc:
                last_exc = exc
                log.info("request %s failed (attempt %d/%d): %s", url, attempt + 1, attempts, exc)
        raise last_exc

    index = request(f"{base}/index.json")
    if isinstance(index, dict):
        index = index.get("snapshots", [])
    for entry in index:
        country, date = entry["country"], _parse_date(entry["date"])
        target = snapshot_path(out, country, date)
        if target.exists():
            summary.skipped += 1
            continue
        url = f"{base}/{country}/{date.isoformat()}.json"
        try:
            rec = request(url)
            snap = _record_to_snapshot(rec)
        except (urllib.error.URLError, OSError, ValueError) as exc:
            summary.failed += 1
            summary.failures.append({"country": country, "date": date.isoformat(), "error": str(exc)})
            continue
        _atomic_write(target, serialize_snapshot(snap) + "\n")
        summary.fetched += 1
    return summary
