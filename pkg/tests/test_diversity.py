import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madpfi.corpus import Corpus, DailySnapshot, TopicMention
from madpfi.diversity import (
    SubtopicKey, Window, diversity_table, make_windows, subtopic_diversity, subtopic_keys,
    top_k_topics, topic_diversity,
)
from madpfi.errors import InsufficientDepthError, NotEligibleError, ValidationError
from madpfi.filtering import build_topk_dataset
from madpfi.synthetic import (
    PLANTED_SUBTOPIC_U10, PLANTED_U10, PLANTED_U90, brute_force_union,
)

from conftest import random_corpus

D0 = dt.date(2016, 3, 7)


def day(i):
    return D0 + dt.timedelta(days=i)


def test_top_k_boundary():
    s = DailySnapshot("KR", D0, ("A", "B", "C"))
    assert top_k_topics(s, 2) == {"A", "B"}
    assert top_k_topics(s, 3) == {"A", "B", "C"}
    with pytest.raises(InsufficientDepthError):
        top_k_topics(s, 4)


def test_subtopic_keys():
    obama = TopicMention("Obama", 1, ("health care", "Michelle Obama", "speech"))
    assert len(subtopic_keys(obama, 3)) == 3
    assert subtopic_keys(obama, 1) == {SubtopicKey("Obama", "health care")}
    assert len(subtopic_keys(TopicMention("X", 1, ("a", "b")), 3)) == 2
    sentinel = subtopic_keys(TopicMention("X", 1, ()), 3)
    assert sentinel == {SubtopicKey("X", "X")} and next(iter(sentinel)).is_sentinel


def test_same_topics_every_day():
    topics = tuple(f"t{i}" for i in range(10))
    ds = build_topk_dataset(Corpus([DailySnapshot("KR", day(i), topics) for i in range(211)]), 10)
    assert topic_diversity(ds, "KR") == 10


def test_disjoint_topics_attain_upper_bound():
    m, k = 7, 5
    snaps = [DailySnapshot("KR", day(d), tuple(f"t{d}_{j}" for j in range(k))) for d in range(m)]
    assert topic_diversity(build_topk_dataset(Corpus(snaps), k), "KR") == m * k


def test_product_structure_for_subtopics():
    topics = tuple(f"t{i}" for i in range(6))
    cms = tuple(("a", "b", "c") for _ in topics)
    ds = build_topk_dataset(Corpus([DailySnapshot("KR", day(d), topics, cms) for d in range(4)]), 6)
    assert subtopic_diversity(ds, "KR", 3) == topic_diversity(ds, "KR") * 3


def test_not_eligible_and_window_errors():
    ds = build_topk_dataset(Corpus([DailySnapshot("KR", day(d), ("A", "B")) for d in range(3)]), 2)
    with pytest.raises(NotEligibleError):
        topic_diversity(ds, "JP")
    with pytest.raises(ValidationError):
        topic_diversity(ds, "KR", Window(day(-5), day(1)))
    with pytest.raises(ValidationError):
        subtopic_diversity(ds, "KR", 0)


def test_windows():
    rng = (D0, dt.date(2016, 10, 9))
    assert len(make_windows("full", rng)) == 1
    months = make_windows("monthly", rng)
    assert len(months) == 8 and months[0].end == dt.date(2016, 3, 31)
    blocks = make_windows("days:31", rng)
    assert len(blocks) == 7 and all((w.end - w.start).days == 30 for w in blocks)
    for bad in ("weekly", "days:0", "days:x"):
        with pytest.raises(ValidationError):
            make_windows(bad, rng)
    with pytest.raises(ValidationError):
        make_windows("days:1", (D0, day(2)), dates=[D0, day(2)])


def test_table_rejects_overlap_and_empty():
    ds = build_topk_dataset(Corpus([DailySnapshot("KR", day(d), ("A",)) for d in (0, 1, 5)]), 1)
    with pytest.raises(ValidationError):
        diversity_table(ds, windows=[Window(day(0), day(3)), Window(day(2), day(5))])
    with pytest.raises(ValidationError):
        diversity_table(ds, windows=[Window(day(2), day(3))])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_oracle_bounds_and_windows(seed):
    corpus = random_corpus(np.random.default_rng(seed), n_countries=4, n_days=9, max_topics=12,
                           p_missing=0.02, p_short=0.1)
    total_vocab = len({t for s in corpus for t in s.topics})
    windows = make_windows("days:3", corpus.date_range, None)
    windows = [w for w in windows if any(w.contains(d) for d in corpus.dates)]
    for k in (1, 4, 12):
        ds = build_topk_dataset(corpus, k)
        full = {r.country: r.value for r in diversity_table(ds)}
        per = diversity_table(ds, windows=windows)
        for c in ds.countries:
            u = topic_diversity(ds, c)
            assert u == full[c] == brute_force_union(corpus, c, k)
            assert k <= u <= min(k * len(corpus.dates), total_vocab)
            vals = [r.value for r in per if r.country == c]
            assert max(vals) <= u <= sum(vals)
            for l in (1, 3):
                assert subtopic_diversity(ds, c, l) == brute_force_union(corpus, c, k, l)
        if k < 12:
            nxt = build_topk_dataset(corpus, k + 1)
            for c in nxt.countries:
                assert topic_diversity(ds, c) <= topic_diversity(nxt, c)


def test_table_ordering_and_count():
    snaps = [DailySnapshot(c, day(d), tuple(f"{c}{d}{j}" for j in range(3)))
             for c in ("KR", "AD") for d in range(62)]
    ds = build_topk_dataset(Corpus(snaps), 3)
    windows = make_windows("days:31", ds.date_range, ds.dates)
    recs = diversity_table(ds, windows=windows)
    assert len(recs) == 2 * len(windows)
    assert [(r.country, r.window.start) for r in recs] == sorted((r.country, r.window.start) for r in recs)


def test_paper_shape_planted(paper_bundle):
    corpus = paper_bundle.corpus
    d90 = build_topk_dataset(corpus, 90)
    u90 = {r.country: r.value for r in diversity_table(d90)}
    for c, v in PLANTED_U90.items():
        assert u90[c] == v
    assert max(u90.values()) == 4012 and min(u90.values()) == 959
    d10 = build_topk_dataset(corpus, 10)
    u10 = {r.country: r.value for r in diversity_table(d10)}
    for c, v in PLANTED_U10.items():
        assert u10[c] == v
    sub = {r.country: r.value for r in diversity_table(d10, l=3)}
    assert min(sub.values()) == 795
    for c, v in PLANTED_SUBTOPIC_U10.items():
        assert sub[c] == v
    windows = make_windows("days:31", corpus.date_range, corpus.dates)
    assert len(diversity_table(d90, windows=windows)) == 88 * 7
