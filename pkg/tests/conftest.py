import datetime as dt

import numpy as np
import pytest

from madpfi.corpus import Corpus, DailySnapshot
from madpfi.synthetic import paper_shape

VOCAB = [f"t{i:03d}" for i in range(120)]


def random_corpus(rng, n_countries=5, n_days=8, max_topics=30, vocab=VOCAB, p_missing=0.1,
                  p_short=0.3, max_comentions=4, start=dt.date(2016, 3, 7)):
    """Small irregular corpus: missing days, short days, random co-mentions."""
    codes = ["AD", "AE", "AF", "AG", "AL", "AM", "AO", "AR", "AT", "AU", "AZ", "BA", "BB", "BD",
             "BE", "BF", "BG", "BH", "BI", "BJ"]
    snaps = []
    for c in codes[:n_countries]:
        for d in range(n_days):
            if rng.random() < p_missing:
                continue
            depth = int(rng.integers(1, max_topics + 1)) if rng.random() < p_short else max_topics
            idx = rng.choice(len(vocab), depth, replace=False)
            topics = tuple(vocab[i] for i in idx)
            cms = []
            for t in topics:
                m = int(rng.integers(0, max_comentions + 1))
                pool = [v for v in rng.choice(len(vocab), m + 1, replace=False) if vocab[v] != t][:m]
                cms.append(tuple(vocab[v] for v in pool))
            snaps.append(DailySnapshot(c, start + dt.timedelta(days=d), topics, tuple(cms)))
    return Corpus(snaps)


@pytest.fixture(scope="session")
def paper_bundle():
    return paper_shape()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(results):
        ok, detail = results[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}")
