"""Time filter+diversity and the full on-disk report on a 196-country x 217-day x 100-topic corpus."""
import argparse
import tempfile
import time
from pathlib import Path

from madpfi import cli
from madpfi.corpus import write_corpus
from madpfi.diversity import diversity_table
from madpfi.filtering import build_topk_dataset, survival_curve
from madpfi.stats import write_indicators
from madpfi.synthetic import SynthParams, gen_corpus, gen_indicators


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--countries", type=int, default=196)
    ap.add_argument("--days", type=int, default=217)
    ap.add_argument("--topics", type=int, default=100)
    ap.add_argument("--seed", type=int, default=8)
    args = ap.parse_args()

    t = time.perf_counter()
    corpus = gen_corpus(SynthParams(countries=args.countries, days=args.days,
                                    topics_per_day=args.topics, topic_pool_size=20 * args.topics,
                                    pool_spread=0.7, p_short=0.0005, seed=args.seed))
    inds = gen_indicators(corpus, seed=args.seed, k=min(90, args.topics), missing_pfi=8)
    print(f"generate        {time.perf_counter() - t:6.2f}s  ({len(corpus)} snapshots)")

    t = time.perf_counter()
    for k in (10, 50, 90):
        if k > args.topics:
            continue
        ds = build_topk_dataset(corpus, k)
        diversity_table(ds)
        diversity_table(ds, l=3)
    survival_curve(corpus, range(1, 101))
    print(f"filter+diversity {time.perf_counter() - t:6.2f}s")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_corpus(corpus, tmp / "snaps", per_country=True)
        write_indicators(inds, tmp / "ind.csv")
        t = time.perf_counter()
        code = cli.main(["report", "--snapshots", str(tmp / "snaps"), "--indicators",
                         str(tmp / "ind.csv"), "--out", str(tmp / "report")])
        print(f"report (disk)   {time.perf_counter() - t:6.2f}s  exit={code}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
