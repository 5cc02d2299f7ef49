"""Monte-Carlo size check: with no planted coupling, how often is the diversity slope significant?"""
import argparse

from madpfi.diversity import diversity_table, make_windows
from madpfi.filtering import build_topk_dataset
from madpfi.lmm import build_design, fit_lmm, model_spec
from madpfi.pipeline import join_frame
from madpfi.synthetic import SynthParams, gen_corpus, gen_indicators


def slope_pvalue(seed, countries, days, window, method):
    corpus = gen_corpus(SynthParams(countries=countries, days=days, topics_per_day=15,
                                    topic_pool_size=150, pool_spread=0.5, seed=seed))
    windows = make_windows(window, corpus.date_range, corpus.dates)
    inds = gen_indicators(corpus, coupling=0.0, noise_sd=5.0, seed=seed, k=15, windows=windows)
    recs = diversity_table(build_topk_dataset(corpus, 15), windows=windows)
    frame, _ = join_frame(recs, inds)
    design, y = build_design(frame, model_spec(1, group="country", method=method))
    return float(fit_lmm(design, y, method).pvalues[1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--countries", type=int, default=40)
    ap.add_argument("--days", type=int, default=42)
    ap.add_argument("--window", default="days:7")
    ap.add_argument("--method", default="REML", choices=["REML", "ML"])
    ap.add_argument("--alpha", type=float, default=0.05)
    args = ap.parse_args()
    ps = [slope_pvalue(s, args.countries, args.days, args.window, args.method)
          for s in range(args.seeds)]
    hits = sum(p < args.alpha for p in ps)
    print(f"{hits}/{len(ps)} significant at {args.alpha} (rate {hits / len(ps):.3f})")


if __name__ == "__main__":
    main()
