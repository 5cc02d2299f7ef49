"""Acceptance criteria 1-8. Each test records one PASS/FAIL line, printed in the terminal summary."""
import datetime as dt
import json
import math
import time

import numpy as np
import pytest

from madpfi import cli
from madpfi.corpus import Corpus, DailySnapshot
from madpfi.diversity import diversity_table, make_windows, subtopic_diversity, topic_diversity
from madpfi.filtering import build_topk_dataset, eligible_countries, survival_curve
from madpfi.lmm import DesignMatrix, fit_at_theta, fit_lmm, information_criteria, profiled_deviance
from madpfi.pipeline import PipelineConfig, join_frame, run_report
from madpfi.stats import fisher_ci
from madpfi.synthetic import (
    SynthParams, brute_force_union, closed_form_oneway_reml, dense_deviance, gen_corpus,
    gen_indicators, ols, paper_shape,
)

RESULTS = {}


def record(cid, ok, detail):
    RESULTS[cid] = (bool(ok), detail)
    print(f"{cid}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{cid}: {detail}"


def mixed(rng, n_max=60, p_max=4):
    q = int(rng.integers(3, 10))
    sizes = rng.integers(1, max(2, n_max // q) + 1, q)
    sizes[0] = max(sizes[0], 2)
    groups = np.repeat(np.arange(q), sizes)
    n = groups.size
    p = int(rng.integers(1, min(p_max, n - 2) + 1))
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
    y = X @ rng.normal(size=p) + rng.normal(0, rng.uniform(0, 3), q)[groups] + rng.normal(size=n)
    return DesignMatrix.from_arrays(X, groups), y


# --- 1 -----------------------------------------------------------------------

TABLE1 = [  # loglik, p, n, AIC, BIC as printed
    (-336.45, 2, 84, 680.90, 690.62),
    (-347.52, 5, 81, 709.05, 725.81),
    (-326.64, 6, 80, 669.29, 688.34),
]


def test_c1_table1_identities():
    t0 = time.perf_counter()
    worst_aic = worst_bic = 0.0
    for loglik, p, n, aic_paper, bic_paper in TABLE1:
        aic, bic = information_criteria(loglik, p + 2, n)
        # the printed logLik is itself rounded to 2 decimals, so a 0.01 AIC gap is the
        # rounding floor; 1e-9 absorbs binary representation of the decimal inputs
        worst_aic = max(worst_aic, abs(aic - aic_paper))
        worst_bic = max(worst_bic, abs(bic - bic_paper))
    elapsed = time.perf_counter() - t0
    ok = worst_aic <= 0.01 + 1e-9 and worst_bic <= 0.05 and elapsed < 1
    record("C1", ok, f"max|dAIC|={worst_aic:.4f} max|dBIC|={worst_bic:.4f} ({elapsed:.3f}s)")


# --- 2 -----------------------------------------------------------------------

def test_c2_fisher_ci():
    t0 = time.perf_counter()
    lo, hi = fisher_ci(-0.599, 80, 0.95)
    close = abs(lo - -0.718) <= 0.02 and abs(hi - -0.446) <= 0.02
    contains = lo <= -0.599 <= hi
    rs = np.linspace(-0.95, 0.95, 39)
    monotone = all(
        fisher_ci(r, n2)[0] >= fisher_ci(r, n1)[0] and fisher_ci(r, n2)[1] <= fisher_ci(r, n1)[1]
        and fisher_ci(r, n1)[0] <= r <= fisher_ci(r, n1)[1]
        for r in rs for n1, n2 in ((4, 5), (20, 200), (80, 81))
    )
    elapsed = time.perf_counter() - t0
    record("C2", close and contains and monotone and elapsed < 1,
           f"CI=({lo:.4f}, {hi:.4f}) vs (-0.718, -0.446); containment={contains} "
           f"monotone={monotone} ({elapsed:.3f}s)")


# --- 3 -----------------------------------------------------------------------

def test_c3_lmm_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    errs = {"a": 0.0, "b": 0.0, "c": -np.inf, "d": 0.0}

    for _ in range(50):  # (a) theta = 0 is OLS
        design, y = mixed(rng)
        beta, s2_ml, s2_unb, loglik_ml, xtx_inv = ols(design.X, y)
        for method, s2 in (("ML", s2_ml), ("REML", s2_unb)):
            fit = fit_at_theta(design, y, 0.0, method)
            errs["a"] = max(errs["a"], np.max(np.abs(fit.beta - beta)),
                            np.max(np.abs(fit.se - np.sqrt(s2 * np.diag(xtx_inv)))),
                            abs(fit.sigma2 - s2))
            if method == "ML":
                errs["a"] = max(errs["a"], abs(fit.loglik - loglik_ml))

    for seed in range(50):  # (b) balanced one-way REML
        r = np.random.default_rng(1000 + seed)
        q, m = 10, 5
        groups = np.repeat(np.arange(q), m)
        y = r.normal(0, r.uniform(0, 2), q)[groups] + r.normal(0, r.uniform(0.5, 2), q * m)
        fit = fit_lmm(DesignMatrix.from_arrays(np.ones((q * m, 1)), groups), y, "REML")
        sb2, s2, _ = closed_form_oneway_reml(y, groups)
        errs["b"] = max(errs["b"], abs(fit.sigma_b2 - sb2), abs(fit.sigma2 - s2))

    grid = np.logspace(-6, 3, 1000)
    for i in range(20):  # (c) optimizer dominates a 1000-point grid
        design, y = mixed(rng)
        method = ("REML", "ML")[i % 2]
        fit = fit_lmm(design, y, method)
        best_grid = min(profiled_deviance(design, y, t, method)[0] for t in grid)
        errs["c"] = max(errs["c"], fit.deviance - best_grid)

    for _ in range(30):  # (d) dense multivariate-normal density
        design, y = mixed(rng, n_max=30)
        for theta in (0.0, 0.05, 0.7, 3.0, 40.0):
            for method in ("ML", "REML"):
                dev = profiled_deviance(design, y, theta, method)[0]
                dense = dense_deviance(design.X, y, design.groups, theta, method)[0]
                errs["d"] = max(errs["d"], abs(dev - dense))

    elapsed = time.perf_counter() - t0
    ok = errs["a"] <= 1e-8 and errs["b"] <= 1e-8 and errs["c"] <= 1e-6 and errs["d"] <= 1e-7
    record("C3", ok and elapsed < 30,
           f"(a) {errs['a']:.1e} (b) {errs['b']:.1e} (c) dev-grid_min={errs['c']:.1e} "
           f"(d) {errs['d']:.1e} ({elapsed:.1f}s)")


# --- 4 / 5 -------------------------------------------------------------------

def fast_random_corpus(rng, max_countries=20, max_days=50, max_topics=30, p_missing=0.02,
                       p_short=0.05):
    n_c = int(rng.integers(2, max_countries + 1))
    n_d = int(rng.integers(2, max_days + 1))
    depth_full = int(rng.integers(3, max_topics + 1))
    vocab = np.array([f"q{i}" for i in range(int(rng.integers(depth_full, 4 * depth_full + 1)))])
    start = dt.date(2016, 3, 7)
    snaps = []
    for c in range(n_c):
        code = f"{chr(65 + c // 26)}{chr(65 + c % 26)}"
        for d in range(n_d):
            if rng.random() < p_missing:
                continue
            depth = int(rng.integers(1, depth_full + 1)) if rng.random() < p_short else depth_full
            topics = vocab[rng.permutation(vocab.size)[:depth]].tolist()
            draws = vocab[rng.integers(0, vocab.size, (depth, 4))]
            counts = rng.integers(0, 5, depth)
            cms = tuple(
                tuple(dict.fromkeys(x for x in row[:m] if x != t))
                for t, row, m in zip(topics, draws.tolist(), counts)
            )
            snaps.append(DailySnapshot(code, start + dt.timedelta(days=d), tuple(topics), cms))
    return Corpus(snaps)


def test_c4_diversity_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    checked = mismatches = 0
    gen_time = 0.0
    for _ in range(100):
        g0 = time.perf_counter()
        corpus = fast_random_corpus(rng)
        gen_time += time.perf_counter() - g0
        max_depth = max(s.depth for s in corpus)
        for k in sorted({1, max(1, max_depth // 2), max_depth}):
            ds = build_topk_dataset(corpus, k)
            for c in ds.countries:
                for l in (None, 1, 3):
                    got = topic_diversity(ds, c) if l is None else subtopic_diversity(ds, c, l)
                    checked += 1
                    mismatches += got != brute_force_union(corpus, c, k, l)
    elapsed = time.perf_counter() - t0
    record("C4", mismatches == 0 and checked > 0 and elapsed < 10,
           f"{checked} values, {mismatches} mismatches ({elapsed:.1f}s incl. {gen_time:.1f}s "
           f"corpus generation)")


def test_c5_filter_properties(paper_bundle):
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(100):
        corpus = fast_random_corpus(rng, max_countries=20, max_days=20, p_missing=0.01, p_short=0.05)
        prev = None
        counts = [n for _, n in survival_curve(corpus, range(1, 31))]
        violations += any(b > a for a, b in zip(counts, counts[1:]))
        for k in range(1, 31):
            ck = eligible_countries(corpus, k)
            violations += prev is not None and not ck <= prev
            violations += len(ck) != counts[k - 1]
            prev = ck
    surv = survival_curve(paper_bundle.corpus, [10, 90, 100])
    ok = violations == 0 and surv == [(10, 129), (90, 88), (100, 0)]
    record("C5", ok, f"nesting/monotonicity violations={violations}; paper-shape survival={surv}")


# --- 6 -----------------------------------------------------------------------

def test_c6_planted_recovery(tmp_path):
    t0 = time.perf_counter()
    bundle = paper_shape()
    cfg = PipelineConfig(out=str(tmp_path), windows=bundle.window_spec, group="country",
                         label=bundle.description)
    report = run_report(cfg, bundle.corpus, bundle.indicators)
    elapsed = time.perf_counter() - t0
    models = json.loads((tmp_path / "models.json").read_text())
    details, ok = [], report.ok
    for label in ("Model 1", "Model 3"):
        fit = report.fits[label]
        j = fit.names.index("log(u)")
        b, se, p = fit.beta[j], fit.se[j], fit.pvalues[j]
        within = abs(b - -35.08) <= 2 * se
        ok &= within and p < 0.001
        details.append(f"{label} log(u)={b:.2f} (SE {se:.2f}, p={p:.1e})")
    frame_rows, groups = report.fits["Model 1"].n, report.fits["Model 1"].q
    ok &= (frame_rows, groups) == (80 * 7, 80)
    rs = {c.k: c.r for c in report.correlations}
    ok &= set(rs) == {10, 50, 90} and all(r < 0 for r in rs.values())
    vifs = [v for lb in ("Model 2", "Model 3") for v in models["models"][lb]["vif"].values()]
    ok &= max(vifs) < 1.6 and elapsed < 60
    record("C6", ok, "; ".join(details) + f"; n={frame_rows} groups={groups}; "
           f"r={{{', '.join(f'{k}: {r:.3f}' for k, r in sorted(rs.items()))}}}; "
           f"max VIF={max(vifs):.3f} ({elapsed:.1f}s)")


# --- 7 -----------------------------------------------------------------------

NULL_CACHE = {}


def null_pvalues():
    if "p" not in NULL_CACHE:
        ps = []
        for seed in range(100):
            corpus = gen_corpus(SynthParams(countries=40, days=42, topics_per_day=15,
                                            topic_pool_size=150, pool_spread=0.5, seed=seed))
            windows = make_windows("days:7", corpus.date_range, corpus.dates)
            inds = gen_indicators(corpus, coupling=0.0, noise_sd=5.0, seed=seed, k=15,
                                  windows=windows)
            recs = diversity_table(build_topk_dataset(corpus, 15), windows=windows)
            frame, _ = join_frame(recs, inds)
            from madpfi.lmm import build_design, model_spec
            design, y = build_design(frame, model_spec(1, group="country"))
            fit = fit_lmm(design, y)
            ps.append(float(fit.pvalues[1]))
        NULL_CACHE["p"] = ps
    return NULL_CACHE["p"]


def test_c7_null_calibration():
    t0 = time.perf_counter()
    ps = null_pvalues()
    hits = sum(p < 0.05 for p in ps)
    record("C7", hits <= 12, f"{hits}/100 seeds significant at 5% ({time.perf_counter() - t0:.1f}s)")


def test_null_pvalue_share():
    # module-level example: p > 0.05 in at least 90% of seeds
    assert sum(p > 0.05 for p in null_pvalues()) >= 90


# --- 8 -----------------------------------------------------------------------

def test_c8_scale(tmp_path, capsys):
    corpus = gen_corpus(SynthParams(countries=196, days=217, topics_per_day=100,
                                    topic_pool_size=2000, pool_spread=0.7, p_short=0.0005,
                                    seed=8))
    assert len(corpus.countries) == 196 and len(corpus.dates) == 217
    inds = gen_indicators(corpus, seed=8, k=90, missing_pfi=8)

    t0 = time.perf_counter()
    for k in (10, 50, 90):
        ds = build_topk_dataset(corpus, k)
        diversity_table(ds)
        diversity_table(ds, l=3)
    survival_curve(corpus, range(1, 101))
    stage_time = time.perf_counter() - t0

    from madpfi.corpus import write_corpus
    from madpfi.stats import write_indicators
    write_corpus(corpus, tmp_path / "snaps", per_country=True)
    write_indicators(inds, tmp_path / "ind.csv")
    t1 = time.perf_counter()
    code = cli.main(["report", "--snapshots", str(tmp_path / "snaps"), "--indicators",
                     str(tmp_path / "ind.csv"), "--out", str(tmp_path / "report")])
    e2e = time.perf_counter() - t1
    capsys.readouterr()
    record("C8", code == 0 and stage_time < 10 and e2e < 60,
           f"filter+diversity {stage_time:.1f}s; end-to-end report from disk {e2e:.1f}s; exit={code}")
