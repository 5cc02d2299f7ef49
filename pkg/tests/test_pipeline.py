import dataclasses
import json

import pytest

from madpfi import cli
from madpfi.diversity import diversity_table, make_windows
from madpfi.errors import EmptyJoinError
from madpfi.filtering import build_topk_dataset
from madpfi.pipeline import PipelineConfig, join_frame, run_report
from madpfi.stats import CountryIndicators
from madpfi.synthetic import SynthParams, gen_corpus, gen_indicators, minimal


def test_join_reports_pfi_loss(paper_bundle):
    recs = diversity_table(build_topk_dataset(paper_bundle.corpus, 90))
    assert len(recs) == 88
    frame, report = join_frame(recs, paper_bundle.indicators)
    assert len(frame) == 80 and report.dropped == 8 and len(report.no_pfi) == 8
    assert list(frame.columns[:5]) == ["country", "window_start", "window_end", "u", "pfi"]


def test_join_panel_full_indicators(paper_bundle):
    corpus = paper_bundle.corpus
    windows = make_windows("days:31", corpus.date_range, corpus.dates)
    recs = diversity_table(build_topk_dataset(corpus, 90), windows=windows)
    filled = [dataclasses.replace(r, pfi=r.pfi if r.pfi is not None else 50.0)
              for r in paper_bundle.indicators]
    frame, report = join_frame(recs, filled)
    assert len(frame) == 616 and report.dropped == 0
    # panel rows take their own window's PFI
    assert frame.groupby("country")["pfi"].nunique().max() > 1


def test_join_disjoint_is_error():
    recs = diversity_table(build_topk_dataset(minimal().corpus, 10))
    with pytest.raises(EmptyJoinError) as info:
        join_frame(recs, [CountryIndicators("ZZ", pfi=1.0)])
    assert info.value.unmatched


def test_minimal_report_fails_but_keeps_outputs(tmp_path):
    b = minimal()
    bundle = run_report(PipelineConfig(out=str(tmp_path), k=10, ks=(10,)), b.corpus, b.indicators)
    assert bundle.exit_code != 0
    assert bundle.stages["fit"].startswith("failed")
    assert (tmp_path / "diversity_k10.csv").read_text().count("\n") == 1 + 2 * 2
    manifest = json.loads((tmp_path / "MANIFEST.json").read_text())
    assert manifest["complete"] is False and manifest["stages"]["diversity"] == "ok"


def small_panel(seed=1):
    corpus = gen_corpus(SynthParams(countries=30, days=40, topics_per_day=20, topic_pool_size=200,
                                    pool_spread=0.6, seed=seed))
    windows = make_windows("days:10", corpus.date_range, corpus.dates)
    return corpus, gen_indicators(corpus, seed=seed, k=20, windows=windows, missing_pfi=2)


def test_report_deterministic(tmp_path):
    corpus, inds = small_panel()
    outs = []
    for name in ("a", "b"):
        cfg = PipelineConfig(out=str(tmp_path / name), k=20, ks=(5, 10, 20), windows="days:10",
                             survival_ks=(1, 10, 20))
        bundle = run_report(cfg, corpus, inds)
        assert bundle.ok, bundle.stages
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())})
    assert outs[0] == outs[1]
    assert {"survival.csv", "correlation.csv", "scatter.csv", "scatter.svg", "table1.txt",
            "models.json", "MANIFEST.json"} <= set(outs[0])
    models = json.loads(outs[0]["models.json"])
    assert models["group"] == "country"
    assert models["models"]["Model 3"]["vif"]["log(u)"] >= 1


def test_config_from_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('k = 50\nwindows = "monthly"\nmodels = [1, 3]\n')
    cfg = PipelineConfig.from_file(p, out="x")
    assert (cfg.k, cfg.windows, cfg.models, cfg.out) == (50, "monthly", (1, 3), "x")
    p.write_text("bogus = 1\n")
    with pytest.raises(Exception):
        PipelineConfig.from_file(p)


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    corpus, inds = small_panel(seed=5)
    from madpfi.corpus import write_corpus
    from madpfi.stats import write_indicators
    write_corpus(corpus, out / "snaps", per_country=True)
    write_indicators(inds, out / "ind.csv")
    return out


def test_cli_filter_and_diversity(synth_dir, capsys):
    assert cli.main(["filter", "--snapshots", str(synth_dir / "snaps"), "--survival", "1,20,50"]) == 0
    assert capsys.readouterr().out.splitlines() == ["k,count", "1,30", "20,30", "50,0"]
    assert cli.main(["diversity", "--snapshots", str(synth_dir / "snaps"), "--k", "20",
                     "--window", "days:10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "country,k,l,window_start,window_end,u" and len(lines) == 1 + 30 * 4


def test_cli_correlate_and_fit(synth_dir, tmp_path, capsys):
    args = ["--snapshots", str(synth_dir / "snaps"), "--indicators", str(synth_dir / "ind.csv")]
    assert cli.main(["correlate", *args, "--ks", "5,20", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("k,r,ci_low,ci_high,n\n5,")
    assert (tmp_path / "scatter.csv").read_text().startswith("country,log_u,pfi\n")
    assert cli.main(["fit", *args, "--k", "20", "--window", "days:10", "--model", "custom",
                     "--formula", "pfi ~ log(u) + unemployment", "--method", "ml"]) == 0
    out = capsys.readouterr().out
    assert "log(u)" in out and '"method": "ML"' in out


def test_cli_exit_codes(synth_dir, tmp_path, capsys):
    assert cli.main(["filter", "--snapshots", str(tmp_path / "nope")]) == 4
    assert cli.main(["filter", "--snapshots", str(synth_dir / "snaps"), "--k", "0"]) == 2
    assert cli.main(["fit", "--snapshots", str(synth_dir / "snaps"), "--indicators",
                     str(synth_dir / "ind.csv"), "--k", "20", "--model", "custom",
                     "--formula", "pfi ~ u ~ x"]) == 2
    assert cli.main(["synth", "--preset", "minimal", "--out", str(tmp_path / "m")]) == 0
    assert cli.main(["report", "--config", str(tmp_path / "m" / "report.toml"), "--k", "10"]) == 3
    assert (tmp_path / "m" / "report" / "diversity_k10.csv").exists()
    with pytest.raises(SystemExit) as info:
        cli.main(["fit", "--method", "bayes"])
    assert info.value.code == 2
