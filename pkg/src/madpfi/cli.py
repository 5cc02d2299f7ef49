"""``madpfi`` command line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, lmm, pipeline
from .corpus import corpus_summary, fetch_snapshots, load_corpus, write_corpus
from .diversity import diversity_table, make_windows
from .errors import ComputationError, MadpfiError, ValidationError
from .filtering import DEFAULT_K, build_topk_dataset, survival_curve
from .stats import correlation_sweep, load_indicators, write_indicators

log = logging.getLogger("madpfi")

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_IO = 0, 2, 3, 4


def _int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_out(path, header, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else str(v) for v in row) + "\n")
    finally:
        if path:
            fh.close()


class Settings:
    """CLI arguments layered over config-file values over built-in defaults."""

    def __init__(self, args, config):
        self._args = vars(args)
        self._config = config

    def get(self, key, default=None):
        v = self._args.get(key)
        if v is not None:
            return v
        return self._config.get(key, default)

    def require(self, key):
        v = self.get(key)
        if v is None:
            raise ValidationError(f"--{key.replace('_', '-')} is required (or set {key} in --config)")
        return v


def _load_config(path):
    if not path:
        return {}
    with open(path, "rb") as fh:
        return pipeline.tomllib.load(fh)


def _corpus(s: Settings):
    return load_corpus(s.require("snapshots"), date_range=s.get("date_range"))


def cmd_ingest(s, args):
    source = s.require("source")
    out = s.require("out")
    summary = fetch_snapshots(source, out, rate_limit=float(s.get("rate_limit", 1.0)),
                              attempts=int(s.get("attempts", 3)))
    corpus = load_corpus(out)
    record = {"fetch": summary.to_dict(), "corpus": corpus_summary(corpus).to_dict()}
    print(json.dumps(record, indent=2, sort_keys=True))
    return EXIT_OK if not summary.failed else EXIT_IO


def cmd_filter(s, args):
    corpus = _corpus(s)
    ks = s.get("survival") or [int(s.get("k", DEFAULT_K))]
    if isinstance(ks, str):
        ks = _int_list(ks)
    _csv_out(s.get("output"), ("k", "count"), survival_curve(corpus, ks))
    return EXIT_OK


def cmd_diversity(s, args):
    corpus = _corpus(s)
    k = int(s.get("k", DEFAULT_K))
    l = s.get("l")
    windows = make_windows(s.get("windows", "full"), corpus.date_range, corpus.dates)
    records = diversity_table(build_topk_dataset(corpus, k), l=None if l is None else int(l),
                              windows=windows)
    _csv_out(s.get("output"), pipeline.DIVERSITY_HEADER, pipeline.diversity_rows(records))
    return EXIT_OK


def cmd_correlate(s, args):
    corpus = _corpus(s)
    inds = load_indicators(s.require("indicators"))
    ks = s.get("ks") or list(pipeline.DISTRIBUTION_KS)
    if isinstance(ks, str):
        ks = _int_list(ks)
    level = float(s.get("level", 0.95))
    records = [r for k in ks for r in diversity_table(build_topk_dataset(corpus, k))]
    results = correlation_sweep(records, inds, ks, level)
    if not results:
        raise ComputationError("no k had enough countries to correlate")
    rows = [(c.k, repr(c.r), repr(c.ci_low), repr(c.ci_high), c.n) for c in results]
    _csv_out(None, ("k", "r", "ci_low", "ci_high", "n"), rows)
    out = s.get("out")
    if out:
        cfg = pipeline.PipelineConfig(out=out, ks=tuple(ks), k=int(s.get("k", max(ks))),
                                      level=level, models=())
        Path(out).mkdir(parents=True, exist_ok=True)
        _csv_out(Path(out) / "correlation.csv", ("k", "r", "ci_low", "ci_high", "n"), rows)
        _write_scatter(corpus, inds, cfg)
    return EXIT_OK


def _write_scatter(corpus, inds, cfg):
    import math

    from .stats import country_level
    from .svg import scatter_svg

    pfi = {c: r.pfi for c, r in country_level(inds).items() if r.pfi is not None}
    pts = [(r.country, math.log(r.value), pfi[r.country])
           for r in diversity_table(build_topk_dataset(corpus, cfg.k)) if r.country in pfi]
    out = Path(cfg.out)
    _csv_out(out / "scatter.csv", ("country", "log_u", "pfi"),
             [(c, repr(x), repr(y)) for c, x, y in pts])
    (out / "scatter.svg").write_text(
        scatter_svg(pts, title=f"log U(k={cfg.k}) vs PFI", xlabel="log U", ylabel="PFI"),
        encoding="utf-8")


def cmd_fit(s, args):
    corpus = _corpus(s)
    inds = load_indicators(s.require("indicators"))
    k = int(s.get("k", DEFAULT_K))
    windows = make_windows(s.get("windows", "full"), corpus.date_range, corpus.dates)
    records = diversity_table(build_topk_dataset(corpus, k), windows=windows)
    frame, report = pipeline.join_frame(records, inds)
    group = s.get("group", "auto")
    if group == "auto":
        group = "country" if len(windows) > 1 else "region"
    method = str(s.get("method", "REML")).upper()
    model = str(s.get("model", "1,2,3"))
    if model == "custom":
        formula = s.require("formula")
        models = [lmm.LmmSpec.parse(formula, group=group, method=method)]
    else:
        models = _int_list(model)
    fits, vifs = pipeline.fit_models(frame, models, group, method)
    table = lmm.format_table(fits, vifs)
    sys.stdout.write(table)
    record = {"group": group, "join": {"rows": report.rows, "dropped_no_pfi": report.no_pfi,
                                       "dropped_no_indicators": report.no_indicators},
              "models": pipeline.models_record(fits, vifs)}
    out = s.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "table1.txt").write_text(table, encoding="utf-8")
        pipeline._dump_json(Path(out) / "models.json", record)
    else:
        print(json.dumps(record, indent=2, sort_keys=True, default=pipeline._json_default))
    return EXIT_OK


def cmd_synth(s, args):
    from .synthetic import PRESETS

    preset = s.get("preset", "paper-shape")
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    seed = s.get("seed")
    bundle = PRESETS[preset]() if seed is None else PRESETS[preset](int(seed))
    out = Path(s.require("out"))
    snaps = out / "snapshots"
    write_corpus(bundle.corpus, snaps, per_country=True)
    write_indicators(bundle.indicators, out / "indicators.csv")
    lo, hi = bundle.corpus.date_range
    (out / "report.toml").write_text(
        "# synthetic fixture; run: madpfi report --config report.toml\n"
        f'label = "{bundle.description}"\n'
        f'snapshots = "{snaps.resolve().as_posix()}"\n'
        f'indicators = "{(out / "indicators.csv").resolve().as_posix()}"\n'
        f'windows = "{bundle.window_spec}"\n'
        f'date_range = ["{lo.isoformat()}", "{hi.isoformat()}"]\n'
        f'out = "{(out / "report").resolve().as_posix()}"\n',
        encoding="utf-8",
    )
    print(json.dumps({"preset": preset, "out": str(out), "description": bundle.description,
                      "countries": len(bundle.corpus.countries),
                      "dates": len(bundle.corpus.dates)}, sort_keys=True))
    return EXIT_OK


_REPORT_KEYS = ("snapshots", "indicators", "out", "k", "l", "windows", "models", "group",
                "method", "level", "ks", "date_range", "label")


def cmd_report(s, args):
    values = {}
    for key in _REPORT_KEYS:
        v = s.get(key)
        if v is not None:
            values[key] = _int_list(v) if key in ("models", "ks") and isinstance(v, str) else v
    cfg = pipeline.PipelineConfig(**values)
    for key in ("snapshots", "indicators"):
        if getattr(cfg, key) is None:
            raise ValidationError(f"report needs {key}")
        if not Path(getattr(cfg, key)).exists():
            raise FileNotFoundError(f"{key} path does not exist: {getattr(cfg, key)}")
    bundle = pipeline.run_report(cfg)
    for name, status in bundle.stages.items():
        log.info("%-10s %s", name, status)
    print(json.dumps({"out": str(bundle.out), "exit_code": bundle.exit_code,
                      "stages": bundle.stages}, indent=2, sort_keys=True))
    return bundle.exit_code


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file of key = value defaults")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="madpfi", parents=[common],
                                description="Media attention diversity vs press freedom.")
    p.add_argument("--version", action="version", version=f"madpfi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=fn)
        return sp

    def snapshots(sp):
        sp.add_argument("--snapshots", help="snapshot file or directory")

    sp = add("ingest", cmd_ingest, "fetch or copy snapshots into a local store")
    sp.add_argument("--source", help="base URL or local directory")
    sp.add_argument("--rate-limit", type=float, help="minimum seconds between requests")
    sp.add_argument("--attempts", type=int)

    sp = add("filter", cmd_filter, "survival counts |C^k|")
    snapshots(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--survival", type=_int_list, help="comma-separated k values")
    sp.add_argument("--output", help="CSV path (stdout when omitted)")

    sp = add("diversity", cmd_diversity, "per-country diversity table")
    snapshots(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--l", type=int, help="subtopic depth; omit for topic level")
    sp.add_argument("--window", dest="windows", help="full|monthly|days:N")
    sp.add_argument("--output", help="CSV path (stdout when omitted)")

    sp = add("correlate", cmd_correlate, "Pearson r with Fisher-z intervals per k")
    snapshots(sp)
    sp.add_argument("--indicators")
    sp.add_argument("--ks", type=_int_list)
    sp.add_argument("--k", type=int, help="k used for the scatter file")
    sp.add_argument("--level", type=float)

    sp = add("fit", cmd_fit, "random-intercept models")
    snapshots(sp)
    sp.add_argument("--indicators")
    sp.add_argument("--k", type=int)
    sp.add_argument("--window", dest="windows")
    sp.add_argument("--model", help="1, 2, 3, a comma list, or custom")
    sp.add_argument("--formula")
    sp.add_argument("--group", choices=["auto", "country", "region"])
    sp.add_argument("--method", type=str.upper, choices=["REML", "ML"])

    sp = add("synth", cmd_synth, "write a synthetic fixture")
    sp.add_argument("--preset", choices=["paper-shape", "minimal"])

    sp = add("report", cmd_report, "run every stage and write the report bundle")
    snapshots(sp)
    sp.add_argument("--indicators")
    sp.add_argument("--k", type=int)
    sp.add_argument("--l", type=int)
    sp.add_argument("--window", dest="windows")
    sp.add_argument("--models", type=_int_list)
    sp.add_argument("--group", choices=["auto", "country", "region"])
    sp.add_argument("--method", type=str.upper, choices=["REML", "ML"])
    sp.add_argument("--level", type=float)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        s = Settings(args, _load_config(args.config))
        return args.func(s, args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ComputationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    except MadpfiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except pipeline.tomllib.TOMLDecodeError as exc:
        print(f"error: bad config file: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
