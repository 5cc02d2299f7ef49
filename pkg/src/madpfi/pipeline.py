"""Join diversity with indicators and produce the report bundle."""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from . import __version__, lmm
from .corpus import Corpus, load_corpus
from .diversity import DiversityRecord, diversity_table, make_windows
from .errors import EmptyJoinError, MadpfiError, ValidationError
from .filtering import DEFAULT_K, build_topk_dataset, survival_curve
from .stats import CountryIndicators, correlation_sweep, country_level, load_indicators, vif
from .svg import scatter_svg

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

FRAME_COLUMNS = (
    "country", "window_start", "window_end", "u", "pfi", "cellular_per_100",
    "gdp_per_capita", "population", "unemployment_pct", "region",
)
DISTRIBUTION_KS = (10, 50, 90)


@dataclass
class JoinReport:
    rows: int
    no_indicators: list
    no_pfi: list

    @property
    def dropped(self):
        return len(self.no_indicators) + len(self.no_pfi)


def join_frame(diversity: Sequence[DiversityRecord], indicators: Sequence[CountryIndicators]):
    """Inner join of diversity records with indicators; rows without PFI are dropped.

    When the records span several windows per country and the indicators carry
    matching window rows, the join is on (country, window); otherwise each
    record takes its country-level indicators. Returns ``(frame, report)``.
    """
    if not diversity or not indicators:
        raise EmptyJoinError("nothing to join: empty diversity or indicator input")
    by_window = {(r.country, r.window): r for r in indicators if r.window is not None}
    by_country = country_level(indicators)
    rows, no_ind, no_pfi = [], [], []
    for rec in diversity:
        ind = by_window.get((rec.country, rec.window)) or by_country.get(rec.country)
        key = rec.country if len({r.window for r in diversity}) == 1 else (
            f"{rec.country}@{rec.window.label}")
        if ind is None:
            no_ind.append(key)
            continue
        if ind.pfi is None:
            no_pfi.append(key)
            continue
        rows.append((
            rec.country, rec.window.start.isoformat(), rec.window.end.isoformat(), rec.value,
            ind.pfi, ind.cellular_per_100, ind.gdp_per_capita, ind.population,
            ind.unemployment_pct, ind.region,
        ))
    if not rows:
        raise EmptyJoinError(
            "join produced no rows; unmatched: " + ", ".join(sorted(no_ind + no_pfi)[:20]),
            no_ind + no_pfi,
        )
    if no_pfi:
        log.info("dropped %d rows without PFI", len(no_pfi))
    frame = pd.DataFrame(rows, columns=list(FRAME_COLUMNS))
    for col in FRAME_COLUMNS[3:9]:
        frame[col] = frame[col].astype(float)
    return frame, JoinReport(len(rows), no_ind, no_pfi)


@dataclass
class PipelineConfig:
    snapshots: str | None = None
    indicators: str | None = None
    out: str = "report"
    k: int = DEFAULT_K
    l: int = 3
    windows: str = "full"
    models: tuple = (1, 2, 3)
    group: str = "auto"
    method: str = "REML"
    level: float = 0.95
    ks: tuple = DISTRIBUTION_KS
    survival_ks: tuple = (1,) + tuple(range(5, 101, 5))
    date_range: tuple | None = None
    label: str | None = None

    def __post_init__(self):
        if self.date_range is not None:
            lo, hi = (d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d))
                      for d in self.date_range)
            self.date_range = (lo, hi)
        if not 1 <= int(self.k) <= 100:
            raise ValidationError("k must be in 1..100")
        self.models = tuple(int(m) for m in self.models)
        self.ks = tuple(int(k) for k in self.ks)
        self.survival_ks = tuple(int(k) for k in self.survival_ks)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def group_for(self, windows):
        if self.group != "auto":
            return self.group
        return "country" if len(windows) > 1 else "region"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def diversity_rows(records: Sequence[DiversityRecord]):
    return [
        (r.country, r.k, "" if r.l is None else r.l, r.window.start.isoformat(),
         r.window.end.isoformat(), r.value)
        for r in records
    ]


DIVERSITY_HEADER = ("country", "k", "l", "window_start", "window_end", "u")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _dump_json(path: Path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def fit_models(frame, models, group, method):
    """Fit the requested model columns; returns ``({label: fit}, {label: vif or None})``."""
    fits, vifs = {}, {}
    for m in models:
        if isinstance(m, lmm.LmmSpec):
            spec, label = m, m.formula
        else:
            spec, label = lmm.model_spec(m, group=group, method=method), f"Model {m}"
        design, y = lmm.build_design(frame, spec)
        fits[label] = lmm.fit_lmm(design, y, spec.method)
        vifs[label] = vif(design).tolist() if design.p >= 3 else None
    return fits, vifs


def models_record(fits, vifs):
    out = {}
    for label, fit in fits.items():
        rec = fit.to_dict()
        names = [n for n in fit.names if n != "(Intercept)"]
        rec["vif"] = dict(zip(names, vifs[label])) if vifs[label] is not None else None
        out[label] = rec
    return out


@dataclass
class ReportBundle:
    out: Path
    stages: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    vifs: dict = field(default_factory=dict)
    correlations: list = field(default_factory=list)
    exit_code: int = 0

    @property
    def ok(self):
        return self.exit_code == 0


def run_report(config: PipelineConfig, corpus: Corpus | None = None,
               indicators: Sequence[CountryIndicators] | None = None) -> ReportBundle:
    """Run every stage, writing outputs as they complete.

    A failing stage is recorded in ``MANIFEST.json`` and later stages that do not
    depend on it still run; the bundle's exit code is that of the first failure.
    """
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out)

    def emit(name):
        bundle.outputs.append(name)
        return out / name

    def stage(name, fn):
        try:
            skipped = fn()
            bundle.stages[name] = f"ok (skipped k={skipped})" if skipped else "ok"
            return True
        except (MadpfiError, OSError) as exc:
            code = getattr(exc, "exit_code", 4)
            bundle.stages[name] = f"failed: {type(exc).__name__}: {exc}"
            log.error("stage %s failed: %s", name, exc)
            if bundle.exit_code == 0:
                bundle.exit_code = code
            return False

    state = {"corpus": corpus, "indicators": indicators}

    def load():
        if state["corpus"] is None:
            if not config.snapshots:
                raise ValidationError("no snapshot path configured")
            state["corpus"] = load_corpus(config.snapshots, date_range=config.date_range)
        if state["indicators"] is None:
            if not config.indicators:
                raise ValidationError("no indicators path configured")
            state["indicators"] = load_indicators(config.indicators)

    if not stage("load", load):
        _write_manifest(bundle, config, state)
        return bundle
    corpus, inds = state["corpus"], state["indicators"]
    datasets = {}

    def dataset(k):
        if k not in datasets:
            datasets[k] = build_topk_dataset(corpus, k)
        return datasets[k]

    def survival():
        _write_csv(emit("survival.csv"), ("k", "count"), survival_curve(corpus, config.survival_ks))

    full = {}

    def distributions():
        for k in sorted(set(config.ks) | {config.k}):
            topic = diversity_table(dataset(k))
            full[k] = topic
            sub = diversity_table(dataset(k), l=config.l)
            _write_csv(emit(f"diversity_k{k}.csv"), DIVERSITY_HEADER, diversity_rows(topic + sub))
            sentinels = sum(r.sentinel_keys for r in sub)
            if sentinels:
                log.warning("k=%d: %d distinct sentinel keys from mentions without co-mentions",
                            k, sentinels)

    def correlate():
        results = correlation_sweep([r for k in config.ks for r in full[k]], inds, config.ks,
                                    config.level)
        bundle.correlations = results
        _write_csv(emit("correlation.csv"), ("k", "r", "ci_low", "ci_high", "n"),
                   [(c.k, repr(c.r), repr(c.ci_low), repr(c.ci_high), c.n) for c in results])
        pfi = {c: r.pfi for c, r in country_level(inds).items() if r.pfi is not None}
        pts = [(r.country, math.log(r.value), pfi[r.country]) for r in full[config.k]
               if r.country in pfi]
        _write_csv(emit("scatter.csv"), ("country", "log_u", "pfi"),
                   [(c, repr(x), repr(y)) for c, x, y in pts])
        emit("scatter.svg").write_text(
            scatter_svg(pts, title=f"log U(k={config.k}) vs PFI",
                        xlabel=f"log media attention diversity (k={config.k})",
                        ylabel="press freedom index"),
            encoding="utf-8",
        )
        return sorted(set(config.ks) - {c.k for c in results})

    def models():
        windows = make_windows(config.windows, corpus.date_range, corpus.dates)
        records = diversity_table(dataset(config.k), windows=windows)
        _write_csv(emit("diversity_panel.csv"), DIVERSITY_HEADER, diversity_rows(records))
        frame, report = join_frame(records, inds)
        frame.to_csv(emit("frame.csv"), index=False, lineterminator="\n")
        group = config.group_for(windows)
        fits, vifs = fit_models(frame, config.models, group, config.method)
        bundle.fits, bundle.vifs = fits, vifs
        emit("table1.txt").write_text(lmm.format_table(fits, vifs), encoding="utf-8")
        rec = {
            "group": group,
            "windows": config.windows,
            "join": {"rows": report.rows, "dropped_no_pfi": report.no_pfi,
                     "dropped_no_indicators": report.no_indicators},
            "models": models_record(fits, vifs),
        }
        _dump_json(emit("models.json"), rec)

    stage("survival", survival)
    if stage("diversity", distributions):
        stage("correlate", correlate)
    else:
        bundle.stages["correlate"] = "skipped"
    stage("fit", models)
    _write_manifest(bundle, config, state)
    return bundle


def _write_manifest(bundle, config, state):
    corpus = state.get("corpus")
    manifest = {
        "complete": bundle.exit_code == 0,
        "exit_code": bundle.exit_code,
        "stages": bundle.stages,
        "outputs": sorted(bundle.outputs),
        "config": {k: v for k, v in dataclasses.asdict(config).items() if k != "out"},
        "generator": "madpfi " + __version__,
        "corpus": None if corpus is None else {
            "label": config.label or corpus.label,
            "countries": len(corpus.countries),
            "dates": len(corpus.dates),
            "synthetic": "synthetic" in (config.label or corpus.label or "").lower(),
        },
    }
    _dump_json(bundle.out / "MANIFEST.json", manifest)
