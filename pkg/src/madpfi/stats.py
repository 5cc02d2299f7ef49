"""Correlation between diversity and PFI, Fisher-z intervals and VIF diagnostics."""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .diversity import DiversityRecord, Window
from .errors import DegenerateInputError, ValidationError

log = logging.getLogger(__name__)

INDICATOR_COLUMNS = (
    "country", "pfi", "cellular_per_100", "gdp_per_capita", "population", "unemployment_pct",
)
OPTIONAL_COLUMNS = ("region", "window_start", "window_end")


@dataclass(frozen=True)
class CountryIndicators:
    """Per-country PFI and national attributes; ``None`` marks a missing value.

    Rows carrying a ``window`` hold panel values for one time window; rows
    without one are country-level values.
    """

    country: str
    pfi: float | None = None
    cellular_per_100: float | None = None
    gdp_per_capita: float | None = None
    population: float | None = None
    unemployment_pct: float | None = None
    region: str | None = None
    window: Window | None = None

    def __post_init__(self):
        if self.pfi is not None and self.pfi < 0:
            raise ValidationError(f"{self.country}: pfi must be >= 0")
        for name in ("gdp_per_capita", "population"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValidationError(f"{self.country}: {name} must be > 0")
        u = self.unemployment_pct
        if u is not None and not 0 <= u <= 100:
            raise ValidationError(f"{self.country}: unemployment_pct outside [0, 100]")


def _cell(value):
    if value is None:
        return None
    value = value.strip()
    return float(value) if value else None


def load_indicators(path) -> list[CountryIndicators]:
    """Read the indicators CSV; empty cells become missing values."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in INDICATOR_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing columns {missing}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                window = None
                ws, we = (rec.get("window_start") or "").strip(), (rec.get("window_end") or "").strip()
                if ws and we:
                    window = Window(dt.date.fromisoformat(ws), dt.date.fromisoformat(we))
                rows.append(CountryIndicators(
                    country=rec["country"].strip().upper(),
                    pfi=_cell(rec["pfi"]),
                    cellular_per_100=_cell(rec["cellular_per_100"]),
                    gdp_per_capita=_cell(rec["gdp_per_capita"]),
                    population=_cell(rec["population"]),
                    unemployment_pct=_cell(rec["unemployment_pct"]),
                    region=(rec.get("region") or "").strip() or None,
                    window=window,
                ))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return rows


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_indicators(rows: Sequence[CountryIndicators], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDICATOR_COLUMNS + OPTIONAL_COLUMNS)
        for r in rows:
            w.writerow([
                r.country, _fmt(r.pfi), _fmt(r.cellular_per_100), _fmt(r.gdp_per_capita),
                _fmt(r.population), _fmt(r.unemployment_pct), r.region or "",
                r.window.start.isoformat() if r.window else "",
                r.window.end.isoformat() if r.window else "",
            ])


def country_level(indicators: Sequence[CountryIndicators]) -> dict[str, CountryIndicators]:
    """Country-level rows; panel-only countries are averaged across their windows."""
    out = {r.country: r for r in indicators if r.window is None}
    panel = defaultdict(list)
    for r in indicators:
        if r.window is not None and r.country not in out:
            panel[r.country].append(r)
    for country, rows in panel.items():
        values = {}
        for f in fields(CountryIndicators):
            if f.name in ("country", "region", "window"):
                continue
            vals = [getattr(r, f.name) for r in rows if getattr(r, f.name) is not None]
            values[f.name] = float(np.mean(vals)) if vals else None
        out[country] = CountryIndicators(country=country, region=rows[0].region, **values)
    return out


@dataclass(frozen=True)
class CorrelationResult:
    k: int
    r: float
    ci_low: float
    ci_high: float
    n: int
    level: float = 0.95


def pearson_r(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise ValidationError("pearson_r needs at least 3 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance input")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def fisher_ci(r: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Two-sided Fisher-z interval tanh(atanh(r) +/- z / sqrt(n - 3))."""
    if abs(r) >= 1:
        raise DegenerateInputError("|r| = 1 gives a degenerate interval")
    if n < 4:
        raise ValidationError("fisher_ci needs n >= 4")
    if not 0 < level < 1:
        raise ValidationError("level must be in (0, 1)")
    z = sps.norm.ppf((1 + level) / 2)
    half = z / math.sqrt(n - 3)
    centre = math.atanh(r)
    return math.tanh(centre - half), math.tanh(centre + half)


def correlation_sweep(diversity: Sequence[DiversityRecord], indicators: Sequence[CountryIndicators],
                      ks: Sequence[int], level: float = 0.95,
                      x: str = "u") -> list[CorrelationResult]:
    """Pearson r of (U^c(k), PFI_c) for each k, dropping countries without PFI.

    ``x="log_u"`` correlates log U instead of raw U.

    A k with fewer than 4 usable countries or zero variance is skipped with a
    warning rather than failing the whole sweep.
    """
    if x not in ("u", "log_u"):
        raise ValidationError(f"x must be 'u' or 'log_u', got {x!r}")
    transform = math.log if x == "log_u" else float
    pfi = {c: r.pfi for c, r in country_level(indicators).items() if r.pfi is not None}
    by_k = defaultdict(dict)
    for rec in diversity:
        if rec.l is not None:
            continue
        if rec.country in by_k[rec.k]:
            raise ValidationError(
                f"several windows for {rec.country} at k={rec.k}; correlate full-period values"
            )
        by_k[rec.k][rec.country] = transform(rec.value)
    results = []
    for k in ks:
        pairs = [(u, pfi[c]) for c, u in sorted(by_k.get(k, {}).items()) if c in pfi]
        if len(pairs) < 4:
            log.warning("k=%d: only %d countries with both diversity and PFI; skipped", k, len(pairs))
            continue
        xs, ys = zip(*pairs)
        try:
            r = pearson_r(xs, ys)
            if abs(r) > 1 - 1e-12:
                # exact linear relation: the interval collapses onto r
                r = math.copysign(1.0, r)
                lo = hi = r
            else:
                lo, hi = fisher_ci(r, len(pairs), level)
        except DegenerateInputError as exc:
            log.warning("k=%d skipped: %s", k, exc)
            continue
        results.append(CorrelationResult(k, r, lo, hi, len(pairs), level))
    return results


def vif(design) -> np.ndarray:
    """Variance inflation factor of each non-intercept column.

    Each column is regressed by least squares on the remaining non-intercept
    columns plus an intercept; VIF_j = 1 / (1 - R_j^2). Exactly collinear
    columns get ``inf`` and are named in a warning.
    """
    X = np.asarray(design.X, dtype=float)
    names = list(design.names)
    cols = [j for j, nm in enumerate(names) if not (design.intercept and j == 0)]
    if len(cols) < 2:
        raise ValidationError("vif needs at least two non-intercept columns")
    n = X.shape[0]
    if n < len(cols) + 2:
        raise ValidationError("vif needs more rows than columns")
    out = np.empty(len(cols))
    ones = np.ones((n, 1))
    for i, j in enumerate(cols):
        target = X[:, j]
        others = np.hstack([ones, X[:, [c for c in cols if c != j]]])
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        centred = target - target.mean()
        sst = centred @ centred
        sse = resid @ resid
        if sst == 0 or sse <= 1e-12 * sst:
            out[i] = np.inf
        else:
            out[i] = sst / sse
    bad = [names[j] for i, j in enumerate(cols) if np.isinf(out[i])]
    if bad:
        log.warning("exact collinearity among columns: %s", ", ".join(bad))
    return out
