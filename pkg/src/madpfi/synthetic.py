"""Synthetic corpora and indicator tables with planted ground truth, plus oracles.

All randomness comes from numpy's PCG64 generator (``numpy.random.default_rng``)
seeded through ``SeedSequence``; identical parameters give byte-identical output.

Daily lists are built from per-country topic pools walked cyclically: day ``d``
takes the next ``width`` pool entries. Once the walk has wrapped, every pool
entry has appeared, so the union over days equals the pool size exactly. This
is what lets the ``paper-shape`` preset plant exact diversity values.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .corpus import Corpus, DailySnapshot
from .countries import ISO_ALPHA2
from .diversity import Window, make_windows
from .errors import ValidationError
from .stats import CountryIndicators, pearson_r

PAPER_START = dt.date(2016, 3, 7)
PAPER_END = dt.date(2016, 10, 9)
N_COMENTION_IDS = 997

# Table-1 style attribute effects used as planted truth: cellular, log gdp,
# log population, unemployment.
DEFAULT_ATTR_COEFS = (-0.05, -3.79, -0.16, -0.54)


def _comention_ids():
    return [f"/g/cm{i:04d}" for i in range(N_COMENTION_IDS)]


class _ComentionRings:
    """Each topic owns a ring of co-mention ids; its j-th appearance takes the
    ``per_mention`` ids starting at position ``per_mention * j`` of its ring.

    Topics are registered in order and addressed by integer handle.
    """

    def __init__(self, per_mention):
        self.per_mention = per_mention
        self.ids = _comention_ids()
        self._cache = {}
        self.cycles = []
        self.count = []

    def assign(self, offset, size):
        key = (offset, size)
        cycle = self._cache.get(key)
        if cycle is None:
            m = self.per_mention
            cycle = [()]
            if m:
                ids = self.ids
                period = size // math.gcd(m, size)
                cycle = [
                    tuple(ids[(offset + (m * j + i) % size) % N_COMENTION_IDS] for i in range(m))
                    for j in range(period)
                ]
            self._cache[key] = cycle
        self.cycles.append(cycle)
        self.count.append(0)
        return len(self.cycles) - 1

    def take(self, handles):
        cycles, count = self.cycles, self.count
        out = []
        for h in handles:
            j = count[h]
            count[h] = j + 1
            cyc = cycles[h]
            out.append(cyc[j % len(cyc)])
        return tuple(out)


@dataclass(frozen=True)
class SynthParams:
    """Knobs for :func:`gen_corpus`.

    ``topic_pool_size`` is the mean per-country pool; ``pool_spread`` is the sd
    of its log across countries. Small pools mean heavy day-to-day overlap,
    large pools mean little. ``p_missing`` drops whole country-days and
    ``p_short`` truncates a day's list to a random shorter depth.
    """

    countries: int = 20
    days: int = 30
    topics_per_day: int = 30
    topic_pool_size: int = 120
    pool_spread: float = 0.0
    comentions: int = 3
    comention_ring: tuple = (3, 8)
    p_missing: float = 0.0
    p_short: float = 0.0
    shuffle: bool = True
    start: dt.date = PAPER_START
    seed: int = 0

    def __post_init__(self):
        for name in ("countries", "days", "topics_per_day", "topic_pool_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.topics_per_day > 100:
            raise ValidationError("topics_per_day must be <= 100")
        if self.topics_per_day > self.topic_pool_size:
            raise ValidationError("topics_per_day cannot exceed topic_pool_size")
        if self.countries > len(ISO_ALPHA2):
            raise ValidationError(f"at most {len(ISO_ALPHA2)} countries")
        lo, hi = self.comention_ring
        if self.comentions and not self.comentions <= lo <= hi:
            raise ValidationError("comention_ring sizes must be >= comentions")
        if not (0 <= self.p_missing < 1 and 0 <= self.p_short < 1):
            raise ValidationError("probabilities must lie in [0, 1)")


def gen_corpus(params: SynthParams) -> Corpus:
    rng = np.random.default_rng(params.seed)
    codes = sorted(ISO_ALPHA2)[: params.countries]
    dates = [params.start + dt.timedelta(days=i) for i in range(params.days)]
    width = params.topics_per_day
    rings = _ComentionRings(params.comentions)
    lo, hi = params.comention_ring
    snaps = []
    for cc in codes:
        size = params.topic_pool_size
        if params.pool_spread:
            size = int(round(size * math.exp(params.pool_spread * rng.standard_normal())))
        size = max(width, size)
        pool = [f"/m/{cc.lower()}{i:05d}" for i in range(size)]
        handles = [rings.assign(int(rng.integers(N_COMENTION_IDS)), int(rng.integers(lo, hi + 1)))
                   for _ in pool]
        cursor = 0
        for day in dates:
            idx = [(cursor + i) % size for i in range(width)]
            cursor = (cursor + width) % size
            if params.shuffle:
                idx = [idx[i] for i in rng.permutation(width)]
            missing = params.p_missing and rng.random() < params.p_missing
            short = params.p_short and rng.random() < params.p_short
            if missing:
                continue
            depth = int(rng.integers(1, width)) if short and width > 1 else width
            idx = idx[:depth]
            snaps.append(DailySnapshot(cc, day, tuple(pool[i] for i in idx),
                                       rings.take([handles[i] for i in idx])))
    return Corpus(snaps, date_range=(dates[0], dates[-1]), label=f"synthetic(seed={params.seed})")


# --- paper-shape preset -------------------------------------------------------

# bottom five at k=10 and the two extremes at k=90
PLANTED_U10 = {"YE": 86, "IQ": 107, "SA": 120, "EG": 124, "AE": 126}
PLANTED_U90 = {"LU": 4012, "EG": 959}
PLANTED_SUBTOPIC_U10 = {"YE": 795}
PAPER_SURVIVAL = {10: 129, 90: 88, 100: 0}
N_COUNTRIES = 196
N_OBSERVED_DAYS = 211
N_EPOCHS = 7
BANDS = ((0, 10), (10, 90), (90, 100))


def _split(total, parts, minimum, cap, rng):
    """Split ``total`` into ``parts`` integers each in [minimum, cap]."""
    if not parts * minimum <= total <= parts * cap:
        raise ValidationError(f"cannot split {total} into {parts} parts in [{minimum}, {cap}]")
    w = rng.dirichlet(np.full(parts, 40.0))
    sizes = np.clip(np.floor(w * total).astype(int), minimum, cap)
    while sizes.sum() != total:
        i = int(rng.integers(parts))
        if sizes.sum() < total and sizes[i] < cap:
            sizes[i] += 1
        elif sizes.sum() > total and sizes[i] > minimum:
            sizes[i] -= 1
    return [int(s) for s in sizes]


@dataclass
class _CountryPlan:
    code: str
    group: str
    u90: int
    s1: int
    s3: int
    dips: dict = field(default_factory=dict)
    absent: set = field(default_factory=set)
    rings1: list | None = None


def _paper_shape_plan(rng, observed):
    planted = ["LU", "EG", "YE", "IQ", "SA", "AE"]
    others = [c for c in sorted(ISO_ALPHA2) if c not in planted]
    chosen = [others[i] for i in sorted(rng.choice(len(others), N_COUNTRIES - len(planted),
                                                   replace=False))]
    order = [chosen[i] for i in rng.permutation(len(chosen))]
    group_a = ["LU", "EG"] + order[:86]
    group_b = ["YE", "IQ", "SA", "AE"] + order[86:123]
    group_c = order[123:]
    n = len(observed)
    plans = []
    for code in sorted(group_a + group_b + group_c):
        group = "A" if code in group_a else "B" if code in group_b else "C"
        if code in PLANTED_U90:
            u90 = PLANTED_U90[code]
        elif code in PLANTED_U10:
            u90 = int(round(PLANTED_U10[code] / 0.12))
        else:
            u90 = int(np.clip(round(math.exp(rng.normal(math.log(2000), 0.33))), 1000, 3900))
        if code in PLANTED_U10:
            s1 = PLANTED_U10[code]
        else:
            rho = 0.12 * math.exp(rng.normal(0.0, 0.12))
            s1 = int(np.clip(round(u90 * rho), 127, 455))
        s3 = int(np.clip(round(u90 * 0.1), 70, 600))
        plan = _CountryPlan(code, group, u90, s1, s3)

        n_dips = int(rng.integers(1, 6))
        dip_days = rng.choice(n, n_dips, replace=False)
        if group == "A":
            depth_lo, depth_hi = 90, 99
        else:
            depth_lo, depth_hi = 10, 89
        for j, d in enumerate(dip_days):
            lo = depth_lo if j == 0 else max(depth_lo, 10)
            plan.dips[observed[int(d)]] = int(rng.integers(lo, depth_hi + 1 if j == 0 else 100))
        if group == "C":
            if rng.random() < 0.5:
                k_abs = int(rng.integers(1, 11))
                plan.absent = {observed[int(i)] for i in rng.choice(n, k_abs, replace=False)}
            else:
                day = observed[int(rng.integers(n))]
                plan.dips[day] = int(rng.integers(1, 10))
        plans.append(plan)
    return plans


def _yemen_rings():
    # 65 topics with 9 co-mentions in their ring and 21 with 10: 65*9 + 21*10 = 795
    return [9] * 65 + [10] * 21


def paper_shape_corpus(seed: int = 2016) -> Corpus:
    """196 countries over 7 March - 9 October 2016 with 211 observed crawl days.

    Plants the target survival counts (|C^10| = 129, |C^90| = 88,
    |C^100| = 0) and the target extreme diversity values: U(90) of 4012 for
    LU (highest) and 959 for EG (lowest), U(10) of 86/107/120/124/126 for
    YE/IQ/SA/EG/AE (the five lowest) and subtopic U(10, l=3) of 795 for YE
    (lowest). Topics turn over in seven 31-day epochs, so 31-day windows
    split each country's diversity into seven comparable pieces.
    """
    ss = np.random.SeedSequence(seed)
    plan_seed, *country_seeds = ss.spawn(N_COUNTRIES + 1)
    rng = np.random.default_rng(plan_seed)
    span = (PAPER_END - PAPER_START).days + 1
    gaps = set(int(i) for i in rng.choice(np.arange(1, span - 1), span - N_OBSERVED_DAYS,
                                          replace=False))
    observed = [PAPER_START + dt.timedelta(days=i) for i in range(span) if i not in gaps]
    epoch_of = {d: (d - PAPER_START).days // 31 for d in observed}
    epoch_days = [sum(1 for d in observed if epoch_of[d] == e) for e in range(N_EPOCHS)]
    plans = _paper_shape_plan(rng, observed)

    rings = _ComentionRings(3)
    names = []  # topic id by ring handle
    snaps = []
    for plan, cseed in zip(plans, country_seeds):
        crng = np.random.default_rng(cseed)
        code = plan.code
        counter = 0
        # per band, per epoch: (pool, cursor)
        pools = []
        totals = (plan.s1, plan.u90 - plan.s1, plan.s3)
        for b, (lo, hi) in enumerate(BANDS):
            width = hi - lo
            # a band-1 topic must show up at least 4 times to cycle through its ring
            cap = min(epoch_days) * width // (4 if b == 0 else 1)
            parts = _split(totals[b], N_EPOCHS, width, cap, crng)
            band_pools = []
            ring_sizes = _yemen_rings() if (b == 0 and code == "YE") else None
            k = 0
            for size in parts:
                offsets = crng.integers(N_COMENTION_IDS, size=size).tolist()
                if ring_sizes:
                    sizes = ring_sizes[k:k + size]
                    k += size
                else:
                    sizes = crng.integers(8, 13, size=size).tolist()
                pool = [rings.assign(o, r) for o, r in zip(offsets, sizes)]
                names.extend(f"/m/{code.lower()}{counter + i:05d}" for i in range(size))
                counter += size
                band_pools.append([pool, 0])
            pools.append(band_pools)

        for day in observed:
            if day in plan.absent:
                continue
            e = epoch_of[day]
            topics = []
            for b, (lo, hi) in enumerate(BANDS):
                width = hi - lo
                entry = pools[b][e]
                pool, cursor = entry
                size = len(pool)
                chunk = [pool[(cursor + i) % size] for i in range(width)]
                entry[1] = (cursor + width) % size
                if b > 0:
                    chunk = [chunk[i] for i in crng.permutation(width)]
                topics.extend(chunk)
            depth = plan.dips.get(day, 100)
            handles = topics[:depth]
            snaps.append(DailySnapshot(code, day, tuple(names[h] for h in handles),
                                       rings.take(handles)))
    return Corpus(snaps, date_range=(PAPER_START, PAPER_END), label=f"synthetic paper-shape (seed={seed})")


# --- indicators ---------------------------------------------------------------


def _latent_union(corpus: Corpus, country, k, window=None):
    out = set()
    for day, snap in corpus.snapshots[country].items():
        if window is None or window.contains(day):
            out.update(snap.topics[:k])
    return len(out)


def gen_indicators(
    corpus: Corpus,
    coupling: float = -35.08,
    noise_sd: float = 5.0,
    seed: int = 0,
    *,
    windows: Sequence[Window] | None = None,
    group_sd: float = 12.0,
    region_sd: float = 4.0,
    n_regions: int = 8,
    attr_coefs: Sequence[float] = DEFAULT_ATTR_COEFS,
    mean_pfi: float = 35.0,
    k: int = 90,
    missing_pfi: Sequence[str] | int = 0,
    target_r: float | None = None,
) -> list[CountryIndicators]:
    """Synthetic PFI and national attributes for every corpus country.

    PFI = a + coupling * log U + attribute effects + group effect + noise, where
    U is the union of a country's top-``k`` topics (over each window when
    ``windows`` is given, else over the whole period) and the group effect is a
    region effect plus a country effect. The intercept ``a`` centres PFI near
    ``mean_pfi``. Attributes are drawn independently of each other and of U, so
    their VIFs stay close to 1.

    With windows, one row per (country, window) is emitted in addition to one
    country-level row whose values are the window means. ``missing_pfi`` blanks
    the PFI of the named countries (or of that many countries among those
    observed every day). ``target_r`` rescales the country effects so that the
    Pearson correlation of full-period U with country PFI over countries that
    keep a PFI equals the target.
    """
    if not corpus.countries:
        raise ValidationError("corpus has no countries")
    rng = np.random.default_rng(seed)
    countries = list(corpus.countries)
    nc = len(countries)

    regions = [f"R{(i % n_regions) + 1}" for i in rng.permutation(nc)]
    region_eff = {f"R{i + 1}": v for i, v in enumerate(rng.normal(0, region_sd, n_regions))}
    country_eff = rng.normal(0, group_sd, nc)
    cellular = np.clip(rng.normal(100, 25, nc), 5, 200)
    gdp = np.exp(rng.normal(math.log(12000), 1.0, nc))
    pop = np.exp(rng.normal(math.log(1e7), 1.4, nc))
    unemp = np.clip(rng.normal(8, 4, nc), 0.5, 30)
    attrs = np.column_stack([cellular, np.log(gdp), np.log(pop), unemp])
    attr_part = attrs @ np.asarray(attr_coefs, dtype=float)

    full_u = np.array([_latent_union(corpus, c, k) for c in countries], dtype=float)
    wins = list(windows) if windows else []
    if wins:
        win_u = np.array([[max(_latent_union(corpus, c, k, w), 1) for w in wins] for c in countries],
                         dtype=float)
        eps = rng.normal(0, noise_sd, (nc, len(wins))) if noise_sd else np.zeros((nc, len(wins)))
        signal = coupling * np.log(win_u)
    else:
        eps = rng.normal(0, noise_sd, (nc, 1)) if noise_sd else np.zeros((nc, 1))
        signal = coupling * np.log(full_u)[:, None]
    base = signal + attr_part[:, None] + eps
    reg = np.array([region_eff[r] for r in regions])
    intercept = mean_pfi - float(np.mean(base + reg[:, None]))

    n_dates = len(corpus.dates)
    complete = [c for c in countries if len(corpus.snapshots[c]) == n_dates and
                min(s.depth for s in corpus.snapshots[c].values()) >= k]
    complete_set = set(complete)
    if isinstance(missing_pfi, int):
        pool = complete or countries
        idx = rng.choice(len(pool), min(missing_pfi, len(pool)), replace=False)
        missing = {pool[int(i)] for i in idx}
    else:
        missing = set(missing_pfi)

    def panel(scale):
        return np.maximum(intercept + base + (reg + scale * country_eff)[:, None], 0.5)

    scale = 1.0
    if target_r is not None:
        eligible = np.array([c not in missing and c in complete_set for c in countries])

        def gap(s):
            return pearson_r(full_u[eligible], panel(s).mean(axis=1)[eligible]) - target_r

        if gap(0.0) * gap(20.0) > 0:
            raise ValidationError(f"target_r={target_r} not reachable with these settings")
        scale = optimize.brentq(gap, 0.0, 20.0, xtol=1e-12)

    values = panel(scale)
    rows = []
    for i, c in enumerate(countries):
        pfi_c = None if c in missing else float(values[i].mean())
        common = dict(
            cellular_per_100=float(cellular[i]),
            gdp_per_capita=float(gdp[i]),
            population=float(pop[i]),
            unemployment_pct=float(unemp[i]),
            region=regions[i],
        )
        rows.append(CountryIndicators(country=c, pfi=pfi_c, **common))
        for j, w in enumerate(wins):
            rows.append(CountryIndicators(
                country=c, pfi=None if c in missing else float(values[i, j]), window=w, **common
            ))
    return rows


@dataclass
class SynthBundle:
    corpus: Corpus
    indicators: list
    window_spec: str
    description: str


PAPER_TARGET_R90 = -0.599


def paper_shape(seed: int = 2016) -> SynthBundle:
    """The ``paper-shape`` corpus plus panel indicators (31-day windows, 8 PFI gaps)."""
    corpus = paper_shape_corpus(seed)
    windows = make_windows("days:31", corpus.date_range, corpus.dates)
    indicators = gen_indicators(
        corpus, coupling=-35.08, noise_sd=5.0, seed=seed, windows=windows,
        missing_pfi=8, target_r=PAPER_TARGET_R90,
    )
    return SynthBundle(corpus, indicators, "days:31",
                       "SYNTHETIC paper-shape fixture; planted values, not real data")


def minimal(seed: int = 0) -> SynthBundle:
    """Two countries over three days: enough to exercise every stage's error path."""
    corpus = gen_corpus(SynthParams(countries=2, days=3, topics_per_day=10, topic_pool_size=20,
                                    seed=seed))
    indicators = gen_indicators(corpus, seed=seed, k=10)
    return SynthBundle(corpus, indicators, "full", "SYNTHETIC minimal fixture")


PRESETS = {"paper-shape": paper_shape, "minimal": minimal}


# --- oracles --------------------------------------------------------------------


def closed_form_oneway_reml(y, groups):
    """REML variance components of a balanced one-way layout from the ANOVA table.

    Interior solution: sigma^2 = MSW and sigma_b^2 = (MSB - MSW) / n_per. When
    MSB < MSW the group variance sits on its zero boundary and the REML residual
    variance becomes the pooled total SS / (N - 1). Returns
    ``(sigma_b2, sigma2, boundary)``.
    """
    y = np.asarray(y, dtype=float)
    labels, codes = np.unique(np.asarray(groups), return_inverse=True)
    sizes = np.bincount(codes)
    q = len(labels)
    if q < 2 or sizes.min() < 2 or np.any(sizes != sizes[0]):
        raise ValidationError("oracle needs a balanced design with >= 2 groups of >= 2 rows")
    m = int(sizes[0])
    n = y.size
    means = np.bincount(codes, weights=y) / m
    grand = y.mean()
    ssb = m * np.sum((means - grand) ** 2)
    ssw = np.sum((y - means[codes]) ** 2)
    msb = ssb / (q - 1)
    msw = ssw / (n - q)
    if msb >= msw:
        return (msb - msw) / m, msw, msw == 0
    return 0.0, (ssb + ssw) / (n - 1), True


def dense_deviance(X, y, groups, theta, method="REML"):
    """Profiled deviance by brute force: dense V, slogdet and solve.

    Deliberately ignores the block structure so it can check the fast path.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    g = np.asarray(groups)
    n, p = X.shape
    Z = (g[:, None] == np.unique(g)[None, :]).astype(float)
    V = np.eye(n) + theta**2 * Z @ Z.T
    Vi = np.linalg.inv(V)
    A = X.T @ Vi @ X
    beta = np.linalg.solve(A, X.T @ Vi @ y)
    r = y - X @ beta
    rss = r @ Vi @ r
    logdet_v = np.linalg.slogdet(V)[1]
    if method.upper() == "ML":
        s2 = rss / n
        sigma = s2 * V
        dev = n * math.log(2 * math.pi) + np.linalg.slogdet(sigma)[1] + r @ np.linalg.solve(sigma, r)
    else:
        s2 = rss / (n - p)
        sigma = s2 * V
        dev = ((n - p) * math.log(2 * math.pi) + np.linalg.slogdet(sigma)[1]
               + np.linalg.slogdet(X.T @ np.linalg.solve(sigma, X))[1]
               + r @ np.linalg.solve(sigma, r))
    return float(dev), beta, float(s2), float(logdet_v)


def ols(X, y):
    """Plain least squares: ``(beta, se, loglik_ml, sigma2_ml, sigma2_unbiased)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    rss = r @ r
    s2_ml = rss / n
    s2_unb = rss / (n - p)
    loglik = -0.5 * n * (math.log(2 * math.pi * s2_ml) + 1)
    return beta, s2_ml, s2_unb, loglik, np.linalg.inv(X.T @ X)


def brute_force_union(corpus: Corpus, country, k, l=None, days=None):
    """Recount diversity from raw snapshots with plain loops over a set.

    Reads ranks straight from the raw snapshots instead of the filtered dataset.
    """
    seen = set()
    for day, snap in sorted(corpus.snapshots[country].items()):
        if days is not None and day not in days:
            continue
        for rank, (topic, cms) in enumerate(zip(snap.topics, snap.comentions), start=1):
            if rank > k:
                break
            if l is None:
                item_list = [topic]
            elif len(cms) == 0:
                item_list = [(topic, topic)]
            else:
                item_list = [(topic, c) for c in cms[:l]]
            for item in item_list:
                seen.add(item)
    return len(seen)
