"""Random-intercept linear mixed model fitted by profiled ML or REML.

The model is ``y = X beta + Z b + e`` with one random intercept per group,
``b ~ N(0, sigma_b^2)`` and ``e ~ N(0, sigma^2)``. Writing ``theta = sigma_b / sigma``
the marginal covariance is ``sigma^2 V`` with ``V = I + theta^2 Z Z'``. V is block
diagonal and each block is identity plus a rank-one term, so every quantity
needed here reduces to per-group sums:

    V_g^-1   = I - theta^2 / (1 + n_g theta^2) 11'
    log|V_g| = log(1 + n_g theta^2)

Given theta, beta and sigma^2 have closed forms and the deviance becomes a
function of theta alone, which is minimized over [0, 1e3].
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize
from scipy import stats as sps

from .errors import (
    ConvergenceError,
    InsufficientDataError,
    RankDeficiencyError,
    UnidentifiableModelError,
    ValidationError,
)

THETA_MAX = 1e3
COND_LIMIT = 1e12
METHODS = ("ML", "REML")

# short names accepted in formulas
ALIASES = {
    "u": "u",
    "diversity": "u",
    "attention_diversity": "u",
    "cellular": "cellular_per_100",
    "gdp": "gdp_per_capita",
    "pop": "population",
    "population": "population",
    "unemployment": "unemployment_pct",
}


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    names: tuple[str, ...]
    intercept: bool
    groups: np.ndarray
    group_labels: tuple = ()
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValidationError("X must be two-dimensional")
        n, p = X.shape
        if len(self.names) != p:
            raise ValidationError("column names do not match X")
        if n <= p:
            raise InsufficientDataError(f"need more rows than columns (n={n}, p={p})")
        groups = np.asarray(self.groups)
        if groups.shape != (n,):
            raise ValidationError("every row needs a group label")
        for j in range(p):
            if self.intercept and j == 0:
                continue
            if np.all(X[:, j] == X[0, j]):
                raise ValidationError(f"column {self.names[j]!r} is constant")
        if not np.issubdtype(groups.dtype, np.integer) or groups.min() < 0:
            labels, codes = np.unique(groups, return_inverse=True)
            object.__setattr__(self, "group_labels", tuple(labels.tolist()))
            groups = codes
        elif not self.group_labels:
            object.__setattr__(self, "group_labels", tuple(range(int(groups.max()) + 1)))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "groups", groups.astype(np.intp))

    @classmethod
    def from_arrays(cls, X, groups, names=None, intercept=True):
        X = np.asarray(X, dtype=float)
        if names is None:
            names = tuple(["(Intercept)"] if intercept else []) + tuple(
                f"x{j}" for j in range(int(intercept), X.shape[1])
            )
        return cls(X=X, names=tuple(names), intercept=intercept, groups=np.asarray(groups))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return len(np.unique(self.groups))

    @property
    def group_sizes(self):
        return np.bincount(self.groups)


@dataclass(frozen=True)
class Term:
    column: str
    transform: str = "none"

    def __post_init__(self):
        if self.transform not in ("none", "log"):
            raise ValidationError(f"unknown transform {self.transform!r}")

    @property
    def name(self):
        return f"log({self.column})" if self.transform == "log" else self.column


@dataclass(frozen=True)
class LmmSpec:
    response: str
    terms: tuple[Term, ...]
    group: str = "country"
    method: str = "REML"

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.upper())
        if self.method not in METHODS:
            raise ValidationError(f"method must be ML or REML, got {self.method!r}")
        cols = [t.column for t in self.terms]
        if self.response in cols:
            raise ValidationError("response cannot also be a predictor")
        if self.group in cols:
            raise ValidationError("grouping column cannot also be a predictor")

    @classmethod
    def parse(cls, formula: str, group="country", method="REML"):
        """Parse ``"pfi ~ log(u) + cellular + log(gdp)"`` style formulas."""
        if "~" not in formula:
            raise ValidationError(f"formula needs '~': {formula!r}")
        lhs, rhs = (s.strip() for s in formula.split("~", 1))
        terms = []
        for raw in rhs.split("+"):
            raw = raw.strip()
            if not raw or raw == "1":
                continue
            m = re.fullmatch(r"log\(\s*([A-Za-z_][\w]*)\s*\)", raw)
            if m:
                terms.append(Term(ALIASES.get(m.group(1), m.group(1)), "log"))
            elif re.fullmatch(r"[A-Za-z_]\w*", raw):
                terms.append(Term(ALIASES.get(raw, raw)))
            else:
                raise ValidationError(f"cannot parse term {raw!r}")
        if not terms:
            raise ValidationError("formula has no predictors")
        return cls(response=lhs, terms=tuple(terms), group=group, method=method)

    @property
    def formula(self):
        return f"{self.response} ~ " + " + ".join(t.name for t in self.terms)


_MODEL_FORMULAS = {
    1: "pfi ~ log(u)",
    2: "pfi ~ cellular + log(gdp) + log(pop) + unemployment",
    3: "pfi ~ log(u) + cellular + log(gdp) + log(pop) + unemployment",
}


def model_spec(model: int, group="country", method="REML") -> LmmSpec:
    """The three fixed model columns: diversity only, attributes only, both."""
    try:
        formula = _MODEL_FORMULAS[int(model)]
    except (KeyError, ValueError):
        raise ValidationError(f"model must be 1, 2 or 3, got {model!r}") from None
    return LmmSpec.parse(formula, group=group, method=method)


def build_design(frame, spec: LmmSpec):
    """Listwise-delete incomplete rows, log-transform tagged terms, prepend an intercept.

    ``frame`` is a pandas DataFrame. Returns ``(design, y)``; the number of rows
    dropped is kept on ``design.dropped_rows``.
    """
    needed = [spec.response, spec.group] + [t.column for t in spec.terms]
    missing = [c for c in dict.fromkeys(needed) if c not in frame.columns]
    if missing:
        raise ValidationError(f"frame lacks columns {missing}")
    sub = frame[list(dict.fromkeys(needed))]
    complete = sub.notna().all(axis=1).to_numpy()
    dropped = int((~complete).sum())
    sub = sub[complete]
    p = len(spec.terms) + 1
    if len(sub) < p + 2:
        raise InsufficientDataError(f"only {len(sub)} complete rows for {p} fixed effects")

    cols = [np.ones(len(sub))]
    for term in spec.terms:
        values = sub[term.column].to_numpy(dtype=float)
        if term.transform == "log":
            bad = np.flatnonzero(values <= 0)
            if bad.size:
                row = sub.index[bad[0]]
                raise ValidationError(
                    f"log of non-positive value {values[bad[0]]!r} in column "
                    f"{term.column!r} at row {row!r}"
                )
            values = np.log(values)
        cols.append(values)
    design = DesignMatrix(
        X=np.column_stack(cols),
        names=("(Intercept)",) + tuple(t.name for t in spec.terms),
        intercept=True,
        groups=sub[spec.group].astype(str).to_numpy(),
        dropped_rows=dropped,
    )
    return design, sub[spec.response].to_numpy(dtype=float)


class _Profile:
    """Per-group sufficient statistics for repeated deviance evaluations."""

    def __init__(self, design: DesignMatrix, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (design.n,):
            raise ValidationError("response length does not match design")
        self.design = design
        self.X = design.X
        self.y = y
        self.g = design.groups
        self.ng = np.bincount(self.g).astype(float)
        q, p = len(self.ng), design.p
        self.Sx = np.zeros((q, p))
        np.add.at(self.Sx, self.g, self.X)
        self.Sy = np.bincount(self.g, weights=y, minlength=q)
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ y
        self.n, self.p = design.n, p

    def solve(self, theta):
        phi = theta * theta
        w = phi / (1.0 + self.ng * phi)
        A = self.XtX - self.Sx.T @ (w[:, None] * self.Sx)
        b = self.Xty - self.Sx.T @ (w * self.Sy)
        d = np.sqrt(np.diag(A))
        if np.any(d == 0):
            raise RankDeficiencyError("zero column in X'V^-1X", self._names(d == 0))
        scaled = A / np.outer(d, d)
        evals, evecs = np.linalg.eigh(scaled)
        if evals[0] <= 0 or evals[-1] / evals[0] > COND_LIMIT:
            v = evecs[:, 0]
            cols = self._names(np.abs(v) > 0.1 * np.abs(v).max())
            raise RankDeficiencyError(
                f"X'V^-1X is singular or ill-conditioned; dependent columns: {', '.join(cols)}",
                cols,
            )
        cho = linalg.cho_factor(A)
        beta = linalg.cho_solve(cho, b)
        resid = self.y - self.X @ beta
        Rg = np.bincount(self.g, weights=resid, minlength=len(self.ng))
        Q = resid @ resid - w @ (Rg * Rg)
        return cho, beta, resid, Rg, Q

    def _names(self, mask):
        return [nm for nm, m in zip(self.design.names, mask) if m]

    def deviance(self, theta, method):
        cho, beta, _, _, Q = self.solve(theta)
        if Q <= 0:
            raise UnidentifiableModelError("zero residual variance")
        n, p = self.n, self.p
        logdet_v = np.log1p(self.ng * theta * theta).sum()
        if method == "ML":
            s2 = Q / n
            dev = n * math.log(2 * math.pi * s2) + logdet_v + n
        else:
            s2 = Q / (n - p)
            logdet_a = 2.0 * np.log(np.diag(cho[0])).sum()
            dev = (n - p) * math.log(2 * math.pi * s2) + logdet_v + logdet_a + (n - p)
        return float(dev), beta, float(s2), cho

    def gradient_phi(self, theta, method):
        """d deviance / d(theta^2); finite at theta = 0."""
        cho, _, _, Rg, Q = self.solve(theta)
        phi = theta * theta
        denom = 1.0 + self.ng * phi
        dw = 1.0 / denom**2
        dQ = -(dw @ (Rg * Rg))
        dlogv = (self.ng / denom).sum()
        if method == "ML":
            return self.n * dQ / Q + dlogv
        M = linalg.cho_solve(cho, self.Sx.T)
        quad = np.einsum("ij,ji->i", self.Sx, M)
        return (self.n - self.p) * dQ / Q + dlogv - dw @ quad


def _check_method(method):
    method = method.upper()
    if method not in METHODS:
        raise ValidationError(f"method must be ML or REML, got {method!r}")
    return method


def profiled_deviance(design: DesignMatrix, y, theta: float, method: str = "REML"):
    """Deviance profiled over beta and sigma^2 at a fixed ``theta``.

    Returns ``(deviance, beta_hat, sigma2_hat)``.
    """
    if theta < 0:
        raise ValidationError("theta must be >= 0")
    dev, beta, s2, _ = _Profile(design, y).deviance(float(theta), _check_method(method))
    return dev, beta, s2


def information_criteria(loglik: float, k_params: int, n: int) -> tuple[float, float]:
    if n < 1 or k_params < 1:
        raise ValidationError("need n >= 1 and k_params >= 1")
    return -2.0 * loglik + 2.0 * k_params, -2.0 * loglik + k_params * math.log(n)


@dataclass(frozen=True)
class LmmFit:
    names: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    z: np.ndarray
    pvalues: np.ndarray
    cov_beta: np.ndarray
    theta: float
    sigma2: float
    sigma_b2: float
    loglik: float
    deviance: float
    aic: float
    bic: float
    r2_marginal: float
    r2_conditional: float
    n: int
    p_fixed: int
    q: int
    k_params: int
    method: str
    at_boundary: bool = False
    iterations: int = 0
    dropped_rows: int = 0
    trace: list = field(default_factory=list, repr=False)

    def coef(self, name):
        return float(self.beta[self.names.index(name)])

    def to_dict(self):
        return {
            "method": self.method,
            "n": self.n,
            "q": self.q,
            "p_fixed": self.p_fixed,
            "k_params": self.k_params,
            "dropped_rows": self.dropped_rows,
            "coefficients": [
                {"name": r.name, "estimate": r.estimate, "se": r.se, "z": r.z, "p": r.p,
                 "stars": r.stars}
                for r in wald_table(self)
            ],
            "theta": self.theta,
            "sigma2": self.sigma2,
            "sigma_b2": self.sigma_b2,
            "loglik": self.loglik,
            "deviance": self.deviance,
            "aic": self.aic,
            "bic": self.bic,
            "r2_marginal": self.r2_marginal,
            "r2_conditional": self.r2_conditional,
            "at_boundary": self.at_boundary,
        }


def fit_at_theta(design: DesignMatrix, y, theta: float, method: str = "REML") -> LmmFit:
    """All fit quantities with theta held fixed (no optimization)."""
    if theta < 0:
        raise ValidationError("theta must be >= 0")
    prof = _Profile(design, y)
    return _finish(prof, design, float(theta), _check_method(method), 0, [])


def _theta_grid():
    return np.concatenate([[0.0], np.logspace(-4, 3, 57)])


def fit_lmm(design: DesignMatrix, y, method: str = "REML") -> LmmFit:
    """Fit the random-intercept model.

    theta is located by a coarse scan over [0, 1e3], refined with bounded Brent
    minimization on the bracketing grid cell, then polished by root-finding on
    the analytic derivative of the deviance (which pins theta far more tightly
    than a flat deviance surface allows). A minimum at theta = 0 is reported
    as a boundary fit.
    """
    method = _check_method(method)
    prof = _Profile(design, y)
    if len(prof.ng) < 2:
        raise UnidentifiableModelError("need at least two groups")
    if prof.ng.max() < 2:
        raise UnidentifiableModelError(
            "every group has a single row; group and residual variance are not identifiable"
        )

    trace = []

    def f(theta):
        dev = prof.deviance(theta, method)[0]
        trace.append((float(theta), dev))
        return dev

    def g(theta):
        return prof.gradient_phi(theta, method)

    grid = _theta_grid()
    devs = np.array([f(t) for t in grid])
    i = int(np.argmin(devs))
    best_dev, theta = float(devs[i]), float(grid[i])
    iterations = 0

    if not (i == 0 and g(0.0) >= 0):
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        res = optimize.minimize_scalar(
            f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10, "maxiter": 200}
        )
        iterations = int(res.nfev)
        if not res.success:
            raise ConvergenceError(f"theta search did not converge: {res.message}", trace)
        if res.fun < best_dev:
            best_dev, theta = float(res.fun), float(res.x)
        if g(lo) < 0 < g(hi):
            root = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
            # the root is the sharper estimate; its deviance may differ only by rounding
            if f(root) <= best_dev + 1e-9 * max(1.0, abs(best_dev)):
                theta = float(root)
    return _finish(prof, design, theta, method, iterations, trace)


def _finish(prof, design, theta, method, iterations, trace):
    dev, beta, s2, cho = prof.deviance(theta, method)
    cov = s2 * linalg.cho_solve(cho, np.eye(prof.p))
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pvalues = 2.0 * sps.norm.sf(np.abs(z))
    sb2 = theta * theta * s2
    loglik = -dev / 2.0
    k_params = prof.p + 2
    aic, bic = information_criteria(loglik, k_params, prof.n)
    fitted = prof.X @ beta
    vf = float(np.var(fitted))
    total = vf + sb2 + s2
    return LmmFit(
        names=tuple(design.names),
        beta=beta,
        se=se,
        z=z,
        pvalues=pvalues,
        cov_beta=cov,
        theta=float(theta),
        sigma2=float(s2),
        sigma_b2=float(sb2),
        loglik=float(loglik),
        deviance=float(dev),
        aic=aic,
        bic=bic,
        r2_marginal=vf / total,
        r2_conditional=(vf + sb2) / total,
        n=prof.n,
        p_fixed=prof.p,
        q=len(prof.ng),
        k_params=k_params,
        method=method,
        at_boundary=theta == 0.0,
        iterations=iterations,
        dropped_rows=design.dropped_rows,
        trace=trace,
    )


def stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class WaldRow:
    name: str
    estimate: float
    se: float
    z: float
    p: float
    stars: str

    def cell(self):
        return f"{self.estimate:.2f}{self.stars}", f"({self.se:.2f})"


def wald_row(name, estimate, se) -> WaldRow:
    z = estimate / se
    p = float(2.0 * sps.norm.sf(abs(z)))
    return WaldRow(name, float(estimate), float(se), float(z), p, stars(p))


def wald_table(fit: LmmFit) -> list[WaldRow]:
    return [wald_row(nm, b, s) for nm, b, s in zip(fit.names, fit.beta, fit.se)]


def format_table(fits: dict, vifs: dict | None = None) -> str:
    """Side-by-side text table: estimates with stars, SEs in parentheses, fit criteria."""
    labels = list(fits)
    names = []
    for fit in fits.values():
        for nm in fit.names:
            if nm not in names:
                names.append(nm)
    width = max(18, max(len(n) for n in names) + 2)
    colw = 14
    lines = ["".ljust(width) + "".join(lb.rjust(colw) for lb in labels)]
    lines.append("-" * (width + colw * len(labels)))
    rows = {lb: {r.name: r for r in wald_table(f)} for lb, f in fits.items()}
    for nm in names:
        est = nm.ljust(width)
        err = "".ljust(width)
        for lb in labels:
            r = rows[lb].get(nm)
            a, b = r.cell() if r else ("", "")
            est += a.rjust(colw)
            err += b.rjust(colw)
        lines += [est, err]
    lines.append("-" * (width + colw * len(labels)))

    def stat(label, fn):
        return label.ljust(width) + "".join(fn(fits[lb]).rjust(colw) for lb in labels)

    lines.append(stat("marginal R2", lambda f: f"{f.r2_marginal:.4f}"))
    lines.append(stat("conditional R2", lambda f: f"{f.r2_conditional:.4f}"))
    lines.append(stat("AIC", lambda f: f"{f.aic:.2f}"))
    lines.append(stat("BIC", lambda f: f"{f.bic:.2f}"))
    lines.append(stat("Log Likelihood", lambda f: f"{f.loglik:.2f}"))
    lines.append(stat("Num. obs.", lambda f: str(f.n)))
    lines.append(stat("Num. groups", lambda f: str(f.q)))
    if vifs:
        lines.append("max VIF".ljust(width) + "".join(
            (f"{max(vifs[lb]):.2f}" if vifs.get(lb) is not None else "n/a").rjust(colw)
            for lb in labels
        ))
    lines.append("-" * (width + colw * len(labels)))
    lines.append("***p<0.001, **p<0.01, *p<0.05")
    return "\n".join(lines) + "\n"
