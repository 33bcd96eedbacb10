"""Comparison estimators: simple synthetic, regression-synthetic, GREG and unit-level EBLUP.

None of these use the design variable ``z``; they only see ``x`` (known for
every unit) and ``y`` on the sample.  Textbook forms (Rao, *Small Area
Estimation*, 2003) are used:

* SYN: survey-weighted regression of ``y`` on ``(1, x)`` over the whole
  sample, predicted onto the domain's known ``x`` total.
* GREG: direct domain HT total plus a regression correction with the
  whole-sample coefficients.
* EBLUP: nested-error model ``y = b0 + b1 x + v_area + e`` with the domain
  and its complement as the two areas; variance components by Henderson's
  method 3 (fitting constants), regression coefficients by GLS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Domain
from .errors import DataError, DegenerateError
from .sampling import Sample

__all__ = [
    "VarianceComponents",
    "EblupFit",
    "simple_synthetic",
    "syn_estimator",
    "greg_estimator",
    "henderson3",
    "eblup_fit",
    "eblup_estimator",
    "eblup_predict",
]


@dataclass(frozen=True)
class VarianceComponents:
    sigma2_v: float
    sigma2_e: float
    gamma_d: float

    def __post_init__(self):
        if self.sigma2_v < 0 or self.sigma2_e < 0:
            raise DataError("variance components must be nonnegative")
        if not 0 <= self.gamma_d <= 1:
            raise DataError("shrinkage factor must lie in [0, 1]")


@dataclass(frozen=True)
class EblupFit:
    total: float
    beta: np.ndarray
    components: VarianceComponents | None
    fallback: bool


def _design(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones_like(x), x])


def _wls(X, y, w) -> np.ndarray:
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    beta, _, rank, _ = np.linalg.lstsq(Xw, y * sw, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateError("singular regression fit")
    return beta


def simple_synthetic(sample: Sample, y_on_s, m: int, N: int) -> float:
    """``(m / N) * sum_s d_i y_i``."""
    return m / N * float(sample.weights @ np.asarray(y_on_s, dtype=float))


def _sample_beta(sample: Sample, x_pop, y_on_s) -> np.ndarray:
    if sample.n < 3:
        raise DegenerateError("regression needs at least 3 sampled units")
    x_s = np.asarray(x_pop, dtype=float)[sample.indices]
    if np.ptp(x_s) == 0:
        raise DegenerateError("x is constant on the sample")
    return _wls(_design(x_s), np.asarray(y_on_s, dtype=float), sample.weights)


def syn_estimator(sample: Sample, x_pop, y_on_s, D: Domain) -> float:
    """Regression-synthetic total ``b0 * m + b1 * t_xD``."""
    beta = _sample_beta(sample, x_pop, y_on_s)
    t_xD = float(np.asarray(x_pop, dtype=float)[D.members].sum())
    return float(beta[0] * D.size_m + beta[1] * t_xD)


def greg_estimator(sample: Sample, x_pop, y_on_s, D: Domain, beta=None) -> float | None:
    """Direct GREG domain total; ``None`` when no sampled unit falls in ``D``.

    ``t^ = sum_{s&D} d y + beta' (t_{(1,x);D} - sum_{s&D} d (1, x))`` with
    ``beta`` from the whole-sample weighted fit unless given.
    """
    x_pop = np.asarray(x_pop, dtype=float)
    y_on_s = np.asarray(y_on_s, dtype=float)
    inside = sample.in_domain(D)
    if not inside.any():
        return None
    if beta is None:
        beta = _sample_beta(sample, x_pop, y_on_s)
    d = sample.weights[inside]
    x_in = x_pop[sample.indices][inside]
    direct_y = float(d @ y_on_s[inside])
    pop_tot = np.array([D.size_m, x_pop[D.members].sum()])
    est_tot = np.array([d.sum(), d @ x_in])
    return direct_y + float(np.asarray(beta) @ (pop_tot - est_tot))


def henderson3(x_s, y_s, area) -> tuple[float, float] | None:
    """Fitting-constants estimates ``(sigma2_v, sigma2_e)`` for the nested-error model.

    ``sigma2_e`` comes from the within-area regression; ``sigma2_v`` from
    the pooled OLS residual sum of squares, truncated at zero.  Returns
    ``None`` when the components are not estimable.
    """
    x_s = np.asarray(x_s, dtype=float)
    y_s = np.asarray(y_s, dtype=float)
    area = np.asarray(area)
    labels = np.unique(area)
    n, k = y_s.size, labels.size
    if k < 2:
        return None
    xw = x_s.copy()
    yw = y_s.copy()
    for a in labels:
        sel = area == a
        xw[sel] -= x_s[sel].mean()
        yw[sel] -= y_s[sel].mean()
    sxx = xw @ xw
    p_within = 1 if sxx > 0 else 0
    resid_w = yw - (xw @ yw / sxx) * xw if p_within else yw
    df_e = n - k - p_within
    if df_e <= 0:
        return None
    sigma2_e = float(resid_w @ resid_w / df_e)

    X = _design(x_s)
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < 2:
        return None
    beta = np.linalg.solve(XtX, X.T @ y_s)
    resid = y_s - X @ beta
    M = np.zeros((2, 2))
    for a in labels:
        sel = area == a
        xbar = X[sel].mean(axis=0)
        M += sel.sum() ** 2 * np.outer(xbar, xbar)
    n_star = n - np.trace(np.linalg.solve(XtX, M))
    if n_star <= 0:
        return None
    sigma2_v = (resid @ resid - (n - X.shape[1]) * sigma2_e) / n_star
    return max(float(sigma2_v), 0.0), sigma2_e


def _gls_beta(X, y, area, sigma2_v, sigma2_e) -> np.ndarray:
    # Fuller-Battese transform turns GLS into OLS
    Xt = X.copy()
    yt = y.copy()
    for a in np.unique(area):
        sel = area == a
        n_a = sel.sum()
        total = sigma2_e + n_a * sigma2_v
        alpha = 1.0 - np.sqrt(sigma2_e / total) if total > 0 else 0.0
        Xt[sel] -= alpha * X[sel].mean(axis=0)
        yt[sel] -= alpha * y[sel].mean()
    return _wls(Xt, yt, np.ones(y.size))


def eblup_predict(sample: Sample, x_pop, y_on_s, D: Domain, beta, gamma: float) -> float:
    """``m * (Xbar_D' beta + gamma * (ybar_{s&D} - xbar_{s&D}' beta))``.

    Linear in ``gamma``: 0 gives the regression-synthetic prediction, 1 the
    survey-regression (direct) one.
    """
    x_pop = np.asarray(x_pop, dtype=float)
    y_on_s = np.asarray(y_on_s, dtype=float)
    beta = np.asarray(beta, dtype=float)
    m = D.size_m
    synth = beta[0] + beta[1] * x_pop[D.members].mean()
    inside = sample.in_domain(D)
    if not inside.any() or gamma == 0:
        return m * float(synth)
    x_in = x_pop[sample.indices][inside]
    resid = y_on_s[inside].mean() - (beta[0] + beta[1] * x_in.mean())
    return m * float(synth + gamma * resid)


def eblup_fit(sample: Sample, x_pop, y_on_s, D: Domain) -> EblupFit:
    """Unit-level EBLUP of the domain total.

    Falls back to :func:`syn_estimator` (``fallback=True``) when the domain
    has no sampled unit or the variance components are not estimable.
    """
    x_pop = np.asarray(x_pop, dtype=float)
    y_on_s = np.asarray(y_on_s, dtype=float)
    x_s = x_pop[sample.indices]
    area = sample.in_domain(D).astype(int)
    comps = henderson3(x_s, y_on_s, area)
    if comps is None:
        beta = _sample_beta(sample, x_pop, y_on_s)
        total = float(beta[0] * D.size_m + beta[1] * x_pop[D.members].sum())
        return EblupFit(total, beta, None, True)
    sigma2_v, sigma2_e = comps
    n_d = int(area.sum())
    denom = sigma2_v + sigma2_e / n_d
    gamma = sigma2_v / denom if denom > 0 else 1.0
    beta = _gls_beta(_design(x_s), y_on_s, area, sigma2_v, sigma2_e)
    total = eblup_predict(sample, x_pop, y_on_s, D, beta, gamma)
    return EblupFit(total, beta, VarianceComponents(sigma2_v, sigma2_e, gamma), False)


def eblup_estimator(sample: Sample, x_pop, y_on_s, D: Domain) -> float:
    return eblup_fit(sample, x_pop, y_on_s, D).total
