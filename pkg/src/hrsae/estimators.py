"""Hidden-randomness (HR) domain-total estimators and their accuracy measures.

All functions take membership weights as a :class:`ThetaVector`; ``m`` and
``N`` are read from its domain.  Vectors named ``*_on_s`` are aligned with
``sample.indices``; ``*_pop`` vectors cover the whole population in sorted
order.  Oracle quantities (``*_true``) need the full study variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .datamodel import Domain, Population
from .errors import UnavailableOracleError
from .orderprob import ThetaVector
from .sampling import DesignCoeffs, Sample, ht_domain_total

__all__ = [
    "EstimateReport",
    "AccuracyTruth",
    "hr_total",
    "hr1_ratio",
    "hr_bias_true",
    "hr_bias_est",
    "hr_var_true",
    "hr_var_est",
    "hr_mse_true",
    "hr_mse_est",
    "design_cov_true",
    "design_cov_est",
    "b0_true",
    "b0_hat",
    "rhr_total",
    "rhr_mse_true",
    "rhr_mse_est",
    "composition_diagnostic",
]

EMPTY_INTERSECTION = "empty-intersection"
CLAMPED_VARIANCE = "clamped-variance"
UNDEFINED_BIAS_CORR = "undefined-bias-correlation"
UNDEFINED_B0 = "undefined-b0"
UNDEFINED_RATIO = "undefined-ratio"
UNAVAILABLE = "unavailable"

NAN = float("nan")


@dataclass(frozen=True)
class EstimateReport:
    """One estimate with its estimated accuracy.

    ``var_hat`` keeps the raw (possibly negative) variance estimate;
    ``mse_hat`` uses it clamped at zero and then carries the
    ``clamped-variance`` flag.
    """

    method: str
    point: float
    var_hat: float = NAN
    bias_hat: float = NAN
    mse_hat: float = NAN
    flags: frozenset = field(default_factory=frozenset)

    def to_row(self) -> dict:
        return {
            "method": self.method,
            "point": self.point,
            "var_hat": self.var_hat,
            "bias_hat": self.bias_hat,
            "mse_hat": self.mse_hat,
            "flags": "|".join(sorted(self.flags)),
        }


@dataclass(frozen=True)
class AccuracyTruth:
    variance: float
    bias: float

    @property
    def mse(self) -> float:
        return self.variance + self.bias**2


def _theta_on_s(sample: Sample, theta: ThetaVector) -> np.ndarray:
    return theta.theta[sample.indices]


def _require_y(pop: Population, values):
    if values is not None:
        return np.asarray(values, dtype=float)
    if pop.y is None:
        raise UnavailableOracleError("this quantity needs y for the whole population")
    return pop.y


def hr_total(sample: Sample, theta: ThetaVector, y_on_s) -> float:
    """``sum_{i in s} theta_i d_i y_i``."""
    w = _theta_on_s(sample, theta) * sample.weights
    return float(w @ np.asarray(y_on_s, dtype=float))


def hr1_ratio(sample: Sample, theta: ThetaVector, y_on_s, m: int | None = None) -> float | None:
    """Ratio version ``m * HR(y) / HR(1)``; ``None`` when ``HR(1) = 0``."""
    m = theta.domain.size_m if m is None else m
    denom = float(_theta_on_s(sample, theta) @ sample.weights)
    if denom == 0:
        return None
    return m * hr_total(sample, theta, y_on_s) / denom


def hr_bias_true(theta: ThetaVector, pop: Population, D: Domain | None = None, values=None) -> float:
    """Design bias of HR for fixed theta: ``sum_U theta_i y_i - sum_D y_i``.

    ``values`` replaces ``pop.y`` (e.g. ``pop.x`` for the auxiliary's bias).
    """
    D = theta.domain if D is None else D
    y = _require_y(pop, values)
    return float(theta.theta @ y - y[D.members].sum())


def hr_bias_est(sample: Sample, theta: ThetaVector, y_on_s, rho_xz: float,
                m: int | None = None, N: int | None = None) -> float | None:
    """Bias estimate ``(1 - rho^2) / rho^2 * sum_s (m/N - theta_i) d_i y_i``.

    Returns ``None`` for ``rho_xz = 0``, where the estimator is undefined.
    """
    if rho_xz == 0:
        return None
    m = theta.domain.size_m if m is None else m
    N = theta.domain.n_units if N is None else N
    factor = (1.0 - rho_xz**2) / rho_xz**2
    w = (m / N - _theta_on_s(sample, theta)) * sample.weights
    return float(factor * (w @ np.asarray(y_on_s, dtype=float)))


def design_cov_true(theta: ThetaVector, u_pop, v_pop, coeffs: DesignCoeffs) -> float:
    """``sum_{i,j in U} theta_i theta_j a_ij u_i v_j``."""
    t = theta.theta
    return coeffs.bilinear(t * np.asarray(u_pop, dtype=float), t * np.asarray(v_pop, dtype=float))


def design_cov_est(sample: Sample, theta: ThetaVector, u_on_s, v_on_s, coeffs: DesignCoeffs) -> float:
    """``sum_{i,j in s} theta_i theta_j a~_ij u_i v_j``; design-unbiased for the above."""
    t = _theta_on_s(sample, theta)
    return coeffs.bilinear_tilde(t * np.asarray(u_on_s, dtype=float), t * np.asarray(v_on_s, dtype=float))


def hr_var_true(theta: ThetaVector, pop: Population, coeffs: DesignCoeffs, values=None) -> float:
    y = _require_y(pop, values)
    return design_cov_true(theta, y, y, coeffs)


def hr_var_est(sample: Sample, theta: ThetaVector, y_on_s, coeffs: DesignCoeffs) -> float:
    return design_cov_est(sample, theta, y_on_s, y_on_s, coeffs)


def hr_mse_true(theta: ThetaVector, pop: Population, coeffs: DesignCoeffs) -> AccuracyTruth:
    return AccuracyTruth(hr_var_true(theta, pop, coeffs), hr_bias_true(theta, pop))


def hr_mse_est(sample: Sample, theta: ThetaVector, y_on_s, coeffs: DesignCoeffs,
               rho_xz: float, m: int | None = None, N: int | None = None) -> EstimateReport:
    """HR estimate with ``MSE^ = Var^ + B^^2``.

    With ``rho_xz = 0`` the bias term is dropped and flagged.
    """
    flags = set()
    point = hr_total(sample, theta, y_on_s)
    var = hr_var_est(sample, theta, y_on_s, coeffs)
    bias = hr_bias_est(sample, theta, y_on_s, rho_xz, m, N)
    if bias is None:
        flags.add(UNDEFINED_BIAS_CORR)
    if var < 0:
        flags.add(CLAMPED_VARIANCE)
    mse = max(var, 0.0) + (0.0 if bias is None else bias**2)
    return EstimateReport("hr", point, var, NAN if bias is None else bias, mse, frozenset(flags))


class _B0Parts(NamedTuple):
    b0: float | None
    cov_yx: float
    var_x: float
    bias_y: float | None
    bias_x: float | None


def _b0_from_parts(cov_yx, var_x, bias_y, bias_x) -> float | None:
    by = 0.0 if bias_y is None else bias_y
    bx = 0.0 if bias_x is None else bias_x
    denom = var_x + bx**2
    if denom == 0 or not math.isfinite(denom):
        return None
    return (cov_yx + by * bx) / denom


def b0_true(pop: Population, theta: ThetaVector, coeffs: DesignCoeffs, D: Domain | None = None) -> float | None:
    """MSE-minimizing regression coefficient ``(C_yx + B_y B_x) / (V_x + B_x^2)``."""
    y = _require_y(pop, None)
    cov = design_cov_true(theta, y, pop.x, coeffs)
    var_x = design_cov_true(theta, pop.x, pop.x, coeffs)
    return _b0_from_parts(cov, var_x, hr_bias_true(theta, pop, D), hr_bias_true(theta, pop, D, pop.x))


def _b0_hat_parts(sample, theta, y_on_s, x_on_s, coeffs, rho_xz) -> _B0Parts:
    cov = design_cov_est(sample, theta, y_on_s, x_on_s, coeffs)
    var_x = design_cov_est(sample, theta, x_on_s, x_on_s, coeffs)
    by = hr_bias_est(sample, theta, y_on_s, rho_xz)
    bx = hr_bias_est(sample, theta, x_on_s, rho_xz)
    return _B0Parts(_b0_from_parts(cov, var_x, by, bx), cov, var_x, by, bx)


def b0_hat(sample: Sample, theta: ThetaVector, y_on_s, x_on_s, coeffs: DesignCoeffs,
           rho_xz: float) -> float | None:
    """Sample version of :func:`b0_true`; ``None`` if the denominator vanishes.

    For ``rho_xz = 0`` the bias estimates are undefined and their terms are
    left out.
    """
    return _b0_hat_parts(sample, theta, y_on_s, x_on_s, coeffs, rho_xz).b0


def rhr_total(sample: Sample, theta: ThetaVector, y_on_s, x_on_s, t_xD: float,
              coeffs: DesignCoeffs, rho_xz: float, b0: float | None = None) -> float:
    """Regression-type HR: ``HR(y) + b0^ (t_xD - HR(x))``.

    ``t_xD`` is the exact domain total of ``x``.  If ``b0`` is not given it
    is estimated from the sample; an undefined estimate falls back to HR.
    """
    if b0 is None:
        b0 = b0_hat(sample, theta, y_on_s, x_on_s, coeffs, rho_xz)
    hr_y = hr_total(sample, theta, y_on_s)
    if b0 is None:
        return hr_y
    return hr_y + b0 * (t_xD - hr_total(sample, theta, x_on_s))


def rhr_mse_true(pop: Population, theta: ThetaVector, coeffs: DesignCoeffs,
                 D: Domain | None = None, b: float | None = None) -> float:
    """Linearized MSE ``Var + b^2 V_x - 2 b C_yx + (B_y - b B_x)^2``.

    ``b`` defaults to the minimizer :func:`b0_true`.
    """
    y = _require_y(pop, None)
    var_y = design_cov_true(theta, y, y, coeffs)
    var_x = design_cov_true(theta, pop.x, pop.x, coeffs)
    cov = design_cov_true(theta, y, pop.x, coeffs)
    by = hr_bias_true(theta, pop, D)
    bx = hr_bias_true(theta, pop, D, pop.x)
    if b is None:
        b = _b0_from_parts(cov, var_x, by, bx)
        b = 0.0 if b is None else b
    return var_y + b * b * var_x - 2 * b * cov + (by - b * bx) ** 2


def rhr_mse_est(sample: Sample, theta: ThetaVector, y_on_s, x_on_s, t_xD: float,
                coeffs: DesignCoeffs, rho_xz: float) -> EstimateReport:
    flags = set()
    parts = _b0_hat_parts(sample, theta, y_on_s, x_on_s, coeffs, rho_xz)
    if parts.bias_y is None:
        flags.add(UNDEFINED_BIAS_CORR)
    b = parts.b0
    if b is None:
        flags.add(UNDEFINED_B0)
        b = 0.0
    point = rhr_total(sample, theta, y_on_s, x_on_s, t_xD, coeffs, rho_xz, b0=b)
    var_y = hr_var_est(sample, theta, y_on_s, coeffs)
    var = var_y + b * b * parts.var_x - 2 * b * parts.cov_yx
    by = 0.0 if parts.bias_y is None else parts.bias_y
    bx = 0.0 if parts.bias_x is None else parts.bias_x
    bias = by - b * bx
    if var < 0:
        flags.add(CLAMPED_VARIANCE)
    mse = max(var, 0.0) + bias**2
    bias_out = NAN if parts.bias_y is None else bias
    return EstimateReport("rhr", point, var, bias_out, mse, frozenset(flags))


class CompositionGap(NamedTuple):
    hr: float
    blend: float
    gap: float
    empty: bool


def composition_diagnostic(sample: Sample, theta: ThetaVector, y_on_s, rho_xz: float,
                           m: int | None = None, N: int | None = None) -> CompositionGap:
    """Compare HR with ``rho^2 * direct HT + (1 - rho^2) * simple synthetic``."""
    D = theta.domain
    m = D.size_m if m is None else m
    N = D.n_units if N is None else N
    y_on_s = np.asarray(y_on_s, dtype=float)
    direct = ht_domain_total(sample, y_on_s, D)
    synthetic = m / N * float(sample.weights @ y_on_s)
    r2 = rho_xz**2
    blend = r2 * direct.total + (1 - r2) * synthetic
    hr = hr_total(sample, theta, y_on_s)
    return CompositionGap(hr, blend, hr - blend, direct.empty)
