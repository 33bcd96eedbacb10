"""Hidden-randomness (HR) small-area estimation.

Domain totals are estimated from the whole sample by weighting each sampled
unit with its modelled probability of belonging to the domain, derived from
the rank distribution of a fitted size model.
"""

__version__ = "0.1.0"

from .datamodel import Domain, Population, domain_total, finite_pop_corr, load_population
from .estimators import (
    EstimateReport,
    hr1_ratio,
    hr_mse_est,
    hr_total,
    rhr_mse_est,
    rhr_total,
)
from .orderprob import (
    EtaModel,
    OrderProbMatrix,
    ThetaVector,
    exact_order_probs_small,
    fit_eta,
    mc_order_probs,
    theta_from_probs,
    theta_indicator_approx,
)
from .sampling import DesignSpec, Sample, design_coeffs, draw_sample, ht_domain_total

__all__ = [
    "Domain",
    "Population",
    "domain_total",
    "finite_pop_corr",
    "load_population",
    "EstimateReport",
    "hr_total",
    "hr1_ratio",
    "hr_mse_est",
    "rhr_total",
    "rhr_mse_est",
    "EtaModel",
    "OrderProbMatrix",
    "ThetaVector",
    "exact_order_probs_small",
    "fit_eta",
    "mc_order_probs",
    "theta_from_probs",
    "theta_indicator_approx",
    "DesignSpec",
    "Sample",
    "design_coeffs",
    "draw_sample",
    "ht_domain_total",
]
