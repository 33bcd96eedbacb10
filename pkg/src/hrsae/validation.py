"""Self-checks run by ``hrsae validate``.

Each check returns a :class:`CheckResult`.  The enumeration checks walk every
SRSWOR sample of a tiny population, so design expectations are exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import estimators as est
from .datamodel import Domain, Population, domain_total
from .orderprob import (
    EtaModel,
    ThetaVector,
    exact_order_probs_small,
    fit_eta,
    load_order_probs,
    mc_order_probs,
    theta_from_probs,
)
from .sampling import DesignSpec, Sample, design_coeffs, ht_domain_total, inclusion_probs


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def enumerate_samples(design: DesignSpec):
    """Yield every SRSWOR sample of the design (each has probability 1/C(N, n))."""
    for idx in itertools.combinations(range(design.N), design.n):
        yield Sample.from_indices(design, idx)


def fixture_n6(seed: int = 7):
    """N=6, n=3 population with y, a 3-unit domain and MC theta."""
    rng = np.random.default_rng(seed)
    z = rng.normal(5, 1, 6)
    x = z + rng.normal(0, 0.7, 6)
    y = 2 + x + rng.normal(0, 0.5, 6)
    pop = Population.from_arrays(z, x, y)
    D = Domain.from_ids(pop, [1, 3, 4])
    eta = fit_eta(pop.z, pop.x)
    theta = theta_from_probs(mc_order_probs(eta, pop.z, 20_000, seed), D)
    return pop, D, theta, DesignSpec(3, 6)


def _close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_srswor_identities() -> CheckResult:
    design = DesignSpec(75, 500)
    pi, pi2 = inclusion_probs(design)
    idx = np.arange(500)
    s1 = pi(idx).sum()
    s2 = pi2(0, idx[1:]).sum()
    ok = _close(s1, 75, 1e-12) and _close(s2, 74 * pi(0), 1e-12)
    return CheckResult("srswor-inclusion-identities", ok, f"sum pi={s1:.12g}")


def check_enumeration() -> list[CheckResult]:
    pop, D, theta, design = fixture_n6()
    coeffs = design_coeffs(design)
    samples = list(enumerate_samples(design))
    t = domain_total(pop, D)
    ht = np.mean([ht_domain_total(s, pop.y[s.indices], D).total for s in samples])
    hr = np.mean([est.hr_total(s, theta, pop.y[s.indices]) for s in samples])
    var_est = np.mean([est.hr_var_est(s, theta, pop.y[s.indices], coeffs) for s in samples])
    cov_est = np.mean([est.design_cov_est(s, theta, pop.y[s.indices], pop.x[s.indices], coeffs)
                       for s in samples])
    hr_vals = np.array([est.hr_total(s, theta, pop.y[s.indices]) for s in samples])
    return [
        CheckResult("ht-design-unbiased", _close(ht, t, 1e-10), f"E[HT]={ht:.12g} t={t:.12g}"),
        CheckResult("hr-bias-identity", _close(hr - t, est.hr_bias_true(theta, pop), 1e-10)),
        CheckResult("hr-variance-formula", _close(hr_vals.var(), est.hr_var_true(theta, pop, coeffs), 1e-10)),
        CheckResult("hr-variance-estimator-unbiased",
                    _close(var_est, est.hr_var_true(theta, pop, coeffs), 1e-10)),
        CheckResult("covariance-estimator-unbiased",
                    _close(cov_est, est.design_cov_true(theta, pop.y, pop.x, coeffs), 1e-10)),
    ]


def check_special_cases() -> list[CheckResult]:
    rng = np.random.default_rng(11)
    N, n = 40, 12
    pop = Population.from_arrays(rng.normal(size=N), rng.normal(size=N), rng.normal(size=N))
    D = Domain(rng.choice(N, 9, replace=False), N)
    design = DesignSpec(n, N)
    s = Sample.from_indices(design, rng.choice(N, n, replace=False))
    y_s = pop.y[s.indices]
    total_ht = float(s.weights @ y_s)
    ident = est.hr_total(s, ThetaVector.indicator(D), y_s)
    unif = est.hr_total(s, ThetaVector.uniform(D), y_s)
    whole = est.hr_total(s, ThetaVector.uniform(Domain.whole(N)), y_s)
    return [
        CheckResult("identity-probs-give-direct-ht",
                    _close(ident, ht_domain_total(s, y_s, D).total, 1e-12)),
        CheckResult("uniform-probs-give-simple-synthetic", _close(unif, 9 / N * total_ht, 1e-12)),
        CheckResult("whole-population-domain-gives-ht", _close(whole, total_ht, 1e-12)),
    ]


def check_additivity() -> CheckResult:
    rng = np.random.default_rng(5)
    N = 200
    z = rng.normal(5, 1, N)
    pop = Population.from_arrays(z, z + rng.normal(0, 0.5, N), rng.normal(10, 2, N))
    P = mc_order_probs(fit_eta(pop.z, pop.x), pop.z, 2000, 3)
    labels = rng.integers(0, 5, N)
    s = Sample.from_indices(DesignSpec(30, N), rng.choice(N, 30, replace=False))
    y_s = pop.y[s.indices]
    parts = sum(est.hr_total(s, theta_from_probs(P, Domain.from_mask(labels == k)), y_s) for k in range(5))
    whole = float(s.weights @ y_s)
    return CheckResult("hr-additivity", _close(parts, whole, 1e-9), f"gap={parts - whole:.3g}")


def check_doubly_stochastic() -> CheckResult:
    z = np.linspace(0, 5, 50)
    P = mc_order_probs(EtaModel(0.0, 1.0, np.full(50, 2.0)), z, 1000, 1)
    return CheckResult("orderprob-doubly-stochastic", P.is_doubly_stochastic(1e-9))


def check_exact_vs_mc() -> CheckResult:
    means, var = np.array([0.0, 1.0, 2.0]), np.ones(3)
    exact = exact_order_probs_small(means, var)
    R = 200_000
    P = mc_order_probs(EtaModel(0.0, 1.0, var), means, R, 9).probs
    se = np.sqrt(exact * (1 - exact) / R)
    worst = float(np.max(np.abs(P - exact) / np.maximum(se, 1e-12)))
    return CheckResult("orderprob-mc-matches-exact", worst <= 4, f"max |err|/se={worst:.2f}")


def check_cache(path) -> CheckResult:
    try:
        P, _, _ = load_order_probs(path, verify=True)
    except Exception as exc:  # report, do not crash the suite
        return CheckResult("cache-doubly-stochastic", False, str(exc))
    return CheckResult("cache-doubly-stochastic", P.is_doubly_stochastic(1e-9), f"N={P.n_units} R={P.replications}")


def run_all(cache_path=None) -> list[CheckResult]:
    results = [check_srswor_identities()]
    results += check_enumeration()
    results += check_special_cases()
    results.append(check_additivity())
    results.append(check_doubly_stochastic())
    results.append(check_exact_vs_mc())
    if cache_path is not None:
        results.append(check_cache(cache_path))
    return results
