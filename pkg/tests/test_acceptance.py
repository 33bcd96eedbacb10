"""Acceptance criteria, one test per criterion.

Run under pytest (a PASS/FAIL summary per criterion is printed at the end of
the session) or directly with ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from hrsae import estimators as est
from hrsae.cli import main as cli_main
from hrsae.datamodel import Domain, Population, domain_total
from hrsae.orderprob import (
    EtaModel,
    ThetaVector,
    exact_order_probs_small,
    fit_eta,
    mc_order_probs,
    theta_from_probs,
)
from hrsae.sampling import DesignSpec, Sample, design_coeffs, draw_sample, ht_domain_total
from hrsae.simstudy import ScenarioConfig, calibrate_tau_for_rho, gen_z, run_scenario

sys.path.insert(0, str(Path(__file__).parent))
from oracles import all_samples  # noqa: E402


def _report(name, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


def _fixture6():
    rng = np.random.default_rng(2024)
    z = rng.normal(5, 1, 6)
    x = z + rng.normal(0, 0.8, 6)
    y = 2 + x + rng.normal(0, 0.6, 6)
    pop = Population.from_arrays(z, x, y)
    D = Domain.from_ids(pop, [2, 3, 5])
    theta = theta_from_probs(mc_order_probs(fit_eta(pop.z, pop.x), pop.z, 50_000, 1), D)
    return pop, D, theta, DesignSpec(3, 6)


def test_criterion_01_doubly_stochastic():
    worst = 0.0
    for N in (5, 50, 500):
        z = np.sort(np.random.default_rng(N).normal(5, 1, N))
        eta = fit_eta(z, z + np.random.default_rng(N + 1).normal(0, 0.5, N))
        for R in (10**3, 10**5):
            for seed in (0, 1, 987654321):
                p = mc_order_probs(eta, z, R, seed).probs
                worst = max(worst, np.abs(p.sum(axis=0) - 1).max(), np.abs(p.sum(axis=1) - 1).max())
    z = np.sort(np.random.default_rng(7).normal(5, 1, 500))
    eta = fit_eta(z, z + np.random.default_rng(8).normal(0, 0.5, 500))
    start = time.perf_counter()
    mc_order_probs(eta, z, 10**5, 42)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 30
    assert _report("01 doubly stochastic", ok, f"max |sum-1|={worst:.2e}, N=500 R=1e5 in {elapsed:.1f}s")


def test_criterion_02_exact_oracle_agreement():
    means, var = np.array([0.0, 1.0, 2.0]), np.ones(3)
    R = 10**6
    start = time.perf_counter()
    exact = exact_order_probs_small(means, var)
    p = mc_order_probs(EtaModel(0.0, 1.0, var), means, R, 2024).probs
    elapsed = time.perf_counter() - start
    ratio = np.max(np.abs(p - exact) / np.sqrt(exact * (1 - exact) / R))
    ok = ratio <= 4 and elapsed < 10
    assert _report("02 exact oracle", ok, f"max |err|/se={ratio:.2f}, {elapsed:.1f}s")


def test_criterion_03_special_case_collapses():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        N, n, m = 40, 12, 9
        y = rng.normal(10, 3, N)
        D = Domain(rng.choice(N, m, replace=False), N)
        s = Sample.from_indices(DesignSpec(n, N), rng.choice(N, n, replace=False))
        y_s = y[s.indices]
        ht_total = float(s.weights @ y_s)
        worst = max(
            worst,
            abs(est.hr_total(s, ThetaVector.indicator(D), y_s) - ht_domain_total(s, y_s, D).total),
            abs(est.hr_total(s, ThetaVector.uniform(D), y_s) - m / N * ht_total),
            abs(est.hr_total(s, ThetaVector.uniform(Domain.whole(N)), y_s) - ht_total),
        )
    assert _report("03 special-case collapses", worst <= 1e-12, f"max abs diff={worst:.2e}")


def test_criterion_04_enumeration_unbiasedness():
    pop, D, theta, design = _fixture6()
    coeffs = design_coeffs(design)
    samples = all_samples(6, 3)
    assert len(samples) == 20
    ys = [pop.y[s.indices] for s in samples]
    xs = [pop.x[s.indices] for s in samples]
    bias_gap = abs(np.mean([est.hr_total(s, theta, y) for s, y in zip(samples, ys)])
                   - domain_total(pop, D) - est.hr_bias_true(theta, pop))
    var_gap = abs(np.mean([est.hr_var_est(s, theta, y, coeffs) for s, y in zip(samples, ys)])
                  - est.hr_var_true(theta, pop, coeffs))
    cov_gap = abs(np.mean([est.design_cov_est(s, theta, y, x, coeffs) for s, y, x in zip(samples, ys, xs)])
                  - est.design_cov_true(theta, pop.y, pop.x, coeffs))
    worst = max(bias_gap, var_gap, cov_gap)
    assert _report("04 enumeration unbiasedness", worst <= 1e-10,
                   f"bias {bias_gap:.1e}, var {var_gap:.1e}, cov {cov_gap:.1e}")


def test_criterion_05_additivity():
    rng = np.random.default_rng(5)
    N = 200
    z = rng.normal(5, 1, N)
    pop = Population.from_arrays(z, z + rng.normal(0, 0.5, N), rng.normal(10, 2, N))
    P = mc_order_probs(fit_eta(pop.z, pop.x), pop.z, 5000, 3)
    labels = rng.permutation(np.arange(N) % 5)
    thetas = [theta_from_probs(P, Domain.from_mask(labels == k)) for k in range(5)]
    worst = 0.0
    for _ in range(50):
        s = draw_sample(DesignSpec(30, N), rng)
        y_s = pop.y[s.indices]
        parts = sum(est.hr_total(s, th, y_s) for th in thetas)
        worst = max(worst, abs(parts - float(s.weights @ y_s)))
    assert _report("05 additivity", worst <= 1e-9, f"max gap={worst:.2e}")


def test_criterion_06_domain_hit_moments():
    design = DesignSpec(75, 500)
    D = Domain(np.arange(50), 500)
    rng = np.random.default_rng(6)
    hits = np.array([draw_sample(design, rng).in_domain(D).sum() for _ in range(10**4)])
    mean, sd = hits.mean(), hits.std(ddof=1)
    ok = abs(mean - 7.5) <= 0.08 and abs(sd - 2.4) <= 0.1
    assert _report("06 domain-hit moments", ok, f"mean={mean:.3f} sd={sd:.3f}")


def test_criterion_07_b0_optimality():
    pop, D, theta, design = _fixture6()
    coeffs = design_coeffs(design)
    b0 = est.b0_true(pop, theta, coeffs)
    grid = b0 + 0.01 * np.arange(-200, 201)
    mses = np.array([est.rhr_mse_true(pop, theta, coeffs, b=b) for b in grid])
    dist = abs(grid[np.argmin(mses)] - b0)
    assert _report("07 b0 optimality", dist <= 0.01 + 1e-12, f"b0={b0:.4f}, argmin offset={dist:.3f}")


def test_criterion_08_directional_replication():
    cfg = ScenarioConfig("P1", "A", 100, 10, 25, [0.8], [0.9, 0.2], 500, 10**5, 2024)
    start = time.perf_counter()
    table = run_scenario(cfg)
    elapsed = time.perf_counter() - start
    rhr_hi, hr_hi = table.mse(0.8, 0.9, "rhr"), table.mse(0.8, 0.9, "hr")
    rhr_lo, greg_lo = table.mse(0.8, 0.2, "rhr"), table.mse(0.8, 0.2, "greg")
    ok = rhr_hi < hr_hi and rhr_lo < greg_lo and elapsed < 300
    assert _report("08 directional replication", ok,
                   f"(0.8,0.9) RHR {rhr_hi:.1f} vs HR {hr_hi:.1f}; "
                   f"(0.8,0.2) RHR {rhr_lo:.1f} vs GREG {greg_lo:.1f}; {elapsed:.1f}s")


def test_criterion_09_calibration():
    worst = 0.0
    for kind in ("P1", "P2"):
        z = gen_z(kind, 500, 50, np.random.default_rng(9))
        for k, target in enumerate(np.round(np.arange(0.1, 1.0, 0.1), 1)):
            _, achieved = calibrate_tau_for_rho(z, float(target), 0.005,
                                                rng=np.random.default_rng([9, k]), max_tries=10**4)
            worst = max(worst, abs(achieved - target))
    assert _report("09 calibration", worst <= 0.005, f"max |rho-target|={worst:.4f}")


def test_criterion_10_reproducible_simulate():
    cfg = dict(population_type="P1", case="B", N=80, m=8, n=20, rho_xz_targets=[0.6, 0.8],
               rho_yx_targets=[0.5], mc_samples=50, orderprob_R=2000, seed=10)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "cfg.json").write_text(json.dumps(cfg))
        codes = [cli_main(["simulate", str(tmp / "cfg.json"), "--out", str(tmp / d)]) for d in ("a", "b")]
        same = (tmp / "a" / "mse.csv").read_bytes() == (tmp / "b" / "mse.csv").read_bytes()
    assert _report("10 reproducible simulate", codes == [0, 0] and same, f"exit codes {codes}, identical={same}")


if __name__ == "__main__":
    results = []
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
                results.append(True)
            except AssertionError:
                results.append(False)
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
