import json

import numpy as np
import pytest

from hrsae.datamodel import finite_pop_corr
from hrsae.errors import CalibrationError, ConfigError
from hrsae.simstudy import (
    METHODS,
    ScenarioConfig,
    build_population,
    calibrate_tau_for_rho,
    gen_y,
    gen_z,
    load_config,
    run_scenario,
    synth_z_from_x,
)

SMALL = dict(population_type="P1", case="A", N=80, m=10, n=20, rho_xz_targets=[0.8],
             rho_yx_targets=[0.6], mc_samples=60, orderprob_R=2000, seed=5)


def test_gen_z_moments():
    rng = np.random.default_rng(0)
    z = gen_z("P1", 200_000, 100_000, rng)
    assert z[:100_000].mean() == pytest.approx(4.0, abs=0.02)
    assert z[100_000:].mean() == pytest.approx(6.0, abs=0.02)
    assert z[100_000:].var() == pytest.approx(1.25, rel=0.02)
    z = gen_z("P2", 200_000, 100_000, rng)
    assert z[:100_000].mean() == pytest.approx(1.0, abs=0.02)
    assert z[100_000:].mean() == pytest.approx(2.0, abs=0.03)


@pytest.mark.parametrize("target", [0.2, 0.5, 0.9])
def test_calibrate_tau(target):
    rng = np.random.default_rng(1)
    z = gen_z("P2", 500, 50, rng)
    x, achieved = calibrate_tau_for_rho(z, target, rng=rng)
    assert abs(achieved - target) <= 0.005
    assert finite_pop_corr(x, z) == pytest.approx(achieved)


def test_calibration_cap():
    rng = np.random.default_rng(1)
    z = gen_z("P1", 50, 5, rng)
    with pytest.raises(CalibrationError):
        calibrate_tau_for_rho(z, 0.5, 1e-9, rng=rng, max_tries=3)


def test_gen_y_case_b_slopes():
    rng = np.random.default_rng(2)
    N, m = 20_000, 10_000
    x = rng.normal(5, 1, N)
    inside = np.arange(N) < m
    y, achieved = gen_y("B", x, inside, 0.7, rng)
    assert abs(achieved - 0.7) <= 0.005
    assert np.polyfit(x[inside], y[inside], 1)[0] == pytest.approx(1.25, abs=0.05)
    assert np.polyfit(x[~inside], y[~inside], 1)[0] == pytest.approx(1.0, abs=0.05)


def test_gen_y_case_c_variance_ratio():
    rng = np.random.default_rng(3)
    N, m = 20_000, 10_000
    x = rng.normal(5, 1, N)
    inside = np.arange(N) < m
    y, _ = gen_y("C", x, inside, 0.5, rng)
    r = y - 2 - x
    assert r[inside].var() / r[~inside].var() == pytest.approx(3.0, rel=0.08)


def test_synth_z_from_x():
    rng = np.random.default_rng(4)
    x = rng.normal(5, 1, 300)
    z = synth_z_from_x(x, 0.6, rng)
    assert abs(finite_pop_corr(z, x) - 0.6) <= 0.005


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="bogus"):
        ScenarioConfig.from_dict({**SMALL, "bogus": 1})
    bad = dict(SMALL)
    del bad["seed"]
    with pytest.raises(ConfigError, match="seed"):
        ScenarioConfig.from_dict(bad)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({**SMALL, "rho_xz_targets": [1.2]})
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig.from_dict(SMALL)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert load_config(p) == cfg
    assert cfg.reference_method == "rhr"
    assert ScenarioConfig.from_dict({**SMALL, "case": "B"}).reference_method == "hr"


def test_build_population_domain_and_correlations():
    cfg = ScenarioConfig.from_dict(SMALL)
    cell = build_population(cfg, 0, 0)
    assert cell.domain.size_m == 10
    assert sorted(cell.pop.ids[cell.domain.members].tolist()) == list(range(1, 11))
    assert abs(cell.rho_xz - 0.8) <= 0.005 and abs(cell.rho_yx - 0.6) <= 0.005


def test_run_scenario_reproducible_and_complete():
    cfg = ScenarioConfig.from_dict(SMALL)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.to_csv() == b.to_csv()
    assert a.cells_to_csv() == b.cells_to_csv()
    assert [r.method for r in a.rows] == list(METHODS)
    ref = a.mse(0.8, 0.6, "rhr")
    assert a.mse(0.8, 0.6, "hr") / ref == pytest.approx(
        next(r.ratio_vs_reference for r in a.rows if r.method == "hr"))


def test_hr_mean_error_tracks_true_bias():
    cfg = ScenarioConfig.from_dict({**SMALL, "mc_samples": 3000})
    t = run_scenario(cfg)
    cell = t.cells[0]
    errs_sd = np.sqrt(t.mse(0.8, 0.6, "hr"))
    assert cell.hr_mean_error == pytest.approx(cell.hr_bias_true, abs=4 * errs_sd / np.sqrt(3000))


def test_indicator_backend_runs():
    table = run_scenario(ScenarioConfig.from_dict({**SMALL, "theta_backend": "indicator"}))
    assert all(np.isfinite(r.mse) for r in table.rows if r.method != "greg")


def test_failed_cell_is_flagged():
    # calibration tolerance too tight to meet within the try cap
    table = run_scenario(ScenarioConfig.from_dict({**SMALL, "calibration_tolerance": 1e-12}))
    assert table.cells[0].error
    assert all(r.flags == "cell-error" for r in table.rows)


def test_greg_unavailable_samples_flagged():
    cfg = ScenarioConfig.from_dict({**SMALL, "N": 200, "m": 3, "n": 10, "mc_samples": 80})
    row = next(r for r in run_scenario(cfg).rows if r.method == "greg")
    assert row.flags.startswith("unavailable")
