"""Synthetic populations and the Monte-Carlo comparison of domain-total estimators.

One scenario is a population type (P1 or P2) crossed with a response case
(A, B or C) and a grid of target correlations.  For every grid cell a single
population ``(z, x, y)`` is generated and fixed; the estimators are then
compared over ``mc_samples`` independent SRSWOR samples.

Random streams are keyed by ``(seed, stage, cell...)`` through
:class:`numpy.random.SeedSequence`, so a cell's population does not depend on
which other cells are in the grid.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, estimators as est
from .datamodel import Domain, Population, domain_total, finite_pop_corr
from .errors import CalibrationError, ConfigError, DataError, HRSAEError
from .orderprob import (
    ThetaVector,
    fit_eta,
    mc_order_probs,
    select_a0,
    theta_from_probs,
    theta_indicator_approx,
)
from .sampling import DesignSpec, design_coeffs, draw_sample

__all__ = [
    "ScenarioConfig",
    "MseTable",
    "METHODS",
    "gen_z",
    "calibrate_tau_for_rho",
    "gen_y",
    "synth_z_from_x",
    "build_population",
    "compute_theta",
    "run_scenario",
    "load_config",
]

logger = logging.getLogger(__name__)

METHODS = ("hr", "hr1", "rhr", "s", "syn", "greg", "eblup")
POPULATION_TYPES = ("P1", "P2")
CASES = ("A", "B", "C")
THETA_BACKENDS = ("montecarlo", "indicator")

# stream tags for SeedSequence keys
_Z, _X, _Y, _THETA, _SAMPLES = range(5)


@dataclass(frozen=True)
class ScenarioConfig:
    population_type: str
    case: str
    N: int
    m: int
    n: int
    rho_xz_targets: tuple
    rho_yx_targets: tuple
    mc_samples: int
    orderprob_R: int
    seed: int
    theta_backend: str = "montecarlo"
    variance_mode: str = "pooled"
    calibration_tolerance: float = 0.005
    reference: str = "auto"
    single_auxiliary: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rho_xz_targets", tuple(float(r) for r in self.rho_xz_targets))
        object.__setattr__(self, "rho_yx_targets", tuple(float(r) for r in self.rho_yx_targets))
        if self.population_type not in POPULATION_TYPES:
            raise ConfigError(f"population_type must be one of {POPULATION_TYPES}")
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}")
        if self.theta_backend not in THETA_BACKENDS:
            raise ConfigError(f"theta_backend must be one of {THETA_BACKENDS}")
        if not (1 <= self.m < self.N and 3 <= self.n <= self.N):
            raise ConfigError("need 1 <= m < N and 3 <= n <= N")
        for name in ("rho_xz_targets", "rho_yx_targets"):
            vals = getattr(self, name)
            if not vals or any(not 0 < r < 1 for r in vals):
                raise ConfigError(f"{name} must be a nonempty list of values in (0, 1)")
        if self.mc_samples < 1 or self.orderprob_R < 1:
            raise ConfigError("mc_samples and orderprob_R must be positive")
        if self.reference not in ("auto",) + METHODS:
            raise ConfigError(f"reference must be 'auto' or one of {METHODS}")

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        required = {f.name for f in dataclasses.fields(cls)
                    if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
        missing = sorted(required - set(data))
        if missing:
            raise ConfigError(f"missing config key {missing[0]!r}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rho_xz_targets"] = list(self.rho_xz_targets)
        d["rho_yx_targets"] = list(self.rho_yx_targets)
        return d

    @property
    def reference_method(self) -> str:
        if self.reference != "auto":
            return self.reference
        # the P1 / case B grid is reported against HR
        return "hr" if (self.population_type, self.case) == ("P1", "B") else "rhr"


def load_config(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ScenarioConfig.from_dict(data)


# -- population generators --------------------------------------------------

def gen_z(population_type: str, N: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Size variable in unit-id order; units ``0..m-1`` form the domain.

    P1: N(4, 1) in the domain, N(6, 1.25) outside (second argument is the
    variance).  P2: Exp(1) everywhere, doubled outside the domain.
    """
    if not 1 <= m < N:
        raise DataError("need 1 <= m < N")
    if population_type == "P1":
        return np.concatenate([rng.normal(4.0, 1.0, m), rng.normal(6.0, math.sqrt(1.25), N - m)])
    if population_type == "P2":
        z = rng.exponential(1.0, N)
        z[m:] *= 2.0
        return z
    raise DataError(f"unknown population type {population_type!r}")


def _noise_variance(signal, x, target, weight_mean=1.0) -> float:
    """Noise variance ``s2`` with corr(signal + noise, x) = target in expectation.

    Uses ``corr^2 = cov(signal, x)^2 / (var(x) (var(signal) + s2 * weight_mean))``.
    """
    var_x = np.var(x)
    cov = np.mean((signal - signal.mean()) * (x - x.mean()))
    total = cov**2 / (target**2 * var_x)
    s2 = (total - np.var(signal)) / weight_mean
    if s2 < 0:
        raise CalibrationError(f"target correlation {target} exceeds the noiseless correlation")
    return float(s2)


def _rejection(draw, x_ref, target, tolerance, max_tries):
    achieved = float("nan")
    for _ in range(max_tries):
        v = draw()
        achieved = finite_pop_corr(v, x_ref)
        if abs(achieved - target) <= tolerance:
            return v, achieved
    raise CalibrationError(
        f"no realization within {tolerance} of correlation {target} after {max_tries} tries "
        f"(last {achieved:.4f})")


def calibrate_tau_for_rho(z, target_rho: float, tolerance: float = 0.005, *,
                          rng: np.random.Generator, max_tries: int = 10_000):
    """Draw ``x = z + N(0, tau^2)`` with ``tau^2 = var(z) (1 - rho^2) / rho^2`` until
    the realized correlation is within ``tolerance`` of the target.

    Returns ``(x, achieved_rho)``.
    """
    if not 0 < target_rho < 1:
        raise DataError("target correlation must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    if np.ptp(z) == 0:
        raise DataError("z is constant")
    tau = math.sqrt(np.var(z) * (1 - target_rho**2) / target_rho**2)
    return _rejection(lambda: z + tau * rng.standard_normal(z.size), z, target_rho, tolerance, max_tries)


def gen_y(case: str, x, in_domain, target_rho_yx: float, rng: np.random.Generator,
          tolerance: float = 0.005, max_tries: int = 10_000):
    """Study variable for response case A, B or C; returns ``(y, achieved_rho)``.

    A: ``2 + x + e``.  B: slope 1.25 inside the domain, 1 outside.
    C: ``2 + x + e`` with error variance tripled inside the domain.
    """
    if not 0 < target_rho_yx < 1:
        raise DataError("target correlation must lie in (0, 1)")
    if case not in CASES:
        raise DataError(f"unknown case {case!r}")
    x = np.asarray(x, dtype=float)
    in_domain = np.asarray(in_domain, dtype=bool)
    slope = np.where(in_domain, 1.25, 1.0) if case == "B" else np.ones_like(x)
    c = np.where(in_domain, 3.0, 1.0) if case == "C" else np.ones_like(x)
    signal = 2.0 + slope * x
    sigma2 = _noise_variance(signal, x, target_rho_yx, float(c.mean()))
    scale = np.sqrt(c * sigma2)
    return _rejection(lambda: signal + scale * rng.standard_normal(x.size), x, target_rho_yx,
                      tolerance, max_tries)


def synth_z_from_x(x, target_rho_xz: float, rng: np.random.Generator, tolerance: float = 0.005,
                   max_tries: int = 10_000) -> np.ndarray:
    """Artificial size variable ``z = x + N(0, tau^2)`` for single-auxiliary use.

    Targets between about 0.4 and 0.9 are the sensible range.
    """
    z, _ = calibrate_tau_for_rho(x, target_rho_xz, tolerance, rng=rng, max_tries=max_tries)
    return z


# -- scenario ---------------------------------------------------------------

def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


@dataclass
class CellPopulation:
    pop: Population
    domain: Domain
    rho_xz: float
    rho_yx: float


def build_population(config: ScenarioConfig, a: int, b: int) -> CellPopulation:
    """Population for grid cell ``(a, b)`` (indices into the two target lists)."""
    N, m, tol = config.N, config.m, config.calibration_tolerance
    rho_xz = config.rho_xz_targets[a]
    base = gen_z(config.population_type, N, m, _rng(config.seed, _Z))
    in_domain = np.arange(N) < m
    if config.single_auxiliary:
        x = base
        z = synth_z_from_x(x, rho_xz, _rng(config.seed, _X, a), tol)
    else:
        z = base
        x, _ = calibrate_tau_for_rho(z, rho_xz, tol, rng=_rng(config.seed, _X, a))
    y, _ = gen_y(config.case, x, in_domain, config.rho_yx_targets[b], _rng(config.seed, _Y, a, b), tol)
    pop = Population.from_arrays(z, x, y, ids=np.arange(1, N + 1))
    D = Domain.from_ids(pop, range(1, m + 1))
    return CellPopulation(pop, D, finite_pop_corr(pop.x, pop.z), finite_pop_corr(pop.y, pop.x))


def compute_theta(pop: Population, D: Domain, backend: str, R: int, seed: int,
                  variance_mode: str = "pooled", workers: int = 1) -> ThetaVector:
    eta = fit_eta(pop.z, pop.x, variance_mode)
    if backend == "montecarlo":
        return theta_from_probs(mc_order_probs(eta, pop.z, R, seed, workers), D)
    a0 = select_a0(pop.z, D, eta)
    return theta_indicator_approx(pop.z, D, eta, a0)


def _estimate_all(sample, cell: CellPopulation, theta, coeffs, t_xD):
    pop, D = cell.pop, cell.domain
    y_s = pop.y[sample.indices]
    x_s = pop.x[sample.indices]
    out = {
        "hr": est.hr_total(sample, theta, y_s),
        "hr1": est.hr1_ratio(sample, theta, y_s),
        "rhr": est.rhr_total(sample, theta, y_s, x_s, t_xD, coeffs, cell.rho_xz),
        "s": baselines.simple_synthetic(sample, y_s, D.size_m, D.n_units),
        "syn": baselines.syn_estimator(sample, pop.x, y_s, D),
        "greg": baselines.greg_estimator(sample, pop.x, y_s, D),
        "eblup": baselines.eblup_estimator(sample, pop.x, y_s, D),
    }
    gap = est.composition_diagnostic(sample, theta, y_s, cell.rho_xz).gap
    return out, gap


@dataclass
class MseRow:
    population: str
    case: str
    rho_xz: float
    rho_yx: float
    method: str
    mse: float
    ratio_vs_reference: float
    flags: str = ""


@dataclass
class CellSummary:
    rho_xz: float
    rho_yx: float
    achieved_rho_xz: float
    achieved_rho_yx: float
    t_yD: float
    hr_bias_true: float
    hr_mean_error: float
    mean_abs_composition_gap: float
    empty_domain_samples: int
    best_method: str
    error: str = ""


@dataclass
class MseTable:
    config: ScenarioConfig
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)

    CSV_COLUMNS = ("population", "case", "rho_xz", "rho_yx", "method", "mse", "ratio_vs_reference", "flags")

    def mse(self, rho_xz: float, rho_yx: float, method: str) -> float:
        for r in self.rows:
            if r.method == method and math.isclose(r.rho_xz, rho_xz) and math.isclose(r.rho_yx, rho_yx):
                return r.mse
        raise KeyError((rho_xz, rho_yx, method))

    def counts(self) -> dict:
        """Per method: number of cells where it beats the reference (ratio < 1),
        and number of cells where it has the smallest MSE."""
        beats = {m: 0 for m in METHODS}
        best = {m: 0 for m in METHODS}
        for r in self.rows:
            if r.ratio_vs_reference < 1:
                beats[r.method] += 1
        for c in self.cells:
            if c.best_method:
                best[c.best_method] += 1
        return {"beats_reference": beats, "best": best}

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.population, r.case, _fmt(r.rho_xz), _fmt(r.rho_yx), r.method,
                        _fmt(r.mse), _fmt(r.ratio_vs_reference), r.flags])
        return buf.getvalue() if fh is None else ""

    def cells_to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in dataclasses.fields(CellSummary)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for c in self.cells:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in dataclasses.astuple(c)])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def run_scenario(config: ScenarioConfig, workers: int | None = None, progress=None) -> MseTable:
    """Run the full grid and return per-cell empirical MSEs.

    ``workers`` overrides ``config.workers`` for the order-probability
    simulation (and therefore changes its random-stream partition).
    """
    workers = config.workers if workers is None else workers
    table = MseTable(config)
    ref = config.reference_method
    design = DesignSpec(config.n, config.N)
    coeffs = design_coeffs(design)
    theta_cache: dict[int, ThetaVector] = {}
    for a, rho_xz in enumerate(config.rho_xz_targets):
        for b, rho_yx in enumerate(config.rho_yx_targets):
            try:
                cell = build_population(config, a, b)
                if a not in theta_cache:
                    # theta depends on (z, x) only, shared along the rho_yx axis
                    seed = int(np.random.SeedSequence([config.seed, _THETA, a]).generate_state(1)[0])
                    theta_cache[a] = compute_theta(cell.pop, cell.domain, config.theta_backend,
                                                   config.orderprob_R, seed, config.variance_mode, workers)
                theta = theta_cache[a]
                _run_cell(table, config, cell, theta, design, coeffs, a, b, ref)
            except HRSAEError as exc:
                logger.warning("cell (%s, %s) aborted: %s", rho_xz, rho_yx, exc)
                table.cells.append(CellSummary(rho_xz, rho_yx, *([float("nan")] * 6), 0, "", str(exc)))
                for method in METHODS:
                    table.rows.append(MseRow(config.population_type, config.case, rho_xz, rho_yx,
                                             method, float("nan"), float("nan"), "cell-error"))
            if progress is not None:
                progress(a, b)
    return table


def _run_cell(table, config, cell, theta, design, coeffs, a, b, ref):
    pop, D = cell.pop, cell.domain
    t_yD = domain_total(pop, D)
    t_xD = float(pop.x[D.members].sum())
    rng = _rng(config.seed, _SAMPLES, a, b)
    errs = {m: [] for m in METHODS}
    missing = {m: 0 for m in METHODS}
    gaps = []
    empty = 0
    for _ in range(config.mc_samples):
        sample = draw_sample(design, rng)
        if not sample.in_domain(D).any():
            empty += 1
        values, gap = _estimate_all(sample, cell, theta, coeffs, t_xD)
        gaps.append(abs(gap))
        for method, v in values.items():
            if v is None:
                missing[method] += 1
            else:
                errs[method].append(v - t_yD)
    mse = {m: (float(np.mean(np.square(e))) if e else float("nan")) for m, e in errs.items()}
    ref_mse = mse[ref]
    rho_xz, rho_yx = config.rho_xz_targets[a], config.rho_yx_targets[b]
    for method in METHODS:
        flags = []
        if not errs[method]:
            flags.append("unavailable")
        elif missing[method]:
            flags.append(f"unavailable-samples={missing[method]}")
        ratio = mse[method] / ref_mse if ref_mse > 0 else float("nan")
        table.rows.append(MseRow(config.population_type, config.case, rho_xz, rho_yx, method,
                                 mse[method], ratio, "|".join(flags)))
    finite = {m: v for m, v in mse.items() if math.isfinite(v)}
    best = min(finite, key=finite.get) if finite else ""
    table.cells.append(CellSummary(
        rho_xz, rho_yx, cell.rho_xz, cell.rho_yx, t_yD,
        est.hr_bias_true(theta, pop, D), float(np.mean(errs["hr"])),
        float(np.mean(gaps)), empty, best))
