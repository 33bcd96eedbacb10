"""Size model, rank probabilities p_ij = P{X_i = X_(j)} and domain-membership weights.

The size model regresses the estimation-stage auxiliary ``x`` on the design
variable ``z``::

    X_i = alpha1 + alpha2 * z_i + delta_i,    Var(delta_i) = tau_i^2

``mc_order_probs`` simulates the fitted model ``R`` times and counts how often
each unit lands at each rank.  ``theta_from_probs`` sums the columns of that
matrix over a domain.  ``theta_indicator_approx`` is a cheap closed-form
alternative driven by a bandwidth ``a0``.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from . import _kernels
from .datamodel import Domain
from .errors import (
    DataError,
    DegenerateError,
    ModelViolationError,
    NoConvergenceError,
    SizeLimitError,
)

__all__ = [
    "EtaModel",
    "OrderProbMatrix",
    "ThetaVector",
    "fit_eta",
    "mc_order_probs",
    "exact_order_probs_small",
    "theta_from_probs",
    "theta_indicator_approx",
    "select_a0",
    "count_sign_changes",
    "model_hash",
    "save_order_probs",
    "load_order_probs",
]

ERROR_LAWS = ("normal", "empirical")
VARIANCE_MODES = ("pooled", "binned")


@dataclass(frozen=True, eq=False)
class EtaModel:
    """Fitted size model.

    ``residual_pool`` holds standardized, centered OLS residuals and is only
    used by the ``"empirical"`` error law, which draws ``tau_i * e`` with
    ``e`` resampled from the pool.
    """

    alpha1: float
    alpha2: float
    tau2: np.ndarray
    error_law: str = "normal"
    residual_pool: np.ndarray | None = None

    def __post_init__(self):
        tau2 = np.asarray(self.tau2, dtype=float)
        if np.any(tau2 < 0) or not np.all(np.isfinite(tau2)):
            raise DataError("tau2 must be finite and nonnegative")
        if not np.isfinite(self.alpha2):
            raise DataError("alpha2 must be finite")
        if self.error_law not in ERROR_LAWS:
            raise DataError(f"unknown error law {self.error_law!r}")
        if self.error_law == "empirical" and self.residual_pool is None:
            raise DataError("empirical error law needs a residual pool")
        object.__setattr__(self, "tau2", tau2)

    def means(self, z) -> np.ndarray:
        return self.alpha1 + self.alpha2 * np.asarray(z, dtype=float)


@dataclass(frozen=True, eq=False)
class OrderProbMatrix:
    """Rank-count matrix from ``R`` replications.

    ``counts[i, j]`` is how many replications put unit ``i`` at rank ``j``
    (0-based), so every row and column of ``counts`` sums to ``R``.
    """

    counts: np.ndarray
    replications: int

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.replications

    @property
    def n_units(self) -> int:
        return self.counts.shape[0]

    def is_doubly_stochastic(self, tol: float = 1e-9) -> bool:
        p = self.probs
        return bool(
            np.all(p >= 0)
            and np.all(p <= 1)
            and np.all(np.abs(p.sum(axis=0) - 1) <= tol)
            and np.all(np.abs(p.sum(axis=1) - 1) <= tol)
        )


@dataclass(frozen=True, eq=False)
class ThetaVector:
    theta: np.ndarray
    domain: Domain

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (self.domain.n_units,):
            raise DataError("theta length does not match the population")
        if np.any(theta < -1e-12) or np.any(theta > 1 + 1e-12):
            raise DataError("theta entries must lie in [0, 1]")
        if abs(theta.sum() - self.domain.size_m) > 1e-9 * max(1, self.domain.size_m):
            raise DataError("theta must sum to the domain size")
        theta = np.clip(theta, 0.0, 1.0)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, D: Domain) -> ThetaVector:
        return cls(np.full(D.n_units, D.size_m / D.n_units), D)

    @classmethod
    def indicator(cls, D: Domain) -> ThetaVector:
        return cls(D.mask.astype(float), D)


def fit_eta(z, x, variance_mode: str = "pooled", error_law: str = "normal") -> EtaModel:
    """Least-squares fit of ``x`` on ``z`` with pooled or z-binned residual variances.

    Pooled mode gives every unit the residual mean square ``RSS / (N - 2)``.
    Binned mode splits the units (in z order) into ``max(5, N // 50)``
    equal-count bins, capped so each bin holds at least two units, and gives
    each unit the sample variance of the residuals in its bin.
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    N = z.size
    if N < 3 or x.shape != z.shape:
        raise DataError("fit_eta needs z and x of equal length >= 3")
    if np.ptp(z) == 0:
        raise DegenerateError("z is constant; slope not identifiable")
    if variance_mode not in VARIANCE_MODES:
        raise DataError(f"unknown variance mode {variance_mode!r}")
    zc = z - z.mean()
    alpha2 = float((zc @ (x - x.mean())) / (zc @ zc))
    alpha1 = float(x.mean() - alpha2 * z.mean())
    resid = x - alpha1 - alpha2 * z
    if variance_mode == "pooled":
        tau2 = np.full(N, (resid @ resid) / (N - 2))
    else:
        n_bins = min(max(5, N // 50), max(1, N // 2))
        order = np.argsort(z, kind="stable")
        tau2 = np.empty(N)
        for block in np.array_split(order, n_bins):
            tau2[block] = np.var(resid[block], ddof=1)
    pool = None
    if error_law == "empirical":
        scale = np.sqrt(tau2)
        pool = np.where(scale > 0, resid / np.where(scale > 0, scale, 1.0), 0.0)
        pool = pool - pool.mean()
        sd = pool.std()
        pool = pool / sd if sd > 0 else pool
    return EtaModel(alpha1, alpha2, tau2, error_law, pool)


def _draw_errors(eta: EtaModel, rng: np.random.Generator, shape) -> np.ndarray:
    if eta.error_law == "normal":
        return rng.standard_normal(shape)
    pool = eta.residual_pool
    return pool[rng.integers(0, pool.size, size=shape)]


def _run_stream(eta, mean, scale, n_reps, rng, chunk):
    N = mean.size
    counts = np.zeros((N, N), dtype=np.int64)
    done = 0
    while done < n_reps:
        k = min(chunk, n_reps - done)
        values = mean + scale * _draw_errors(eta, rng, (k, N))
        _kernels.rank_count(values, counts)
        done += k
    return counts


def mc_order_probs(eta: EtaModel, z, R: int, seed, workers: int = 1,
                   chunk: int | None = None) -> OrderProbMatrix:
    """Monte-Carlo estimate of the rank probabilities under the fitted model.

    Replications are split into ``workers`` contiguous streams; stream ``k``
    draws from ``numpy.random.default_rng(seed + k)`` and keeps its own
    integer count matrix.  The result is reproducible for a fixed
    ``(seed, workers)`` pair; changing ``workers`` changes the partition and
    therefore the exact counts.  ``seed`` may also be a ``Generator``, in
    which case a single stream is used.
    """
    z = np.asarray(z, dtype=float)
    R = int(R)
    if R < 1:
        raise DataError("R must be at least 1")
    if eta.tau2.shape != z.shape:
        raise DataError("tau2 and z must have the same length")
    mean = eta.means(z)
    scale = np.sqrt(eta.tau2)
    N = z.size
    if chunk is None:
        chunk = max(1, (1 << 20) // N)
    if isinstance(seed, np.random.Generator):
        return OrderProbMatrix(_run_stream(eta, mean, scale, R, seed, chunk), R)
    workers = max(1, min(int(workers), R))
    shares = [R // workers + (1 if k < R % workers else 0) for k in range(workers)]
    rngs = [np.random.default_rng(int(seed) + k) for k in range(workers)]
    if workers == 1:
        counts = _run_stream(eta, mean, scale, R, rngs[0], chunk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_stream(eta, mean, scale, a[0], a[1], chunk),
                                  zip(shares, rngs)))
        counts = parts[0]
        for part in parts[1:]:
            counts += part
    return OrderProbMatrix(counts, R)


def exact_order_probs_small(means, variances, grid_points: int = 4001) -> np.ndarray:
    """Rank probabilities of independent normals by summing over all orderings.

    Each ordering ``a_1 < ... < a_N`` has probability
    ``G_N(inf)`` with ``G_0 = 1`` and
    ``G_k(t) = int_{-inf}^t f_{a_k}(u) G_{k-1}(u) du``.  The nested integrals
    are evaluated by cumulative Simpson quadrature on a shared grid covering
    +-10 standard deviations; orderings with a common prefix share work.
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    N = mu.size
    if N > 7:
        raise SizeLimitError(f"exact rank probabilities limited to N <= 7, got {N}")
    if var.shape != mu.shape or N < 1:
        raise DataError("means and variances must have equal nonzero length")
    if np.any(var <= 0):
        raise DataError("variances must be positive")
    sd = np.sqrt(var)
    lo = float(np.min(mu - 10 * sd))
    hi = float(np.max(mu + 10 * sd))
    if grid_points % 2 == 0:
        grid_points += 1
    t = np.linspace(lo, hi, grid_points)
    dens = np.array([stats.norm.pdf(t, m, s) for m, s in zip(mu, sd)])
    P = np.zeros((N, N))

    def descend(prefix, G, remaining):
        if len(remaining) == 1:
            last = remaining[0]
            prob = integrate.simpson(dens[last] * G, x=t)
            for rank, unit in enumerate(prefix + [last]):
                P[unit, rank] += prob
            return
        for unit in remaining:
            G_next = integrate.cumulative_simpson(dens[unit] * G, x=t, initial=0.0)
            rest = [u for u in remaining if u != unit]
            descend(prefix + [unit], G_next, rest)

    descend([], np.ones_like(t), list(range(N)))
    return P


def theta_from_probs(P: OrderProbMatrix, D: Domain) -> ThetaVector:
    """Domain-membership weights ``theta_i = sum_{j in D} p_ij``."""
    if P.n_units != D.n_units:
        raise DataError("order-probability matrix and domain sizes differ")
    theta = P.counts[:, D.members].sum(axis=1) / P.replications
    return ThetaVector(theta, D)


def _bandwidth_ratio(z, D: Domain, eta: EtaModel) -> np.ndarray:
    """``alpha2 |z_j - z_i| / sqrt(tau_j^2 + tau_i^2)`` for all i and j in D.

    The indicator for bandwidth ``a0`` is ``ratio <= a0``.  A zero scale maps
    to 0 for equal ``z`` and to infinity otherwise.
    """
    if not eta.alpha2 > 0:
        raise ModelViolationError(f"indicator approximation needs alpha2 > 0, got {eta.alpha2:g}")
    z = np.asarray(z, dtype=float)
    dz = np.abs(z[:, None] - z[None, D.members])
    scale = np.sqrt(eta.tau2[:, None] + eta.tau2[None, D.members])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = eta.alpha2 * dz / scale
    ratio[scale == 0] = np.where(dz[scale == 0] == 0, 0.0, np.inf)
    return ratio


def _normalize_clipped(raw: np.ndarray, m: int, tol: float = 1e-10, max_passes: int = 100) -> np.ndarray:
    total = raw.sum()
    if total <= 0:
        raise DegenerateError("all indicators are zero; bandwidth too small")
    theta = raw * (m / total)
    for _ in range(max_passes):
        if theta.max() <= 1 + tol and abs(theta.sum() - m) <= tol:
            return np.minimum(theta, 1.0)
        theta = np.minimum(theta, 1.0)
        fixed = theta >= 1.0
        free_sum = theta[~fixed].sum()
        if free_sum <= 0:
            raise DegenerateError("cannot spread the domain size over the units")
        theta[~fixed] *= (m - fixed.sum()) / free_sum
    raise NoConvergenceError("clip-and-rescale did not converge", float("nan"), max_passes)


def theta_indicator_approx(z, D: Domain, eta: EtaModel, a0: float, _ratio=None) -> ThetaVector:
    """Bandwidth approximation of the membership weights.

    Unit ``i`` gets weight proportional to the number of domain members ``j``
    with ``|z_j - z_i| <= a0 * sqrt(tau_i^2 + tau_j^2) / alpha2``, normalized
    to sum to ``m``.  Weights above one are clipped and the rest rescaled
    until both constraints hold.
    """
    if not a0 > 0:
        raise DataError("a0 must be positive")
    ratio = _bandwidth_ratio(z, D, eta) if _ratio is None else _ratio
    raw = (ratio <= a0).sum(axis=1).astype(float)
    return ThetaVector(_normalize_clipped(raw, D.size_m), D)


def count_sign_changes(seq, atol: float = 1e-12) -> int:
    """Number of strict sign changes in ``seq``, ignoring (near-)zero entries."""
    seq = np.asarray(seq, dtype=float)
    s = np.sign(seq[np.abs(seq) > atol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def select_a0(z, D: Domain, eta: EtaModel, step: float = 0.01, max_steps: int = 10_000,
              max_changes: int = 4) -> float:
    """Smallest ``a0`` on the grid ``step, 2*step, ...`` at which the successive
    differences of theta (in z order) change sign fewer than ``max_changes`` times."""
    ratio = _bandwidth_ratio(z, D, eta)
    changes = -1
    for k in range(1, max_steps + 1):
        a0 = k * step
        theta = theta_indicator_approx(z, D, eta, a0, _ratio=ratio).theta
        changes = count_sign_changes(np.diff(theta))
        if changes < max_changes:
            return a0
    raise NoConvergenceError("a0 search reached its cap", max_steps * step, changes)


# -- cache file -------------------------------------------------------------

_MAGIC = b"HRSAEPIJ"
_HEADER = struct.Struct("<8sIQQq32s")


def model_hash(eta: EtaModel, z) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack("<dd", eta.alpha1, eta.alpha2))
    h.update(np.ascontiguousarray(eta.tau2, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(z, dtype="<f8").tobytes())
    h.update(eta.error_law.encode())
    if eta.residual_pool is not None:
        h.update(np.ascontiguousarray(eta.residual_pool, dtype="<f8").tobytes())
    return h.digest()


def save_order_probs(path, P: OrderProbMatrix, seed: int, digest: bytes = b"\0" * 32) -> None:
    """Write the count matrix: fixed header then row-major little-endian int64 counts."""
    header = _HEADER.pack(_MAGIC, 1, P.n_units, P.replications, int(seed), digest)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(P.counts, dtype="<i8").tobytes())


def load_order_probs(path, verify: bool = True):
    """Read a cache file; returns ``(OrderProbMatrix, seed, digest)``.

    With ``verify`` the counts must form ``R`` times a doubly stochastic
    matrix exactly, otherwise :class:`DataError` is raised.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError("order-probability cache is truncated")
    magic, version, N, R, seed, digest = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise DataError("not an order-probability cache file")
    body = raw[_HEADER.size:]
    if len(body) != 8 * N * N:
        raise DataError("order-probability cache body has the wrong size")
    counts = np.frombuffer(body, dtype="<i8").reshape(N, N).astype(np.int64)
    if verify and (
        np.any(counts < 0) or np.any(counts.sum(axis=0) != R) or np.any(counts.sum(axis=1) != R)
    ):
        raise DataError("order-probability cache fails the doubly-stochastic check")
    return OrderProbMatrix(counts, int(R)), int(seed), digest
