"""Sampling designs, Horvitz-Thompson sums and design-covariance coefficients.

Only simple random sampling without replacement (SRSWOR) is implemented.
Under SRSWOR every coefficient ``a_ij`` takes one value on the diagonal and
one off it, so every double sum over units collapses to

    sum_ij a_ij u_i v_j = a_off * sum(u) * sum(v) + (a_diag - a_off) * sum(u * v)

and nothing of size N x N is ever stored.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .datamodel import Domain
from .errors import DataError

__all__ = [
    "DesignKind",
    "DesignSpec",
    "Sample",
    "DesignCoeffs",
    "DirectEstimate",
    "inclusion_probs",
    "draw_sample",
    "ht_domain_total",
    "design_coeffs",
]


class DesignKind(str, enum.Enum):
    SRSWOR = "SRSWOR"


@dataclass(frozen=True)
class DesignSpec:
    n: int
    N: int
    kind: DesignKind = DesignKind.SRSWOR

    def __post_init__(self):
        if not 1 <= self.n <= self.N:
            raise DataError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")
        object.__setattr__(self, "kind", DesignKind(self.kind))


@dataclass(frozen=True, eq=False)
class Sample:
    """Drawn sample: sorted 0-based positions and their design weights ``1/pi_i``."""

    indices: np.ndarray
    weights: np.ndarray
    design: DesignSpec

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if idx.shape != w.shape or idx.size != self.design.n:
            raise DataError("sample size does not match the design")
        if np.unique(idx).size != idx.size:
            raise DataError("sample indices must be unique")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_indices(cls, design: DesignSpec, indices) -> Sample:
        """Wrap given positions (e.g. read from a file) with their weights."""
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        pi, _ = inclusion_probs(design)
        return cls(idx, 1.0 / pi(idx), design)

    @property
    def n(self) -> int:
        return int(self.indices.size)

    def in_domain(self, D: Domain) -> np.ndarray:
        """Boolean mask over the sample: which sampled units lie in ``D``."""
        return D.mask[self.indices]


class DirectEstimate(NamedTuple):
    total: float
    empty: bool


def inclusion_probs(design: DesignSpec):
    """First- and second-order inclusion probabilities as vectorised functions.

    ``pi(i)`` and ``pi2(i, j)`` accept scalars or arrays of 0-based positions;
    ``pi2(i, i)`` equals ``pi(i)``.
    """
    if design.kind is not DesignKind.SRSWOR:
        raise NotImplementedError(f"design {design.kind} is not implemented")
    n, N = design.n, design.N
    p1 = n / N
    p2 = n * (n - 1) / (N * (N - 1)) if N > 1 else p1

    def pi(i):
        return np.full(np.shape(i), p1) if np.ndim(i) else p1

    def pi2(i, j):
        same = np.asarray(i) == np.asarray(j)
        out = np.where(same, p1, p2)
        return out if out.ndim else float(out)

    return pi, pi2


def draw_sample(design: DesignSpec, rng: np.random.Generator) -> Sample:
    """Draw an SRSWOR sample; the same generator state gives the same sample."""
    if design.kind is not DesignKind.SRSWOR:
        raise NotImplementedError(f"design {design.kind} is not implemented")
    idx = np.sort(rng.choice(design.N, size=design.n, replace=False))
    return Sample(idx, np.full(design.n, design.N / design.n), design)


def ht_domain_total(sample: Sample, y_on_s, D: Domain) -> DirectEstimate:
    """Direct Horvitz-Thompson total over ``s`` intersected with ``D``.

    An empty intersection yields ``DirectEstimate(0.0, empty=True)``.
    """
    y_on_s = np.asarray(y_on_s, dtype=float)
    inside = sample.in_domain(D)
    if not inside.any():
        return DirectEstimate(0.0, True)
    return DirectEstimate(float(sample.weights[inside] @ y_on_s[inside]), False)


@dataclass(frozen=True)
class DesignCoeffs:
    """Coefficients ``a_ij = d_i d_j pi_ij - 1`` (``a_ii = d_i - 1``) and ``a~_ij = a_ij / pi_ij``.

    Stored as the two SRSWOR constants of each.  ``tilde_off`` is NaN when
    ``n = 1`` since no pair of distinct units can be sampled together.
    """

    a_diag: float
    a_off: float
    tilde_diag: float
    tilde_off: float

    def a(self, i, j):
        return np.where(np.asarray(i) == np.asarray(j), self.a_diag, self.a_off)

    def a_tilde(self, i, j):
        return np.where(np.asarray(i) == np.asarray(j), self.tilde_diag, self.tilde_off)

    def bilinear(self, u, v) -> float:
        """``sum_{i,j in U} a_ij u_i v_j`` for population vectors ``u``, ``v``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return float(self.a_off * u.sum() * v.sum() + (self.a_diag - self.a_off) * (u @ v))

    def bilinear_tilde(self, u, v) -> float:
        """``sum_{i,j in s} a~_ij u_i v_j`` for vectors aligned with a sample."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        diag = (self.tilde_diag) * (u @ v)
        if u.size < 2:
            return float(diag)
        return float(self.tilde_off * (u.sum() * v.sum() - u @ v) + diag)


def design_coeffs(design: DesignSpec) -> DesignCoeffs:
    pi, pi2 = inclusion_probs(design)
    p1 = pi(0)
    d = 1.0 / p1
    a_diag = d - 1.0
    if design.N > 1:
        p2 = pi2(0, 1)
        a_off = d * d * p2 - 1.0
        tilde_off = a_off / p2 if p2 > 0 else float("nan")
    else:
        a_off, tilde_off = 0.0, 0.0
    return DesignCoeffs(a_diag, a_off, a_diag / p1, tilde_off)
