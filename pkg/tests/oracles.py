"""Brute-force helpers shared by the test modules."""

import itertools

import numpy as np
from scipy import integrate, stats

from hrsae.sampling import DesignSpec, Sample


def all_samples(N, n):
    design = DesignSpec(n, N)
    return [Sample.from_indices(design, idx) for idx in itertools.combinations(range(N), n)]


def brute_a(N, n):
    """N x N matrix of a_ij from the SRSWOR inclusion probabilities, built elementwise."""
    pi = n / N
    a = np.empty((N, N))
    for i in range(N):
        for j in range(N):
            pij = pi if i == j else n * (n - 1) / (N * (N - 1))
            a[i, j] = pij / (pi * pi) - 1
    return a


def order_probs_quad(means, sds):
    """p_ij by adaptive quadrature over unit i's value and a Poisson-binomial count of lower units."""
    means, sds = np.asarray(means, float), np.asarray(sds, float)
    N = means.size
    out = np.zeros((N, N))
    for i in range(N):
        others = [k for k in range(N) if k != i]

        def pb(t, j):
            # probability that exactly j of the others fall below t
            dist = np.zeros(N)
            dist[0] = 1.0
            for k in others:
                q = stats.norm.cdf(t, means[k], sds[k])
                dist[1:] = dist[1:] * (1 - q) + dist[:-1] * q
                dist[0] *= 1 - q
            return dist[j]

        for j in range(N):
            f = lambda t: stats.norm.pdf(t, means[i], sds[i]) * pb(t, j)
            lo, hi = means.min() - 12 * sds.max(), means.max() + 12 * sds.max()
            out[i, j] = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
    return out
