"""Ensemble variances of polynomial observables and a Gaussian-moment oracle."""
from __future__ import annotations

from collections import Counter

import numpy as np

from ..gibbs import EnsembleEstimate, estimate
from .poly import SparsePoly, conjugate_key, evaluate


def mc_variance_of_poly(f: SparsePoly, ensemble, basis) -> EnsembleEstimate:
    """Monte Carlo mean and variance of Re f over a batch of sampled states."""
    values = np.real(evaluate(f, ensemble, basis))
    return estimate(values)


def wick_moment(factors, beta: float) -> float:
    """Harmonic Gibbs moment <prod factors> by enumerating all perfect pairings.

    Under exp(-beta sum xi eta) the only nonzero pair is <xi_v eta_v> = 1/beta,
    so a pairing contributes beta^(-n/2) when every pair joins a xi with the eta
    of the same slot.  Factors are ``(l, k, sigma)`` triples.
    """
    items = list(factors)
    if len(items) % 2:
        return 0.0
    # quick reject keeps the brute force cheap on impossible products
    c = Counter(items)
    for (l, k, s), n in c.items():
        if c.get((l, k, -s), 0) != n:
            return 0.0

    def count(rest):
        if not rest:
            return 1
        head, tail = rest[0], rest[1:]
        total = 0
        for i, other in enumerate(tail):
            if other[:2] == head[:2] and other[2] == -head[2]:
                total += count(tail[:i] + tail[i + 1:])
        return total

    return count(items) * beta ** (-(len(items) // 2))


def monomial_real_part_variance(coef: complex, key, beta: float) -> float:
    """Exact harmonic variance of Re(c * m) for a single monomial m."""
    ckey = conjugate_key(key)
    mm = wick_moment(key + key, beta)
    mc = wick_moment(key + ckey, beta)
    mean_m = wick_moment(key, beta)
    # Re(c m) = (c m + conj(c) conj(m)) / 2 and <conj(m) conj(m)> = conj <m m>
    second = 0.5 * np.real(coef * coef * mm) + 0.5 * abs(coef) ** 2 * mc
    mean = np.real(coef * mean_m)
    return float(second - mean ** 2)
