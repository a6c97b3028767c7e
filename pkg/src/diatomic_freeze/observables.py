"""Branch energies and their time autocorrelations over an ensemble."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainParams, PhasePoint, hamiltonian
from .chain import s_order as _s_order
from .modes import ACOUSTIC, OPTICAL, ModeBasis, mode_energies, x_to_modes

MIN_TRAJECTORIES = 64


@dataclass
class BranchEnergies:
    e_plus: np.ndarray
    e_minus: np.ndarray
    h_nl: np.ndarray
    phi0: np.ndarray


def branch_energies(state: PhasePoint, basis: ModeBasis) -> BranchEnergies:
    """Optical/acoustic quadratic energies, the nonlinear remainder and the optical action."""
    e = mode_energies(x_to_modes(state, basis), basis)
    e_plus = e[..., OPTICAL, :].sum(axis=-1)
    e_minus = e[..., ACOUSTIC, :].sum(axis=-1)
    phi0 = (e[..., OPTICAL, :] / basis.omega[OPTICAL]).sum(axis=-1)
    h_nl = hamiltonian(state, basis.params) - e_plus - e_minus
    return BranchEnergies(e_plus, e_minus, h_nl, phi0)


def s_order(params: ChainParams) -> int:
    return _s_order(params)


@dataclass
class CorrelationSeries:
    lags: np.ndarray
    c_f: np.ndarray
    stderr: np.ndarray
    c0: float


def _batch_se(z: np.ndarray) -> np.ndarray:
    """Batch-means standard error along axis -1 with floor(sqrt(n)) batches."""
    n = z.shape[-1]
    nb = math.isqrt(n)
    b = n // nb
    means = z[..., : nb * b].reshape(z.shape[:-1] + (nb, b)).mean(axis=-1)
    return means.std(axis=-1, ddof=1) / math.sqrt(nb)


def _check_series(series) -> np.ndarray:
    F = np.asarray(series, dtype=float)
    if F.ndim != 2:
        raise ValueError("expected a (times, trajectories) array")
    if F.shape[1] < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories, got {F.shape[1]}")
    return F


def autocorrelation(series, lags=None) -> CorrelationSeries:
    """C_F(t) = <F_t F_0> - <F_0>^2 on the recorded grid.

    ``series`` has shape (times, trajectories) with row 0 the sampled initial
    states; ``lags`` are the corresponding times (defaults to row indices).
    Errors come from batch means of the per-trajectory products.
    """
    F = _check_series(series)
    lags = np.arange(F.shape[0], dtype=float) if lags is None else np.asarray(lags, dtype=float)
    d0 = F[0] - F[0].mean()
    z = F * d0                   # averages to <F_t F_0> - <F_t><F_0>
    c = z.mean(axis=-1)
    c[0] = float(np.mean(d0 * d0))
    return CorrelationSeries(lags, c, _batch_se(z), float(c[0]))


@dataclass
class CorrelationDrift:
    """C_F(t) - C_F(0) estimated from per-trajectory increments."""

    lags: np.ndarray
    delta: np.ndarray
    stderr: np.ndarray
    c0: float


def correlation_drift(series, lags=None, weight=None) -> CorrelationDrift:
    """<(F_t - F_0)(G_0 - <G>)> with G = F unless ``weight`` gives another series' initial values.

    Working with increments cancels most of the sampling noise that the two
    separate estimates of C_F(t) and C_F(0) would carry.
    """
    F = _check_series(series)
    lags = np.arange(F.shape[0], dtype=float) if lags is None else np.asarray(lags, dtype=float)
    G0 = F[0] if weight is None else np.asarray(weight, dtype=float)
    g = G0 - G0.mean()
    z = (F - F[0]) * g
    return CorrelationDrift(lags, z.mean(axis=-1), _batch_se(z), float(np.mean((F[0] - F[0].mean()) ** 2)))


@dataclass
class IdentityCheck:
    lags: np.ndarray
    lhs: np.ndarray              # Delta C_{E-}
    rhs: np.ndarray              # reconstruction from E+, H_nl and cross terms
    combined_stderr: np.ndarray

    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.combined_stderr > 0,
                            np.abs(self.lhs - self.rhs) / self.combined_stderr,
                            np.where(self.lhs == self.rhs, 0.0, np.inf))


def acoustic_identity(e_plus, e_minus, h_nl, lags=None) -> IdentityCheck:
    """Check Delta C_{E-} = Delta C_{E+} + Delta C_{Hnl} + cross terms.

    With H = E+ + E- + H_nl conserved, E- increments are minus the E+ and
    H_nl increments, which gives
    Delta C_{E-} = Delta C_{E+} + Delta C_{Hnl}
                   + <(E+_t - E+_0)(Hnl_0 - <Hnl>)> + <(Hnl_t - Hnl_0)(E+_0 - <E+>)>
    up to a term <(E-_t - E-_0)(H - <H>)> that vanishes in the stationary ensemble.
    """
    Ep, Em, Hn = (np.asarray(a, dtype=float) for a in (e_plus, e_minus, h_nl))
    lhs = correlation_drift(Em, lags)
    parts = [correlation_drift(Ep, lags), correlation_drift(Hn, lags),
             correlation_drift(Ep, lags, weight=Hn[0]), correlation_drift(Hn, lags, weight=Ep[0])]
    rhs = sum(p.delta for p in parts)
    se = np.sqrt(lhs.stderr ** 2 + sum(p.stderr ** 2 for p in parts))
    return IdentityCheck(lhs.lags, lhs.delta, rhs, se)


@dataclass
class FreezingReport:
    t: np.ndarray
    fraction: np.ndarray
    normalized_drift: np.ndarray
    stderr: np.ndarray
    sigma2: float


def freezing_report(series, t_grid=None, threshold: float = 0.2) -> FreezingReport:
    """Per-time fraction of frozen trajectories and |C(t) - C(0)| / sigma^2.

    sigma^2 is the variance of the initial ensemble.
    """
    F = _check_series(series)
    dr = correlation_drift(F, t_grid)
    sigma2 = dr.c0
    sigma = math.sqrt(sigma2) if sigma2 > 0 else 1.0
    frac = np.mean(np.abs(F - F[0]) / sigma <= threshold, axis=-1)
    norm = sigma2 if sigma2 > 0 else 1.0
    return FreezingReport(dr.lags, frac, np.abs(dr.delta) / norm, dr.stderr / norm, sigma2)


def first_crossing(report: FreezingReport, level: float) -> float:
    """First recorded time the normalized drift exceeds ``level``; inf if it never does."""
    above = np.nonzero(report.normalized_drift > level)[0]
    return float(report.t[above[0]]) if above.size else math.inf
