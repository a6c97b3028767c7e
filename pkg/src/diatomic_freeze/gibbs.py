"""Canonical (Gibbs) sampling of chain states and batch-means statistics.

Momenta are drawn exactly.  Positions come from checkerboard Metropolis:
every site of one species only talks to sites of the other species, so a
half-sweep updates all of them at once.  Many independent chains run side
by side in fixed-size blocks; block ``b`` draws from the stream
``SeedSequence(seed, spawn_key=(b,))`` so results do not depend on how
blocks are spread over workers.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainParams, DiffCoords, PhasePoint, potential

BLOCK_CHAINS = 64
TUNE_EVERY = 25


@dataclass(frozen=True)
class SamplerConfig:
    beta: float
    n_samples: int
    burn_in: int = 1000
    thin: int = 10
    step_scale: float = 0.0     # 0 picks a harmonic-scale default from beta
    seed: int = 0
    chains_per_block: int = BLOCK_CHAINS

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.n_samples) < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if int(self.thin) < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if int(self.burn_in) < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.step_scale < 0:
            raise ValueError(f"step_scale must be positive, got {self.step_scale}")
        if int(self.chains_per_block) < 1:
            raise ValueError("chains_per_block must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


@dataclass
class EnsembleEstimate:
    mean: float
    variance: float
    stderr_mean: float
    stderr_variance: float
    n_effective: float
    n_samples: int = 0


@dataclass
class SamplerDiagnostics:
    acceptance: float
    step: float
    tau_int: float              # integrated autocorrelation time of V, in recorded samples
    warnings: list = field(default_factory=list)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(block,))))


# -- momenta ---------------------------------------------------------------------

def sample_momenta(params: ChainParams, config: SamplerConfig, rng: np.random.Generator,
                   n: int | None = None) -> np.ndarray:
    """Gaussian momenta with variance m_i/beta, shifted to zero total momentum."""
    n = config.n_samples if n is None else n
    m = params.masses
    p = rng.standard_normal((n, 2 * params.N)) * np.sqrt(m / config.beta)
    P = p.sum(axis=-1, keepdims=True)
    return p - m * P / m.sum()


def projected_momentum_covariance(params: ChainParams, beta: float) -> np.ndarray:
    """Exact covariance (diag(m) - m m^T / M) / beta after the zero-momentum shift."""
    m = params.masses
    return (np.diag(m) - np.outer(m, m) / m.sum()) / beta


# -- positions -------------------------------------------------------------------

def _site_energy(x: np.ndarray, species: int, params: ChainParams) -> np.ndarray:
    """Energy of the two bonds touching every site of one species, shape (chains, N)."""
    x1, x2 = x[:, 0::2], x[:, 1::2]
    if species == 0:
        return potential(x2 - x1, params) + potential(x1 - np.roll(x2, 1, axis=-1), params)
    return potential(x2 - x1, params) + potential(np.roll(x1, -1, axis=-1) - x2, params)


def metropolis_sweep(x: np.ndarray, params: ChainParams, beta: float, step: float,
                     rng: np.random.Generator) -> float:
    """One in-place sweep over all sites of every chain; returns the acceptance rate."""
    accepted = 0
    for species in (0, 1):
        view = x[:, species::2]
        old = _site_energy(x, species, params)
        prop = rng.uniform(-step, step, size=view.shape)
        view += prop
        new = _site_energy(x, species, params)
        dE = new - old
        with np.errstate(over="ignore"):
            keep = rng.random(view.shape) < np.exp(-beta * np.clip(dE, 0.0, None))
        keep &= np.isfinite(new)
        view -= np.where(keep, 0.0, prop)
        accepted += int(keep.sum())
    return accepted / x.size


def recenter(x: np.ndarray, params: ChainParams) -> np.ndarray:
    m = params.masses
    return x - (x @ m)[..., None] / m.sum()


def default_step(params: ChainParams, beta: float) -> float:
    # thermal bond length sqrt(1/(beta K)), scaled so single-site moves land near 50%
    return 1.5 / math.sqrt(beta * params.K)


def integrated_time(series: np.ndarray) -> float:
    """Integrated autocorrelation time of a (chains, T) array with Sokal windowing."""
    s = series - series.mean(axis=-1, keepdims=True)
    T = s.shape[-1]
    if T < 4:
        return 1.0
    var = float(np.mean(s * s))
    if var == 0.0:
        return 1.0
    tau = 1.0
    for t in range(1, T // 2):
        rho = float(np.mean(s[:, t:] * s[:, :-t])) / var
        tau += 2 * rho
        if t >= 5 * tau:
            break
    return max(tau, 1.0)


def _run_block(params: ChainParams, config: SamplerConfig, block: int, n_chains: int,
               per_chain: int):
    rng = block_rng(config.seed, block)
    beta = config.beta
    step = config.step_scale or default_step(params, beta)
    x = np.zeros((n_chains, 2 * params.N))
    acc_window = []
    for sweep in range(config.burn_in):
        acc_window.append(metropolis_sweep(x, params, beta, step, rng))
        if len(acc_window) == TUNE_EVERY:
            step *= math.exp(np.mean(acc_window) - 0.5)
            acc_window = []
    out = np.empty((n_chains, per_chain, 2 * params.N))
    acc = []
    for t in range(per_chain):
        for _ in range(config.thin):
            acc.append(metropolis_sweep(x, params, beta, step, rng))
        out[:, t] = recenter(x, params)
    p = sample_momenta(params, config, rng, n=n_chains * per_chain)
    return out.reshape(-1, 2 * params.N), p, float(np.mean(acc)) if acc else math.nan, step, out


def sample_positions(params: ChainParams, config: SamplerConfig, workers: int = 1):
    """Draws of x from the position marginal, with sampling diagnostics."""
    x, _, diag = _sample(params, config, workers)
    return x, diag


def _layout(config: SamplerConfig):
    C = config.chains_per_block
    n = config.n_samples
    chains = min(C, n)
    per_chain = math.ceil(n / chains)
    n_blocks = 1
    if per_chain > 4 * C:
        # keep each chain short relative to the number of chains: add blocks
        n_blocks = math.ceil(math.sqrt(n / (4 * C * C)))
        per_chain = math.ceil(n / (n_blocks * chains))
    return n_blocks, chains, per_chain


def _sample(params: ChainParams, config: SamplerConfig, workers: int = 1):
    n_blocks, chains, per_chain = _layout(config)
    jobs = [(params, config, b, chains, per_chain) for b in range(n_blocks)]
    if workers > 1 and n_blocks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block_star, jobs))
    else:
        results = [_run_block(*j) for j in jobs]
    x = np.concatenate([r[0] for r in results])[: config.n_samples]
    p = np.concatenate([r[1] for r in results])[: config.n_samples]
    acc = float(np.mean([r[2] for r in results]))
    step = float(np.mean([r[3] for r in results]))
    traces = np.concatenate([r[4] for r in results])       # (chains, T, 2N)
    bonds = np.stack([traces[..., 1::2] - traces[..., 0::2],
                      traces[..., 0::2] - np.roll(traces[..., 1::2], 1, axis=-1)], axis=-1)
    V = potential(DiffCoords(bonds).r, params).sum(axis=(-1, -2))
    diag = SamplerDiagnostics(acc, step, integrated_time(V))
    if not 0.1 <= acc <= 0.9:
        diag.warnings.append(f"acceptance rate {acc:.3f} outside [0.1, 0.9] after tuning")
        warnings.warn(diag.warnings[-1], RuntimeWarning, stacklevel=3)
    return x, p, diag


def _run_block_star(args):
    return _run_block(*args)


def sample_ensemble(params: ChainParams, config: SamplerConfig, workers: int = 1):
    """Gibbs-distributed PhasePoint batch of shape (n_samples, 2N) plus diagnostics."""
    x, p, diag = _sample(params, config, workers)
    return PhasePoint(p, x), diag


# -- statistics -------------------------------------------------------------------

def _batch_stderr(values: np.ndarray, n_batches: int) -> float:
    b = len(values) // n_batches
    means = values[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def estimate(values) -> EnsembleEstimate:
    """Mean and variance with batch-means errors over floor(sqrt(n)) batches."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 16:
        raise ValueError(f"estimate needs at least 16 values, got {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values in estimate input")
    nb = int(math.isqrt(n))
    mean = float(v.mean())
    var = float(v.var(ddof=1))
    se = _batch_stderr(v, nb)
    se_var = _batch_stderr((v - mean) ** 2, nb)
    n_eff = float(n) if se == 0.0 else min(float(n), var / se ** 2)
    return EnsembleEstimate(mean, var, se, se_var, n_eff, n)
