"""Diatomic periodic chain: parameters, phase-space layout, energy and forces.

Particles are stored flat with stride 2: index ``2*j + i`` holds cell ``j``
(0-based, cell ``j+1`` in the usual 1-based labelling) and species ``i``
(0 for the heavy mass m1, 1 for the light mass m2).  Every function accepts
arrays with arbitrary leading batch dimensions, so an ensemble is simply a
batched :class:`PhasePoint`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChainParams:
    """Physical and lattice constants of the chain."""

    N: int
    m1: float
    m2: float
    K: float = 1.0
    A: float = 0.0
    B: float = 0.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if not (self.m1 > self.m2 > 0):
            raise ValueError(f"need m1 > m2 > 0, got m1={self.m1}, m2={self.m2}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")

    @property
    def masses(self) -> np.ndarray:
        """Per-particle masses in the flat (j, i) layout."""
        return np.tile([self.m1, self.m2], self.N).astype(float)

    def mass_ratio(self) -> float:
        return self.m1 / self.m2

    def S_order(self) -> int:
        return s_order(self)

    def harmonic(self) -> "ChainParams":
        """Same chain with the anharmonic couplings switched off."""
        return ChainParams(self.N, self.m1, self.m2, self.K, 0.0, 0.0)


def s_order(params: ChainParams) -> int:
    """Truncation order floor(sqrt(m1/m2)/2) of the adiabatic invariant."""
    ratio = params.m1 / params.m2
    s = math.floor(math.sqrt(ratio) / 2)
    # guard against sqrt rounding just below an integer (e.g. ratio 16 -> 2)
    if (2 * (s + 1)) ** 2 <= ratio:
        s += 1
    return s


@dataclass
class PhasePoint:
    """Canonical state (p, x); arrays have shape ``(..., 2N)``."""

    p: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.p.shape != self.x.shape or self.p.shape[-1] % 2:
            raise ValueError(f"p and x must share a shape (..., 2N); got {self.p.shape}, {self.x.shape}")

    @property
    def N(self) -> int:
        return self.x.shape[-1] // 2

    def copy(self) -> "PhasePoint":
        return PhasePoint(self.p.copy(), self.x.copy())

    def cells(self, which: str = "x") -> np.ndarray:
        """View of ``p`` or ``x`` reshaped to ``(..., N, 2)``."""
        arr = self.x if which == "x" else self.p
        return arr.reshape(arr.shape[:-1] + (self.N, 2))


def flat_index(j: int, i: int, N: int) -> int:
    """Flat index of cell j (any integer, taken mod N) and species i in {0, 1}."""
    return 2 * (j % N) + i


@dataclass
class DiffCoords:
    """Bond elongations: ``r[..., j, 0] = x_{j,2} - x_{j,1}``, ``r[..., j, 1] = x_{j,1} - x_{j-1,2}``."""

    r: np.ndarray

    @property
    def r1(self) -> np.ndarray:
        return self.r[..., 0]

    @property
    def r2(self) -> np.ndarray:
        return self.r[..., 1]


def diff_coords(state: PhasePoint) -> DiffCoords:
    x1 = state.x[..., 0::2]
    x2 = state.x[..., 1::2]
    r1 = x2 - x1
    r2 = x1 - np.roll(x2, 1, axis=-1)
    return DiffCoords(np.stack([r1, r2], axis=-1))


def potential(r, params: ChainParams):
    """Bond energy (K/2) r^2 (1 + A r + B r^2)."""
    r = np.asarray(r, dtype=float)
    return 0.5 * params.K * r * r * (1.0 + params.A * r + params.B * r * r)


def potential_prime(r, params: ChainParams):
    r = np.asarray(r, dtype=float)
    return params.K * r * (1.0 + 1.5 * params.A * r + 2.0 * params.B * r * r)


def kinetic(state: PhasePoint, params: ChainParams):
    p = state.p
    return 0.5 * (np.sum(p[..., 0::2] ** 2, axis=-1) / params.m1
                  + np.sum(p[..., 1::2] ** 2, axis=-1) / params.m2)


def potential_energy(state: PhasePoint, params: ChainParams):
    """Sum of V over the 2N bonds, evaluated from positions with periodic wrap."""
    x1 = state.x[..., 0::2]
    x2 = state.x[..., 1::2]
    inner = x2 - x1
    outer = np.roll(x1, -1, axis=-1) - x2  # x_{j+1,1} - x_{j,2}
    return np.sum(potential(inner, params) + potential(outer, params), axis=-1)


def hamiltonian(state: PhasePoint, params: ChainParams):
    return kinetic(state, params) + potential_energy(state, params)


def forces(state: PhasePoint, params: ChainParams) -> np.ndarray:
    """-dH/dx in the flat layout."""
    x1 = state.x[..., 0::2]
    x2 = state.x[..., 1::2]
    d1 = potential_prime(x2 - x1, params)
    d2 = potential_prime(x1 - np.roll(x2, 1, axis=-1), params)
    f = np.empty_like(state.x)
    f[..., 0::2] = d1 - d2
    f[..., 1::2] = np.roll(d2, -1, axis=-1) - d1
    return f


def total_momentum(state: PhasePoint):
    return np.sum(state.p, axis=-1)


def center_of_mass(state: PhasePoint, params: ChainParams):
    m = params.masses
    return np.sum(state.x * m, axis=-1) / m.sum()
