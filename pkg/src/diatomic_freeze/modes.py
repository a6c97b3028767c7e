"""Normal modes of the diatomic chain and the canonical transforms around them.

Mode arrays are laid out ``(..., 2, N)``: the first axis is the branch
(index 0 optical ``+``, index 1 acoustic ``-``) and the second runs over the
wave numbers ``k = floor(-N/2)+1 .. floor(N/2)`` in increasing order.  Sites
carry the 1-based label j = 1..N in all phase factors ``exp(i kappa j)``.

The acoustic k = 0 slot has zero frequency.  It has no (xi, eta) pair; its
entries in xi/eta arrays are NaN and :meth:`ModeBasis.slot` refuses it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainParams, DiffCoords, PhasePoint

OPTICAL, ACOUSTIC = 0, 1
BRANCH_SIGN = (1, -1)


@dataclass(frozen=True)
class ModeBasis:
    params: ChainParams
    ks: np.ndarray          # (N,) wave numbers
    kappa: np.ndarray       # (N,) 2 pi k / N
    Delta: np.ndarray       # (N,)
    omega: np.ndarray       # (2, N); omega[0] optical, omega[1] acoustic
    u: np.ndarray           # (2, N, 2) complex eigenvectors
    w: np.ndarray           # (2, N, 2) complex bond vectors
    alpha: np.ndarray       # (2, N) phases of w (0 on the acoustic k=0 slot)
    Omega: float
    neg: np.ndarray = field(repr=False)  # slot index of -k for each slot

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def kmin(self) -> int:
        return int(self.ks[0])

    @property
    def omega_plus(self) -> np.ndarray:
        return self.omega[OPTICAL]

    @property
    def omega_minus(self) -> np.ndarray:
        return self.omega[ACOUSTIC]

    def index(self, k: int) -> int:
        """Slot index of wave number k (taken mod N)."""
        return (k - self.kmin) % self.N

    def wrap(self, k: int) -> int:
        return self.index(k) + self.kmin

    def excluded(self, l: int, k: int) -> bool:
        return l == ACOUSTIC and self.wrap(k) == 0

    def slot(self, l: int, k: int) -> tuple[int, int]:
        """Array position of the (xi, eta) pair for branch l and wave number k."""
        if self.excluded(l, k):
            raise ValueError("the acoustic k=0 mode has zero frequency and no (xi, eta) pair")
        return l, self.index(k)

    def slots(self) -> list[tuple[int, int]]:
        """All (branch, k) pairs that carry (xi, eta) coordinates."""
        return [(l, int(k)) for l in (OPTICAL, ACOUSTIC) for k in self.ks
                if not self.excluded(l, int(k))]


def dispersion(params: ChainParams, k) -> tuple[np.ndarray, np.ndarray]:
    """Optical and acoustic frequencies at wave number(s) k."""
    m1, m2, K, N = params.m1, params.m2, params.K, params.N
    kappa = 2 * np.pi * np.asarray(k, dtype=float) / N
    sq = np.sqrt(m1 * m1 + m2 * m2 + 2 * m1 * m2 * np.cos(kappa))
    wp = np.sqrt(K * (m1 + m2 + sq) / (m1 * m2))
    wm2 = K * (m1 + m2 - sq) / (m1 * m2)
    wm = np.sqrt(np.clip(wm2, 0.0, None))
    return wp, np.where(np.asarray(k) % N == 0, 0.0, wm)


def build_basis(params: ChainParams) -> ModeBasis:
    N, m1, m2, K = params.N, params.m1, params.m2, params.K
    kmin = -(N // 2) + 1 if N % 2 == 0 else -(N // 2)
    ks = np.arange(kmin, kmin + N)
    kappa = 2 * np.pi * ks / N
    Delta = m1 * m1 + m2 * m2 + 2 * m1 * m2 * np.cos(kappa)
    sq = np.sqrt(Delta)
    wp, wm = dispersion(params, ks)
    omega = np.stack([wp, wm])

    u = np.zeros((2, N, 2), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):  # k = N/2 is overwritten below
        for li, s in enumerate(BRANCH_SIGN):
            c = (N * sq / (2 * m2) * (sq - s * (m2 - m1))) ** -0.5
            u[li, :, 0] = c * np.cos(kappa / 2)
            u[li, :, 1] = c * (m2 - m1 - s * sq) * np.exp(0.5j * kappa) / (2 * m2)
    if N % 2 == 0:
        h = np.searchsorted(ks, N // 2)
        u[OPTICAL, h] = [0.0, 1 / np.sqrt(N * m2)]
        u[ACOUSTIC, h] = [1 / np.sqrt(N * m1), 0.0]

    w = np.empty_like(u)
    w[..., 0] = u[..., 1] - u[..., 0]
    w[..., 1] = u[..., 0] - u[..., 1] * np.exp(-1j * kappa)
    alpha = np.angle(w[..., 0])
    alpha[ACOUSTIC, ks == 0] = 0.0

    neg = (-ks - kmin) % N
    Omega = float(np.sqrt(2 * K * (m1 + m2) / (m1 * m2)))
    return ModeBasis(params, ks, kappa, Delta, omega, u, w, alpha, Omega, neg)


@dataclass
class ModeState:
    """Complex normal-mode amplitudes, arrays of shape ``(..., 2, N)``."""

    qhat: np.ndarray
    phat: np.ndarray


def _site_phases(basis: ModeBasis) -> np.ndarray:
    j = np.arange(1, basis.N + 1)
    return np.exp(-1j * np.outer(basis.kappa, j))  # (N_k, N_j)


def _fft_order(basis: ModeBasis) -> np.ndarray:
    return basis.ks % basis.N


def x_to_modes(state: PhasePoint, basis: ModeBasis, method: str = "fft") -> ModeState:
    """qhat = sum_j <x_j, M u_k> e^{-i kappa j}; phat = sum_j <p_j, conj u_k> e^{i kappa j}."""
    m = np.array([basis.params.m1, basis.params.m2])
    X = state.cells("x")
    P = state.cells("p")
    if method == "fft":
        order = _fft_order(basis)
        shift = np.exp(-1j * basis.kappa)
        Xk = np.fft.fft(X, axis=-2)[..., order, :] * shift[:, None]
        Pk = np.conj(np.fft.fft(P, axis=-2)[..., order, :] * shift[:, None])
    elif method == "direct":
        F = _site_phases(basis)
        Xk = np.einsum("kj,...ji->...ki", F, X)
        Pk = np.einsum("kj,...ji->...ki", np.conj(F), P)
    else:
        raise ValueError(f"unknown method {method!r}")
    qhat = np.einsum("lki,...ki->...lk", np.conj(basis.u) * m, Xk)
    phat = np.einsum("lki,...ki->...lk", basis.u, Pk)
    return ModeState(qhat, phat)


def modes_to_x(modes: ModeState, basis: ModeBasis, method: str = "fft",
               reality_tol: float = 1e-9) -> PhasePoint:
    """Inverse of :func:`x_to_modes`; rejects mode data that does not describe a real state."""
    m = np.array([basis.params.m1, basis.params.m2])
    Y = np.einsum("lki,...lk->...ki", basis.u, modes.qhat)
    Q = np.einsum("lki,...lk->...ki", np.conj(basis.u), modes.phat)
    if method == "fft":
        N = basis.N
        inv = np.argsort(_fft_order(basis))
        Yp = (Y * np.exp(1j * basis.kappa)[:, None])[..., inv, :]
        Qp = (Q * np.exp(-1j * basis.kappa)[:, None])[..., inv, :]
        X = N * np.fft.ifft(Yp, axis=-2)
        P = np.fft.fft(Qp, axis=-2) * m
    elif method == "direct":
        F = _site_phases(basis)
        X = np.einsum("kj,...ki->...ji", np.conj(F), Y)
        P = np.einsum("kj,...ki->...ji", F, Q) * m
    else:
        raise ValueError(f"unknown method {method!r}")
    scale = max(1.0, float(np.max(np.abs(X), initial=0.0)), float(np.max(np.abs(P), initial=0.0)))
    resid = max(float(np.max(np.abs(X.imag), initial=0.0)), float(np.max(np.abs(P.imag), initial=0.0)))
    if resid > reality_tol * scale:
        raise ValueError(f"mode amplitudes violate the reality condition (imaginary residue {resid:.3e})")
    shape = X.shape[:-2] + (2 * basis.N,)
    return PhasePoint(P.real.reshape(shape), X.real.reshape(shape))


def r_to_modes(r: DiffCoords, basis: ModeBasis) -> np.ndarray:
    """omega*qhat from bond elongations alone, shape ``(..., 2, N)``.

    Uses omega qhat = (K/omega) sum_j <r_j, w_k> e^{-i kappa j}, which for the
    generic slots is sqrt(K/2N) sum_j (r_{j,1} e^{-i alpha} - r_{j,2} e^{i alpha}) e^{-i kappa j}.
    The acoustic k=0 slot (omega = 0, w = 0) is returned as NaN.
    """
    K, N = basis.params.K, basis.N
    order = _fft_order(basis)
    Rk = np.fft.fft(r.r, axis=-2)[..., order, :] * np.exp(-1j * basis.kappa)[:, None]
    proj = np.einsum("lki,...ki->...lk", np.conj(basis.w), Rk)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = K * proj / basis.omega
    out[..., ACOUSTIC, basis.ks == 0] = np.nan
    return out


def modes_to_xieta(modes: ModeState, basis: ModeBasis) -> tuple[np.ndarray, np.ndarray]:
    """xi_k = (phat_k + i w qhat_{-k})/sqrt2, eta_k = (phat_{-k} - i w qhat_k)/sqrt2."""
    om, neg = basis.omega, basis.neg
    xi = (modes.phat + 1j * om * modes.qhat[..., neg]) / np.sqrt(2)
    eta = (modes.phat[..., neg] - 1j * om * modes.qhat) / np.sqrt(2)
    zero = basis.ks == 0
    xi[..., ACOUSTIC, zero] = np.nan
    eta[..., ACOUSTIC, zero] = np.nan
    return xi, eta


def xieta_to_modes(xi: np.ndarray, eta: np.ndarray, basis: ModeBasis,
                   zero_mode: tuple = (0.0, 0.0)) -> ModeState:
    """Inverse of :func:`modes_to_xieta`; the acoustic k=0 (qhat, phat) pair is supplied separately."""
    om, neg = basis.omega, basis.neg
    zero = basis.ks == 0
    xi = np.array(xi, dtype=complex)
    eta = np.array(eta, dtype=complex)
    xi[..., ACOUSTIC, zero] = 0.0
    eta[..., ACOUSTIC, zero] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        qhat = (xi[..., neg] - eta) / (1j * np.sqrt(2) * om)
    phat = (xi + eta[..., neg]) / np.sqrt(2)
    qhat[..., ACOUSTIC, zero] = np.asarray(zero_mode[0])[..., None]
    phat[..., ACOUSTIC, zero] = np.asarray(zero_mode[1])[..., None]
    return ModeState(qhat, phat)


def state_to_xieta(state: PhasePoint, basis: ModeBasis) -> tuple[np.ndarray, np.ndarray]:
    return modes_to_xieta(x_to_modes(state, basis), basis)


def mode_energies(modes: ModeState, basis: ModeBasis) -> np.ndarray:
    """Per-slot quadratic energy (|phat|^2 + omega^2 |qhat|^2)/2, shape ``(..., 2, N)``."""
    return 0.5 * (np.abs(modes.phat) ** 2 + basis.omega ** 2 * np.abs(modes.qhat) ** 2)


def single_mode(basis: ModeBasis, l: int, k: int, amplitude: complex = 1.0,
                momentum: complex = 0.0) -> ModeState:
    """Real state exciting only the (k, -k) pair of branch l with qhat_k = amplitude."""
    qhat = np.zeros((2, basis.N), dtype=complex)
    phat = np.zeros((2, basis.N), dtype=complex)
    i, ineg = basis.index(k), basis.neg[basis.index(k)]
    if i == ineg:
        amplitude, momentum = complex(amplitude).real, complex(momentum).real
    qhat[l, i], qhat[l, ineg] = amplitude, np.conj(amplitude)
    phat[l, i], phat[l, ineg] = momentum, np.conj(momentum)
    return ModeState(qhat, phat)


def dynamical_matrix(params: ChainParams, k: int) -> np.ndarray:
    """Mass-weighted 2x2 Hermitian dynamical matrix from the linearised equations of motion."""
    m1, m2, K = params.m1, params.m2, params.K
    kappa = 2 * np.pi * k / params.N
    # m1 x''_{j,1} = K (x_{j,2} + x_{j-1,2} - 2 x_{j,1}),  m2 x''_{j,2} = K (x_{j,1} + x_{j+1,1} - 2 x_{j,2})
    phi = K * np.array([[2.0, -(1 + np.exp(-1j * kappa))],
                        [-(1 + np.exp(1j * kappa)), 2.0]])
    s = np.array([m1, m2]) ** -0.5
    return phi * np.outer(s, s)
