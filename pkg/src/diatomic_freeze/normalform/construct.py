"""Lie-transform construction of the optical adiabatic invariant.

Conventions, all tied to the canonical bracket of :func:`poisson_bracket`:

* ``l0_apply(f) = {H0, f}``; a monomial is an eigenvector with eigenvalue
  ``-i sum_j sigma_j omega_j``.  Likewise ``lomega_apply(f) = {H_Omega, f}``
  with eigenvalue ``-i Omega n_plus`` where ``n_plus = sum_j sigma_j [l_j optical]``.
* ``L_chi f = {f, chi}`` and ``T_chi = sum_s E_s`` with
  ``E_0 = 1, E_s = sum_{j=1}^s (j/s) L_{chi_j} E_{s-j}``.
* The construction solves ``T_chi Z = H`` order by order:
  ``l0(chi_s) + Z_s = Psi_s`` with ``Z_s`` in the kernel of ``L_Omega``.
  Then ``Phi = T_chi Phi0`` Poisson-commutes with ``H`` up to order ``S``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from ..chain import ChainParams, s_order
from ..modes import ACOUSTIC, OPTICAL, ModeBasis
from .poly import (SparsePoly, TermBudgetExceeded, canonical, key_momentum,
                   evaluate, optical_charge, plus_norm, poisson_bracket)

NEUMANN_MAX_ITER = 200
NEUMANN_REL_TOL = 1e-14


class HomologicalGuardError(ArithmeticError):
    """A range monomial whose L0 eigenvalue is too small to divide by safely."""


class NeumannDivergence(ArithmeticError):
    pass


# -- the quadratic part --------------------------------------------------------

def _diag_key(l: int, k: int):
    return canonical([(l, k, 1), (l, k, -1)])


def build_H0_Phi0_HOmega_Theta0(basis: ModeBasis):
    """H0 = sum xi eta, Phi0 = sum_optical xi eta / omega, H_Omega = Omega Phi0, Theta0 = H0 - H_Omega."""
    N = basis.N
    slots = basis.slots()
    H0 = SparsePoly(2, N, {_diag_key(l, k): 1.0 for l, k in slots})
    Phi0 = SparsePoly(2, N, {_diag_key(l, k): 1.0 / basis.omega[l, basis.index(k)]
                             for l, k in slots if l == OPTICAL})
    HOmega = Phi0 * basis.Omega
    Theta0 = H0 - HOmega
    return H0, Phi0, HOmega, Theta0


# -- anharmonic parts ----------------------------------------------------------

def _bond_linear_forms(basis: ModeBasis):
    """Variables and coefficients of r_{j,m} = sum_v c_{v,m} e^{i kappa_v j} z_v.

    qhat^l_k = (xi^l_{-k} - eta^l_k) / (i sqrt2 omega) and r_{j,m} = sum w^l_{k,m} qhat^l_k e^{i kappa j},
    so each slot (l, k) feeds two variables; both carry the phase label k.
    """
    factors, labels, coefs = [], [], []
    for l, k in basis.slots():
        i = basis.index(k)
        a = basis.w[l, i] / (1j * np.sqrt(2) * basis.omega[l, i])
        factors.append((l, basis.wrap(-k), 1))
        labels.append(k)
        coefs.append(a)
        factors.append((l, k, -1))
        labels.append(k)
        coefs.append(-a)
    return factors, np.array(labels), np.array(coefs)


def _power_sum(basis: ModeBasis, s: int, prefactor: float) -> SparsePoly:
    """prefactor * sum_j sum_m r_{j,m}^s as a degree-s polynomial."""
    N = basis.N
    if prefactor == 0.0:
        return SparsePoly.zero(s, N)
    factors, labels, coefs = _bond_linear_forms(basis)
    terms = {}
    fact_s = math.factorial(s)
    for combo in combinations_with_replacement(range(len(factors)), s):
        if int(labels[list(combo)].sum()) % N:
            continue
        mult = np.bincount(combo)
        weight = fact_s / math.prod(math.factorial(int(c)) for c in mult if c)
        c = N * weight * (np.prod(coefs[list(combo), 0]) + np.prod(coefs[list(combo), 1]))
        if c != 0:
            terms[canonical(factors[v] for v in combo)] = prefactor * c
    return SparsePoly(s, N, terms)


def build_H1(basis: ModeBasis) -> SparsePoly:
    p = basis.params
    return _power_sum(basis, 3, 0.5 * p.K * p.A)


def build_H2(basis: ModeBasis) -> SparsePoly:
    p = basis.params
    return _power_sum(basis, 4, 0.5 * p.K * p.B)


# -- diagonal operators and projections ---------------------------------------

def l0_eigenvalue(key, basis: ModeBasis) -> complex:
    om = basis.omega
    return -1j * sum(s * om[l, basis.index(k)] for l, k, s in key)


def lomega_eigenvalue(key, basis: ModeBasis) -> complex:
    return -1j * basis.Omega * optical_charge(key)


def theta_eigenvalue(key, basis: ModeBasis) -> complex:
    om = basis.omega
    tot = 0.0
    for l, k, s in key:
        w = om[l, basis.index(k)]
        tot += s * (w - basis.Omega if l == OPTICAL else w)
    return -1j * tot


def l0_apply(f: SparsePoly, basis: ModeBasis) -> SparsePoly:
    return f.map_coefficients(lambda key: l0_eigenvalue(key, basis))


def lomega_apply(f: SparsePoly, basis: ModeBasis) -> SparsePoly:
    return f.map_coefficients(lambda key: lomega_eigenvalue(key, basis))


def project_kernel(f: SparsePoly) -> SparsePoly:
    return f.filter(lambda key: optical_charge(key) == 0)


def project_range(f: SparsePoly) -> SparsePoly:
    return f.filter(lambda key: optical_charge(key) != 0)


def shift_ratio(key, basis: ModeBasis) -> float:
    """|eigenvalue of K = L_Omega^{-1} L_Theta0| on a range monomial."""
    return abs(theta_eigenvalue(key, basis)) / (basis.Omega * abs(optical_charge(key)))


# -- homological equation -------------------------------------------------------

@dataclass
class HomologicalSolution:
    z: SparsePoly
    chi: SparsePoly
    min_divisor: float          # min |L0 eigenvalue| / Omega over range keys
    max_shift_ratio: float      # max |K eigenvalue| over range keys
    neumann_iterations: int | None = None
    neumann_gap: float | None = None   # plus_norm(chi_direct - chi_neumann)


def _lomega_inverse(f: SparsePoly, basis: ModeBasis) -> SparsePoly:
    return f.map_coefficients(lambda key: 1.0 / lomega_eigenvalue(key, basis))


def neumann_chi(psi_range: SparsePoly, basis: ModeBasis, Theta0: SparsePoly,
                max_iter: int = NEUMANN_MAX_ITER, rel_tol: float = NEUMANN_REL_TOL):
    """chi = sum_m (-K)^m L_Omega^{-1} psi with K = L_Omega^{-1} L_Theta0.

    L_Theta0 is applied as a genuine bracket with Theta0, not by eigenvalue
    lookup, so this path shares nothing with the direct division.
    """
    term = _lomega_inverse(psi_range, basis)
    chi = term
    for it in range(1, max_iter + 1):
        term = _lomega_inverse(poisson_bracket(Theta0, term, basis), basis) * -1.0
        chi = chi + term
        if plus_norm(term) <= rel_tol * max(plus_norm(chi), 1e-300):
            return chi, it
    raise NeumannDivergence(f"Neumann series did not converge in {max_iter} iterations "
                            f"(degree {psi_range.degree})")


def solve_homological(psi: SparsePoly, basis: ModeBasis, order_guard: int | None = None,
                      strict_guard: bool = False, Theta0: SparsePoly | None = None,
                      neumann: bool = True) -> HomologicalSolution:
    """Split psi = l0(chi) + z with z = Pi_N psi, chi = l0^{-1} Pi_R psi.

    ``order_guard`` is the perturbative order s of psi; it must satisfy
    s * sqrt(m2/m1) <= 1/2.  Per key, the default guard requires the
    resonant-shift eigenvalue to be a contraction (|K| < 1) so the Neumann
    series converges; ``strict_guard`` instead demands |L0 eigenvalue| >= Omega/2.
    """
    p = basis.params
    if order_guard is not None and order_guard * math.sqrt(p.m2 / p.m1) > 0.5 + 1e-12:
        raise HomologicalGuardError(
            f"order {order_guard} exceeds the resonance guard s*sqrt(m2/m1) <= 1/2 "
            f"(mass ratio {p.mass_ratio():g})")
    z = project_kernel(psi)
    rng = project_range(psi)
    min_div, max_ratio = math.inf, 0.0
    chi_terms = {}
    for key, c in rng.terms.items():
        eig = l0_eigenvalue(key, basis)
        ratio = shift_ratio(key, basis)
        min_div = min(min_div, abs(eig) / basis.Omega)
        max_ratio = max(max_ratio, ratio)
        if strict_guard and abs(eig) < 0.5 * basis.Omega:
            raise HomologicalGuardError(
                f"small divisor |{eig:.4g}| < Omega/2 on key {_fmt_key(key)}")
        if not strict_guard and ratio >= 1.0:
            raise HomologicalGuardError(
                f"resonant shift ratio {ratio:.4g} >= 1 on key {_fmt_key(key)}")
        chi_terms[key] = c / eig
    chi = SparsePoly(psi.degree, psi.N, chi_terms)
    sol = HomologicalSolution(z, chi, min_div, max_ratio)
    if neumann and not rng.is_zero():
        if Theta0 is None:
            Theta0 = build_H0_Phi0_HOmega_Theta0(basis)[3]
        chi_n, iters = neumann_chi(rng, basis, Theta0)
        sol.neumann_iterations = iters
        sol.neumann_gap = plus_norm(chi - chi_n) if not (chi - chi_n).is_zero() else 0.0
    return sol


def _fmt_key(key) -> str:
    names = []
    for l, k, s in key:
        names.append(f"{'xi' if s > 0 else 'eta'}{'+' if l == OPTICAL else '-'}[{k}]")
    return "*".join(names)


# -- Lie transform ----------------------------------------------------------------

def lie_derivative(chi: SparsePoly, f: SparsePoly, basis: ModeBasis) -> SparsePoly:
    """L_chi f = {f, chi}."""
    return poisson_bracket(f, chi, basis)


class LieSeries:
    """Lazily extended components E_m f of T_chi f for one function f."""

    def __init__(self, f: SparsePoly, chis: list, basis: ModeBasis):
        self.basis = basis
        self.chis = chis          # shared list, chis[j-1] = chi_j
        self.terms = [f]

    def __getitem__(self, m: int) -> SparsePoly:
        while len(self.terms) <= m:
            s = len(self.terms)
            if s > len(self.chis):
                raise IndexError(f"E_{s} needs chi_{s}, not yet constructed")
            acc = None
            for j in range(1, s + 1):
                t = lie_derivative(self.chis[j - 1], self.terms[s - j], self.basis) * (j / s)
                acc = t if acc is None else acc + t
            self.terms.append(acc)
        return self.terms[m]


@dataclass
class NormalFormResult:
    order: int
    chi: list
    z: list
    phi: list
    psi: list
    upsilon_s: SparsePoly
    upsilon_s1: SparsePoly
    H: list                    # H0, H1, H2
    diagnostics: dict = field(default_factory=dict)

    def evaluate_phi(self, state, basis: ModeBasis):
        """Value of Phi^(S) = Phi_0 + ... + Phi_S at a (batched) state."""
        return sum(evaluate(f, state, basis) for f in self.phi)

    def evaluate_remainder(self, state, basis: ModeBasis):
        """Value of Upsilon_S + Upsilon_{S+1}, i.e. d/dt Phi^(S) along the flow."""
        return evaluate(self.upsilon_s, state, basis) + evaluate(self.upsilon_s1, state, basis)


def psi_recursive(s: int, H: list, chis: list, z: list, E_of_z: list, basis: ModeBasis):
    """Psi_s = H_s - sum_{l=1}^{s-1} (l/s) (L_{chi_l} H_{s-l} + E_{s-l} Z_l)."""
    N = basis.N
    out = H[s] if s < len(H) else SparsePoly.zero(s + 2, N)
    for l in range(1, s):
        Hsl = H[s - l] if s - l < len(H) else SparsePoly.zero(s - l + 2, N)
        t = lie_derivative(chis[l - 1], Hsl, basis) + E_of_z[l - 1][s - l]
        out = out - t * (l / s)
    return out


def lie_construct(basis: ModeBasis, order: int, strict_guard: bool = False,
                  neumann: bool = True, check_recursion: bool = True) -> NormalFormResult:
    """Build chi_s, Z_s for s = 1..order, Phi_s = E_s Phi0 and the remainders."""
    p = basis.params
    S_max = s_order(p)
    if order < 0 or order > S_max:
        raise ValueError(f"requested order {order} outside 0..{S_max} for mass ratio {p.mass_ratio():g}")
    N = basis.N
    H0, Phi0, _, Theta0 = build_H0_Phi0_HOmega_Theta0(basis)
    H = [H0, build_H1(basis), build_H2(basis)]
    chis, zs, psis = [], [], []
    E_H0 = LieSeries(H0, chis, basis)
    E_Phi0 = LieSeries(Phi0, chis, basis)
    E_z: list = []
    diag = {"order": [], "psi_norm": [], "chi_norm": [], "z_norm": [], "residual": [],
            "min_divisor": [], "max_shift_ratio": [], "neumann_iterations": [],
            "neumann_gap": [], "recursion_gap": [], "terms": []}
    for s in range(1, order + 1):
        try:
            psi = H[s] if s < len(H) else SparsePoly.zero(s + 2, N)
            for l in range(1, s):
                psi = psi - E_z[l - 1][s - l]
            for j in range(1, s):
                psi = psi - lie_derivative(chis[j - 1], E_H0[s - j], basis) * (j / s)
            sol = solve_homological(psi, basis, order_guard=s, strict_guard=strict_guard,
                                    Theta0=Theta0, neumann=neumann)
        except TermBudgetExceeded as exc:
            raise TermBudgetExceeded(f"order {s}: {exc}") from exc
        except HomologicalGuardError as exc:
            raise HomologicalGuardError(f"order {s}: {exc}") from exc
        if check_recursion:
            alt = psi_recursive(s, H, chis, zs, E_z, basis)
            diag["recursion_gap"].append(plus_norm(alt - psi) / max(plus_norm(psi), 1e-300))
        chis.append(sol.chi)
        zs.append(sol.z)
        psis.append(psi)
        E_z.append(LieSeries(sol.z, chis, basis))
        resid = l0_apply(sol.chi, basis) + sol.z - psi
        diag["order"].append(s)
        diag["psi_norm"].append(plus_norm(psi))
        diag["chi_norm"].append(plus_norm(sol.chi))
        diag["z_norm"].append(plus_norm(sol.z))
        diag["residual"].append(plus_norm(resid))
        diag["min_divisor"].append(sol.min_divisor)
        diag["max_shift_ratio"].append(sol.max_shift_ratio)
        diag["neumann_iterations"].append(sol.neumann_iterations)
        diag["neumann_gap"].append(sol.neumann_gap)
        diag["terms"].append(len(sol.chi))
    phi = [E_Phi0[s] for s in range(order + 1)]
    try:
        ups = poisson_bracket(phi[order], H[1], basis)
        if order >= 1:
            ups = ups + poisson_bracket(phi[order - 1], H[2], basis)
        ups1 = poisson_bracket(phi[order], H[2], basis)
    except TermBudgetExceeded as exc:
        raise TermBudgetExceeded(f"remainder at order {order}: {exc}") from exc
    diag["phi_norm"] = [plus_norm(f) for f in phi]
    diag["upsilon_norm"] = [plus_norm(ups), plus_norm(ups1)]
    return NormalFormResult(order, chis, zs, phi, psis, ups, ups1, H, diag)


def poisson_series_order(result: NormalFormResult, m: int, basis: ModeBasis) -> SparsePoly:
    """Order-m part of {Phi^(S), H}: sum over s + s' = m of {Phi_s, H_s'}."""
    out = SparsePoly.zero(m + 2, basis.N)
    for sp, h in enumerate(result.H):
        s = m - sp
        if 0 <= s <= result.order:
            out = out + poisson_bracket(result.phi[s], h, basis)
    return out


def resonant_shift_ratios(basis: ModeBasis, degree: int) -> np.ndarray:
    """K eigenvalue moduli over every momentum-conserving range monomial of a degree."""
    vars_ = [(l, k, s) for l, k in basis.slots() for s in (1, -1)]
    out = []
    for combo in combinations_with_replacement(vars_, degree):
        key = canonical(combo)
        if key_momentum(key, basis.N) or optical_charge(key) == 0:
            continue
        out.append(shift_ratio(key, basis))
    return np.array(out)


def validate_order(params: ChainParams, order: int) -> None:
    if order > s_order(params):
        raise ValueError(f"normal form order {order} exceeds S = {s_order(params)}")


__all__ = [
    "ACOUSTIC", "OPTICAL", "HomologicalGuardError", "HomologicalSolution", "LieSeries",
    "NeumannDivergence", "NormalFormResult", "build_H0_Phi0_HOmega_Theta0", "build_H1",
    "build_H2", "l0_apply", "l0_eigenvalue", "lie_construct", "lie_derivative", "lomega_apply",
    "lomega_eigenvalue", "neumann_chi", "poisson_series_order", "project_kernel",
    "project_range", "psi_recursive", "resonant_shift_ratios", "shift_ratio",
    "solve_homological", "theta_eigenvalue", "validate_order",
]
