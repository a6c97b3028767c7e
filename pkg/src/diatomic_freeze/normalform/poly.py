"""Sparse homogeneous polynomials in the diagonal coordinates (xi, eta).

A monomial key is a sorted tuple of factors ``(l, k, sigma)``: ``l`` is the
branch index (0 optical, 1 acoustic), ``k`` the wave number and ``sigma``
+1 for a xi factor, -1 for an eta factor.  Repeated factors encode powers.
Each slot of a monomial carries its own (k, l) pair.

Stored coefficients are the full monomial coefficients, i.e. the
``N**(-(s-2)/2)`` prefactor of the P_s class is folded in; :meth:`plus_norm`
multiplies it back.
"""
from __future__ import annotations

import hashlib
from collections import defaultdict
from itertools import groupby
from typing import Iterable, Mapping

import numpy as np

from ..modes import OPTICAL, ModeBasis, state_to_xieta

PRUNE_REL = 1e-15
TERM_BUDGET = 10_000_000

Factor = tuple  # (l, k, sigma)
Key = tuple     # tuple[Factor, ...], sorted


class TermBudgetExceeded(RuntimeError):
    pass


def canonical(factors: Iterable[Factor]) -> Key:
    return tuple(sorted(factors))


def conjugate_key(key: Key) -> Key:
    """Key of the complex-conjugate monomial (xi <-> eta on every slot)."""
    return tuple(sorted((l, k, -s) for l, k, s in key))


def key_momentum(key: Key, N: int) -> int:
    return sum(s * k for _, k, s in key) % N


def optical_charge(key: Key) -> int:
    """Integer sum_j sigma_j delta_{l_j,+}; L_Omega multiplies the key by -i Omega times this."""
    return sum(s for l, _, s in key if l == OPTICAL)


class SparsePoly:
    """Homogeneous polynomial of fixed degree; treat instances as immutable."""

    __slots__ = ("degree", "N", "terms", "_compiled")

    def __init__(self, degree: int, N: int, terms: Mapping[Key, complex] | None = None,
                 prune: bool = True, scale: float = 0.0):
        self.degree = int(degree)
        self.N = int(N)
        terms = dict(terms or {})
        for key in terms:
            if len(key) != self.degree:
                raise ValueError(f"key {key} has length {len(key)}, expected degree {self.degree}")
        if prune and terms:
            # scale: size of the inputs that produced these terms, so that
            # complete cancellations are not mistaken for small coefficients
            cut = PRUNE_REL * max(scale, max(abs(c) for c in terms.values()))
            terms = {k: complex(c) for k, c in terms.items() if abs(c) > cut}
        if len(terms) > TERM_BUDGET:
            raise TermBudgetExceeded(f"degree {degree} polynomial has {len(terms)} terms")
        self.terms = terms
        self._compiled = None

    # -- basic algebra ---------------------------------------------------
    @classmethod
    def zero(cls, degree: int, N: int) -> "SparsePoly":
        return cls(degree, N, {})

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"SparsePoly(degree={self.degree}, N={self.N}, terms={len(self.terms)})"

    def is_zero(self) -> bool:
        return not self.terms

    def _check(self, other: "SparsePoly"):
        if other.degree != self.degree or other.N != self.N:
            raise ValueError(f"degree/N mismatch: ({self.degree},{self.N}) vs ({other.degree},{other.N})")

    def __add__(self, other: "SparsePoly") -> "SparsePoly":
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return SparsePoly(self.degree, self.N, out, scale=max(self.max_abs(), other.max_abs()))

    def __sub__(self, other: "SparsePoly") -> "SparsePoly":
        return self + other * -1.0

    def __neg__(self) -> "SparsePoly":
        return self * -1.0

    def __mul__(self, scalar: complex) -> "SparsePoly":
        return SparsePoly(self.degree, self.N, {k: c * scalar for k, c in self.terms.items()},
                          prune=False)

    __rmul__ = __mul__

    def map_coefficients(self, fn) -> "SparsePoly":
        """New polynomial with ``c -> fn(key) * c`` on every term."""
        return SparsePoly(self.degree, self.N, {k: fn(k) * c for k, c in self.terms.items()})

    def filter(self, pred) -> "SparsePoly":
        return SparsePoly(self.degree, self.N, {k: c for k, c in self.terms.items() if pred(k)},
                          prune=False)

    def max_abs(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def plus_norm(self) -> float:
        return plus_norm(self)

    # -- structural checks -------------------------------------------------
    def momentum_ok(self) -> bool:
        return all(key_momentum(k, self.N) == 0 for k in self.terms)

    def reality_defect(self) -> float:
        """max |c(conj key) - conj c(key)|, relative to the largest coefficient."""
        scale = self.max_abs()
        if scale == 0.0:
            return 0.0
        worst = 0.0
        for k, c in self.terms.items():
            worst = max(worst, abs(self.terms.get(conjugate_key(k), 0.0) - np.conj(c)))
        return worst / scale

    def is_real(self, tol: float = 1e-12) -> bool:
        return self.reality_defect() <= tol

    # -- numerics ------------------------------------------------------------
    def _compile(self):
        if self._compiled is None:
            keys = list(self.terms)
            idx = np.empty((len(keys), self.degree), dtype=np.intp)
            for t, key in enumerate(keys):
                for j, (l, k, s) in enumerate(key):
                    idx[t, j] = _var_position(l, k, s, self.N)
            coef = np.array([self.terms[k] for k in keys], dtype=complex)
            self._compiled = (idx, coef)
        return self._compiled

    def evaluate_xieta(self, xi: np.ndarray, eta: np.ndarray, chunk: int = 2_000_000):
        """Value and absolute-magnitude scale at (xi, eta) arrays of shape ``(..., 2, N)``."""
        idx, coef = self._compile()
        z = np.stack([np.nan_to_num(xi), np.nan_to_num(eta)], axis=-3)  # (..., 2, 2, N)
        batch_shape = z.shape[:-3]
        zf = z.reshape((-1, 4 * self.N))
        value = np.zeros(zf.shape[0], dtype=complex)
        scale = np.zeros(zf.shape[0])
        if len(coef) == 0:
            return value.reshape(batch_shape), scale.reshape(batch_shape)
        step = max(1, chunk // max(1, len(coef) * self.degree))
        for a in range(0, zf.shape[0], step):
            vals = zf[a:a + step][:, idx]            # (b, T, s)
            mono = np.prod(vals, axis=-1) if self.degree else np.ones(vals.shape[:2])
            value[a:a + step] = mono @ coef
            scale[a:a + step] = np.abs(mono) @ np.abs(coef)
        return value.reshape(batch_shape), scale.reshape(batch_shape)

    # -- serialisation -----------------------------------------------------
    def dumps(self, params_hash: str = "") -> str:
        lines = ["# sparsepoly v1", f"# degree {self.degree}", f"# N {self.N}",
                 f"# params {params_hash}"]
        for key in sorted(self.terms):
            c = self.terms[key]
            fac = " ".join(f"{s:+d} {'+' if l == OPTICAL else '-'} {k}" for l, k, s in key)
            lines.append(f"{fac} ; {c.real!r} {c.imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SparsePoly":
        header, terms = {}, {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split(None, 1)
                if len(parts) == 2:
                    header[parts[0]] = parts[1].strip()
                continue
            lhs, rhs = line.split(";")
            tok = lhs.split()
            if len(tok) % 3:
                raise ValueError(f"malformed term line: {line!r}")
            key = tuple((0 if tok[i + 1] == "+" else 1, int(tok[i + 2]), int(tok[i]))
                        for i in range(0, len(tok), 3))
            re_, im_ = rhs.split()
            terms[canonical(key)] = complex(float(re_), float(im_))
        return cls(int(header["degree"]), int(header["N"]), terms, prune=False)


def _var_position(l: int, k: int, s: int, N: int) -> int:
    # layout of the stacked (sigma, branch, k-slot) array built in evaluate_xieta
    kmin = -(N // 2) + 1 if N % 2 == 0 else -(N // 2)
    return ((0 if s > 0 else 1) * 2 + l) * N + (k - kmin) % N


def plus_norm(f: SparsePoly) -> float:
    """N^((s-2)/2) * max |coefficient|."""
    return f.N ** ((f.degree - 2) / 2) * f.max_abs()


def params_hash(params) -> str:
    text = f"N={params.N};m1={params.m1!r};m2={params.m2!r};K={params.K!r};A={params.A!r};B={params.B!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- Poisson bracket -----------------------------------------------------------

def _derivatives(f: SparsePoly) -> dict:
    """factor -> list of (key with one copy of factor removed, multiplicity * coefficient)."""
    out = defaultdict(list)
    for key, c in f.terms.items():
        pos = 0
        for factor, run in groupby(key):
            mult = len(list(run))
            rest = key[:pos] + key[pos + 1:]
            out[factor].append((rest, mult * c))
            pos += mult
    return out


def poisson_bracket(f: SparsePoly, g: SparsePoly, basis: ModeBasis) -> SparsePoly:
    """{f, g} = sum_v i omega_v (df/dxi_v dg/deta_v - df/deta_v dg/dxi_v).

    This is the standard bracket of the (x, p) variables, under which
    {xi_v, eta_v} = i omega_v.
    """
    if f.N != g.N:
        raise ValueError("polynomials live on chains of different N")
    degree = f.degree + g.degree - 2
    if degree < 0:
        raise ValueError("bracket of degree < 0")
    df, dg = _derivatives(f), _derivatives(g)
    acc: dict = defaultdict(complex)
    om = basis.omega
    biggest = 0.0
    for (l, k, s), fa in df.items():
        partner = (l, k, -s)
        gb = dg.get(partner)
        if not gb:
            continue
        w = 1j * om[l, basis.index(k)] * s  # +i w for xi in f / eta in g, -i w for the reverse
        for ra, ca in fa:
            for rb, cb in gb:
                # w * (ca * cb) keeps {f, g} = -{g, f} bit for bit
                t = w * (ca * cb)
                acc[tuple(sorted(ra + rb))] += t
                biggest = max(biggest, abs(t))
    if len(acc) > TERM_BUDGET:
        raise TermBudgetExceeded(f"bracket produced {len(acc)} terms at degree {degree}")
    return SparsePoly(degree, f.N, acc, scale=biggest)


def evaluate(f: SparsePoly, state, basis: ModeBasis, imag_tol: float = 1e-10):
    """Value of f at a (possibly batched) PhasePoint.

    Real-valued polynomials return real numbers after checking that the
    imaginary residue is below ``imag_tol`` times the absolute term sum.
    """
    xi, eta = state_to_xieta(state, basis)
    value, scale = f.evaluate_xieta(xi, eta)
    if f.is_real():
        bad = np.abs(value.imag) > imag_tol * np.maximum(scale, 1e-300)
        if np.any(bad & (scale > 0)):
            worst = float(np.max(np.abs(value.imag)))
            raise ArithmeticError(f"imaginary residue {worst:.3e} on a real polynomial")
        return value.real
    return value
