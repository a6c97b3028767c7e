"""Exact finite-N normal-form engine on sparse (xi, eta) polynomials."""
from .construct import *  # noqa: F401,F403
from .construct import __all__ as _construct_all
from .poly import (SparsePoly, TermBudgetExceeded, conjugate_key, evaluate, key_momentum,
                   optical_charge, params_hash, plus_norm, poisson_bracket)
from .stats import mc_variance_of_poly, monomial_real_part_variance, wick_moment

__all__ = list(_construct_all) + [
    "SparsePoly", "TermBudgetExceeded", "conjugate_key", "evaluate", "key_momentum",
    "mc_variance_of_poly", "optical_charge", "params_hash", "plus_norm", "poisson_bracket",
    "monomial_real_part_variance", "wick_moment",
]
