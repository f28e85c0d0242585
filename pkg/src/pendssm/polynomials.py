"""Multivariate monomial bookkeeping shared by geometry and dynamics fits.

Exponent tuples are ordered graded-lexicographically: ascending total degree,
and within a degree by descending exponent tuple (so for two variables and
degree two the order is (2,0), (1,1), (0,2)).  Serialized models carry the
exponent lists explicitly, so files remain unambiguous regardless of order.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np

__all__ = ["monomial_exponents", "evaluate_monomials", "monomial_count"]


def monomial_exponents(n_vars: int, degrees) -> list:
    """Exponent tuples for all monomials whose total degree is in ``degrees``."""
    if n_vars < 1:
        raise ValueError("n_vars must be >= 1")
    exps = []
    for deg in degrees:
        for combo in combinations_with_replacement(range(n_vars), deg):
            e = [0] * n_vars
            for idx in combo:
                e[idx] += 1
            exps.append(tuple(e))
    return exps


def monomial_count(n_vars: int, degree: int) -> int:
    """Number of distinct monomials of exact total degree ``degree``."""
    from math import comb

    return comb(n_vars + degree - 1, degree)


def evaluate_monomials(x: np.ndarray, exponents) -> np.ndarray:
    """Evaluate monomials at points given columnwise.

    ``x`` has shape ``(n_vars, n_points)``; the result row ``i`` is the
    monomial ``exponents[i]`` evaluated at every column.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_vars, n_pts = x.shape
    max_deg = max((max(e) for e in exponents), default=0)
    # power table: pows[v][p] = x[v] ** p
    pows = [[np.ones(n_pts)] for _ in range(n_vars)]
    for v in range(n_vars):
        for p in range(1, max_deg + 1):
            pows[v].append(pows[v][-1] * x[v])
    out = np.empty((len(exponents), n_pts))
    for i, exp in enumerate(exponents):
        acc = np.ones(n_pts)
        for v, p in enumerate(exp):
            if p:
                acc = acc * pows[v][p]
        out[i] = acc
    return out
