"""Triangle quadrature."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle.

    ``points`` holds barycentric triples, ``weights`` sum to one so that
    ``area * weights @ f(points)`` integrates ``f`` over a physical triangle.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def collapsed_gauss_rule(n: int = 5) -> QuadratureRule:
    """Conical product of Gauss-Jacobi and Gauss-Legendre rules.

    With ``n`` points per direction the rule has ``n**2`` points and is exact
    for polynomials of total degree ``2n - 1``.
    """
    xs, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (1.0 + xs)
    ws = 0.25 * ws
    xt, wt = roots_legendre(n)
    t = 0.5 * (1.0 + xt)
    wt = 0.5 * wt
    S, Tt = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = ((1.0 - S) * Tt).ravel()
    w = np.outer(ws, wt).ravel()
    w = w / w.sum()
    points = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(points, w, 2 * n - 1)


def default_rule() -> QuadratureRule:
    """Degree-9 rule used for every assembly and energy integral."""
    return collapsed_gauss_rule(5)
