"""Block-diagonal preconditioners for the scaled Newton system."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .multigrid import MGHierarchy, build_prolongations


def block_coefficients(tau, eps):
    """Stiffness weights of the two diagonal blocks ``gamma K + M``."""
    g = 0.5 * np.sqrt(tau)
    return g, g * eps**2


class BlockPreconditioner:
    """Inverse of ``diag(g1 K + M, g2 K + M)`` approximated by V-cycles.

    Each application uses ``cycles_per_application`` V(2,2)-cycles started
    from zero, so it is a fixed symmetric positive definite linear map.
    """

    def __init__(self, block1: MGHierarchy, block2: MGHierarchy, cycles_per_application=2):
        self.block1 = block1
        self.block2 = block2
        self.cycles_per_application = int(cycles_per_application)
        self.n = block1.matrices[-1].shape[0]

    @classmethod
    def for_spaces(cls, spaces, tau, eps, cycles_per_application=2):
        prolongations = build_prolongations(spaces)
        g1, g2 = block_coefficients(tau, eps)
        return cls(
            MGHierarchy(spaces, g1, prolongations),
            MGHierarchy(spaces, g2, prolongations),
            cycles_per_application,
        )

    def matvec(self, r):
        n = self.n
        out = np.empty_like(r, dtype=float)
        k = self.cycles_per_application
        out[:n] = self.block1.apply(r[:n], k)
        out[n:] = self.block2.apply(r[n:], k)
        return out

    __call__ = matvec


def apply_preconditioner(P, r):
    return P.matvec(np.asarray(r, dtype=float))


class ExactBlockPreconditioner:
    """Same blocks as ``BlockPreconditioner`` but inverted by sparse LU."""

    def __init__(self, space, tau, eps, augmented=False):
        g1, g2 = block_coefficients(tau, eps)
        K, M = space.stiffness, space.mass
        self.n = space.n_dof
        if augmented:
            # ccᵗ would destroy sparsity; use the bordered form instead
            c = sp.csr_matrix(space.mean_vector[:, None])
            self._solvers = [
                _bordered_lu(g * K + M, g, c) for g in (g1, g2)
            ]
        else:
            self._solvers = [spla.splu((g * K + M).tocsc()).solve for g in (g1, g2)]

    def matvec(self, r):
        n = self.n
        return np.concatenate([self._solvers[0](r[:n]), self._solvers[1](r[n:])])

    __call__ = matvec


def _bordered_lu(A, g, c):
    # (A + g c c^t) x = r  <=>  [[A, c], [c^t, -1/g]] [x; s] = [r; 0]
    B = sp.bmat([[A, c], [c.T, sp.csr_matrix([[-1.0 / g]])]], format="csc")
    lu = spla.splu(B)

    def solve(r):
        return lu.solve(np.append(r, 0.0))[:-1]

    return solve
