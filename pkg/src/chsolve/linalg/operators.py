"""Matrix-free symmetric operators built from sparse blocks."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class RankOneAugmented:
    """The operator ``base + vector vector^t``, never formed densely."""

    def __init__(self, base: sp.spmatrix, vector: np.ndarray):
        self.base = sp.csr_matrix(base)
        self.vector = np.asarray(vector, dtype=float)
        if self.base.shape != (len(self.vector),) * 2:
            raise ValueError("base and vector sizes differ")

    @property
    def shape(self):
        return self.base.shape

    def matvec(self, x):
        return self.base @ x + self.vector * (self.vector @ x)

    __matmul__ = matvec

    def toarray(self):
        return self.base.toarray() + np.outer(self.vector, self.vector)


class SaddleOperator:
    r"""Symmetric 2x2 block operator

    .. math::

        \begin{bmatrix} a (K + c c^t) & M \\ M & -j J - k (K + c c^t) \end{bmatrix}

    with ``a = sqrt(tau) / 2``. For a Newton step ``j = sqrt(tau)/2``,
    ``k = 3 sqrt(tau) eps^2 / 2``; the simplified matrix uses ``J = 6 M``.

    With ``project_constants`` the block ``J`` is replaced by ``Q^t J Q`` where
    ``Q v = v - (c^t v) 1`` removes the constant component.  This keeps the
    Jacobian term from coupling the constant mode to the rest, so that for
    residuals orthogonal to ``1`` the solution has zero mean in both
    components.  It is applied as a rank-two update, never formed.
    """

    def __init__(self, tau, eps, K_aug: RankOneAugmented, M, J_block, j_coeff, k_coeff,
                 project_constants=False):
        self.tau = float(tau)
        self.eps = float(eps)
        self.K_aug = K_aug
        self.M = sp.csr_matrix(M)
        self.J_block = sp.csr_matrix(J_block)
        self.j_coeff = float(j_coeff)
        self.k_coeff = float(k_coeff)
        self.a = 0.5 * np.sqrt(self.tau)
        self.n = self.M.shape[0]
        # lower-right sparse part, precombined
        self._lower = -(self.j_coeff * self.J_block + self.k_coeff * self.K_aug.base)
        self.project_constants = bool(project_constants)
        if self.project_constants:
            self._J1 = self.J_block @ np.ones(self.n)
            self._1J1 = float(self._J1.sum())

    @classmethod
    def newton(cls, tau, eps, K_aug, M, J, stiffness_factor=0.75, project_constants=False):
        """Scaled Newton matrix; ``stiffness_factor`` is 3/4 (generic step) or 1/2 (first step)."""
        s = np.sqrt(tau)
        return cls(tau, eps, K_aug, M, J, 0.5 * s, 2.0 * stiffness_factor * s * eps**2,
                   project_constants)

    @classmethod
    def simplified(cls, tau, eps, K_aug, M):
        """The matrix with the Jacobian block replaced by ``6 M``."""
        return cls.newton(tau, eps, K_aug, M, 6.0 * sp.csr_matrix(M))

    @property
    def shape(self):
        return (2 * self.n, 2 * self.n)

    @property
    def second_block_coeffs(self):
        return self.j_coeff, self.k_coeff

    def matvec(self, z):
        n = self.n
        u, p = z[:n], z[n:]
        c = self.K_aug.vector
        out = np.empty(2 * n)
        out[:n] = self.a * (self.K_aug.base @ u + c * (c @ u)) + self.M @ p
        out[n:] = self.M @ u + self._lower @ p - self.k_coeff * c * (c @ p)
        if self.project_constants:
            # J p - c (J1 . p) - J1 (c . p) + c (1^t J 1)(c . p)
            cp, jp = c @ p, self._J1 @ p
            out[n:] += self.j_coeff * (c * (jp - self._1J1 * cp) + self._J1 * cp)
        return out

    __matmul__ = matvec

    def toarray(self):
        Ka = self.K_aug.toarray()
        M = self.M.toarray()
        J = self.J_block.toarray()
        if self.project_constants:
            Q = np.eye(self.n) - np.outer(np.ones(self.n), self.K_aug.vector)
            J = Q.T @ J @ Q
        return np.block([[self.a * Ka, M], [M, -self.j_coeff * J - self.k_coeff * Ka]])
