"""Geometric multigrid for ``gamma K + M`` on nested P2 spaces."""
from __future__ import annotations

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..fem import P2Space, p2_basis

# Barycentric coordinates (w.r.t. the parent) of the vertices of each child,
# matching the child order produced by ``mesh.refine_uniform``.
_A, _B, _C = np.eye(3)
_AB, _BC, _CA = (_A + _B) / 2, (_B + _C) / 2, (_C + _A) / 2
_CHILD_VERTICES = np.array(
    [[_A, _AB, _CA], [_AB, _B, _BC], [_CA, _BC, _C], [_AB, _BC, _CA]]
)


def _child_node_table():
    """``table[k]``: coarse shape functions at the 6 nodes of child ``k``."""
    out = np.empty((4, 6, 6))
    for k, (p0, p1, p2) in enumerate(_CHILD_VERTICES):
        nodes = np.array([p0, p1, p2, (p0 + p1) / 2, (p1 + p2) / 2, (p2 + p0) / 2])
        out[k] = p2_basis(nodes)
    return out


_CHILD_TABLE = _child_node_table()


def build_prolongation(coarse: P2Space, fine: P2Space, child_map=None) -> sp.csr_matrix:
    """Embedding of the coarse P2 space into the fine one (coarse -> fine)."""
    parent = fine.mesh.parent if child_map is None else np.asarray(child_map)
    if (
        parent is None
        or fine.mesh.level != coarse.mesh.level + 1
        or len(parent) != 4 * coarse.mesh.n_triangles
    ):
        raise ValueError("fine mesh is not a uniform refinement of the coarse mesh")
    child = np.arange(len(parent)) % 4
    dofs = fine.cell_dofs.ravel()
    _, first = np.unique(dofs, return_index=True)
    tri, loc = np.divmod(first, 6)
    vals = _CHILD_TABLE[child[tri], loc]  # (n_fine, 6)
    cols = coarse.cell_dofs[parent[tri]]
    rows = np.repeat(dofs[first], 6)
    keep = vals.ravel() != 0.0
    P = sp.csr_matrix(
        (vals.ravel()[keep], (rows[keep], cols.ravel()[keep])),
        shape=(fine.n_dof, coarse.n_dof),
    )
    P.sort_indices()
    if not np.array_equal(P @ coarse.nodes, fine.nodes):
        raise ValueError("fine mesh is not a uniform refinement of the coarse mesh")
    return P


@numba.njit(cache=True)
def gauss_seidel_forward(indptr, indices, data, diag, x, b, sweeps):
    """Forward sweeps; ``(indptr, indices, data)`` holds the off-diagonal part."""
    n = x.shape[0]
    for _ in range(sweeps):
        for i in range(n):
            acc = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[indices[jj]]
            x[i] = acc / diag[i]


@numba.njit(cache=True)
def gauss_seidel_backward(indptr, indices, data, diag, x, b, sweeps):
    n = x.shape[0]
    for _ in range(sweeps):
        for i in range(n - 1, -1, -1):
            acc = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[indices[jj]]
            x[i] = acc / diag[i]


def split_diagonal(A):
    """Return ``(offdiag_csr, diag)`` with the diagonal removed from the pattern."""
    A = sp.csr_matrix(A)
    diag = A.diagonal().astype(float)
    if np.any(diag == 0.0):
        raise ValueError("Gauss-Seidel needs a nonzero diagonal")
    off = sp.csr_matrix(A - sp.diags(diag))
    off.eliminate_zeros()
    off.sort_indices()
    return off, diag


def gs_sweep(A, x, b, sweeps=1, backward=False):
    """In-place Gauss-Seidel sweeps in natural (or reversed) DOF order.

    ``A`` is a sparse matrix or a pair from ``split_diagonal``.
    """
    off, diag = A if isinstance(A, tuple) else split_diagonal(A)
    fn = gauss_seidel_backward if backward else gauss_seidel_forward
    fn(off.indptr, off.indices, off.data, diag, x, np.ascontiguousarray(b, dtype=float), sweeps)
    return x


class MGHierarchy:
    """V(pre, post)-cycle for ``gamma K_l + M_l`` on a list of nested spaces.

    Level matrices are assembled on every level; the coarsest level is
    solved with a dense Cholesky factorization.
    """

    def __init__(self, spaces, gamma, prolongations=None, pre=2, post=2):
        self.spaces = list(spaces)
        self.gamma = float(gamma)
        self.pre, self.post = pre, post
        if prolongations is None:
            prolongations = build_prolongations(self.spaces)
        self.prolongations = [None] + list(prolongations)
        self.restrictions = [None] + [P.T.tocsr() for P in prolongations]
        self.matrices = []
        for s in self.spaces:
            A = (self.gamma * s.stiffness + s.mass).tocsr()
            A.sort_indices()
            self.matrices.append(A)
        self.splits = [split_diagonal(A) for A in self.matrices]
        self._coarse = sla.cho_factor(self.matrices[0].toarray())

    @property
    def top(self) -> int:
        return len(self.spaces) - 1

    def vcycle(self, level, rhs, x0=None):
        return vcycle(self, level, rhs, x0)

    def apply(self, rhs, cycles=1):
        """Approximate ``A^{-1} rhs`` with ``cycles`` V-cycles from zero."""
        x = vcycle(self, self.top, rhs, None)
        for _ in range(cycles - 1):
            x = vcycle(self, self.top, rhs, x)
        return x


def build_prolongations(spaces):
    return [build_prolongation(c, f) for c, f in zip(spaces[:-1], spaces[1:])]


def vcycle(hier: MGHierarchy, level: int, rhs, x0=None):
    """One V-cycle on ``level``: forward GS pre-smoothing, coarse correction,
    backward GS post-smoothing. The exact solve is used on level 0."""
    if not 0 <= level < len(hier.matrices):
        raise IndexError(f"level {level} outside hierarchy")
    rhs = np.asarray(rhs, dtype=float)
    if level == 0:
        return sla.cho_solve(hier._coarse, rhs)
    A = hier.matrices[level]
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    gs_sweep(hier.splits[level], x, rhs, hier.pre)
    r = rhs - A @ x
    e = vcycle(hier, level - 1, hier.restrictions[level] @ r, None)
    x += hier.prolongations[level] @ e
    gs_sweep(hier.splits[level], x, rhs, hier.post, backward=True)
    return x
