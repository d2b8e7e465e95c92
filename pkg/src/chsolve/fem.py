"""Quadratic Lagrange elements on triangle meshes.

Global numbering: vertex DOFs ``[0, V)`` followed by edge-midpoint DOFs
``[V, V + E)``. Local numbering on a triangle: its three vertices, then the
midpoints of local edges (0, 1), (1, 2), (2, 0).
"""
from __future__ import annotations

from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .quadrature import QuadratureRule, default_rule

_EDGE_VERTS = ((0, 1), (1, 2), (2, 0))


def p2_basis(lam: np.ndarray) -> np.ndarray:
    """Shape functions at barycentric points, shape ``(q, 6)``."""
    out = np.empty((len(lam), 6))
    for i in range(3):
        out[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
    for k, (i, j) in enumerate(_EDGE_VERTS):
        out[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
    return out


def p2_basis_dlambda(lam: np.ndarray) -> np.ndarray:
    """Derivatives with respect to barycentric coordinates, shape ``(q, 6, 3)``."""
    out = np.zeros((len(lam), 6, 3))
    for i in range(3):
        out[:, i, i] = 4.0 * lam[:, i] - 1.0
    for k, (i, j) in enumerate(_EDGE_VERTS):
        out[:, 3 + k, i] = 4.0 * lam[:, j]
        out[:, 3 + k, j] = 4.0 * lam[:, i]
    return out


def _symmetrize_local(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


class P2Space:
    """Continuous piecewise-quadratic functions on ``mesh``."""

    def __init__(self, mesh: Mesh, rule: QuadratureRule | None = None):
        self.mesh = mesh
        self.rule = rule or default_rule()
        V = mesh.n_vertices
        self.n_dof = V + mesh.n_edges
        self.cell_dofs = np.hstack([mesh.triangles, V + mesh.triangle_edges])
        self.areas = mesh.areas
        self.basis_at_qp = p2_basis(self.rule.points)
        self.dbasis_at_qp = p2_basis_dlambda(self.rule.points)

        # global pattern and scatter map for local 6x6 blocks
        rows = np.repeat(self.cell_dofs, 6, axis=1).ravel()
        cols = np.tile(self.cell_dofs, (1, 6)).ravel()
        pattern = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_dof, self.n_dof)
        )
        pattern.sum_duplicates()
        pattern.sort_indices()
        self._indptr = pattern.indptr
        self._indices = pattern.indices
        flat = rows.astype(np.int64) * self.n_dof + cols
        keys = np.repeat(np.arange(self.n_dof, dtype=np.int64), np.diff(pattern.indptr))
        keys = keys * self.n_dof + pattern.indices
        self._scatter = np.searchsorted(keys, flat)

    def __repr__(self):
        return f"P2Space(level={self.mesh.level}, n_dof={self.n_dof})"

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates of all DOF nodes, shape ``(n_dof, 2)``."""
        return np.vstack([self.mesh.vertices, self.mesh.edge_midpoints])

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """Gradients of barycentric coordinates, shape ``(T, 3, 2)``."""
        p = self.mesh.vertices[self.mesh.triangles]
        # grad lambda_i = (edge opposite i rotated by -90 degrees) / (2 area)
        e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2.0 * self.areas[:, None, None])

    def quadrature_points(self) -> np.ndarray:
        """Physical quadrature points, shape ``(T, q, 2)``."""
        p = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qi,tid->tqd", self.rule.points, p)

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        """Values of the FE function ``v`` at quadrature points, ``(T, q)``."""
        return v[self.cell_dofs] @ self.basis_at_qp.T

    def integrate(self, values_at_qp: np.ndarray) -> float:
        return float(self.areas @ (values_at_qp @ self.rule.weights))

    def load_vector(self, values_at_qp: np.ndarray) -> np.ndarray:
        """Vector with entries ``(g, phi_k)`` for ``g`` given at quadrature points."""
        loc = (values_at_qp * (self.areas[:, None] * self.rule.weights)) @ self.basis_at_qp
        return np.bincount(self.cell_dofs.ravel(), weights=loc.ravel(), minlength=self.n_dof)

    def assemble_local(self, local: np.ndarray) -> sp.csr_matrix:
        """Sum ``(T, 6, 6)`` element matrices into a CSR matrix."""
        data = np.bincount(self._scatter, weights=local.ravel(), minlength=len(self._indices))
        return sp.csr_matrix(
            (data, self._indices.copy(), self._indptr.copy()), shape=(self.n_dof, self.n_dof)
        )

    def weighted_mass(self, weight_at_qp: np.ndarray) -> sp.csr_matrix:
        """Matrix ``(w phi_k, phi_l)`` for a weight given at quadrature points."""
        N = self.basis_at_qp
        outer = (N[:, :, None] * N[:, None, :]).reshape(len(N), 36)
        local = ((weight_at_qp * self.rule.weights) @ outer).reshape(-1, 6, 6)
        local *= self.areas[:, None, None]
        return self.assemble_local(_symmetrize_local(local))

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return assemble_mass(self)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return assemble_stiffness(self)

    @cached_property
    def mean_vector(self) -> np.ndarray:
        return assemble_mean_vector(self)

    @cached_property
    def mass_solver(self):
        return spla.splu(self.mass.tocsc())

    def l2_norm(self, v) -> float:
        return float(np.sqrt(v @ (self.mass @ v)))

    def h1_seminorm(self, v) -> float:
        return float(np.sqrt(max(v @ (self.stiffness @ v), 0.0)))

    def h1_norm(self, v) -> float:
        return float(np.hypot(self.l2_norm(v), self.h1_seminorm(v)))

    def mean(self, v) -> float:
        """Average of ``v`` over the unit square."""
        return float(self.mean_vector @ v)

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.n_dof, float(value))


def _snap_rational(a, max_denominator=1000):
    """Round reference integrals (exact rationals up to quadrature error) to the
    nearest double of the rational they approximate."""
    flat = [float(Fraction(x).limit_denominator(max_denominator)) for x in np.ravel(a)]
    return np.reshape(flat, np.shape(a))


@lru_cache(maxsize=None)
def _reference_integrals():
    rule = default_rule()
    N, dN = p2_basis(rule.points), p2_basis_dlambda(rule.points)
    mass = _snap_rational(np.einsum("q,qk,ql->kl", rule.weights, N, N))
    # S[k, l, i, j] = mean over the triangle of dN_k/dlam_i dN_l/dlam_j
    S = _snap_rational(np.einsum("q,qki,qlj->klij", rule.weights, dN, dN))
    return mass, S


def assemble_mass(space: P2Space) -> sp.csr_matrix:
    """Mass matrix ``M[k, l] = (phi_k, phi_l)``."""
    ref, _ = _reference_integrals()
    local = space.areas[:, None, None] * ref
    return space.assemble_local(local)


def assemble_stiffness(space: P2Space) -> sp.csr_matrix:
    """Stiffness matrix ``K[k, l] = (grad phi_k, grad phi_l)``."""
    _, S = _reference_integrals()
    gl = space.grad_lambda
    G = np.einsum("tid,tjd->tij", gl, gl)
    local = np.einsum("klij,tij->tkl", S, G) * space.areas[:, None, None]
    return space.assemble_local(_symmetrize_local(local))


def assemble_mean_vector(space: P2Space) -> np.ndarray:
    """Vector ``c[k] = (phi_k, 1)``."""
    return space.load_vector(np.ones((space.mesh.n_triangles, len(space.rule.weights))))


def _check_vector(space, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (space.n_dof,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({space.n_dof},)")
    return v


def jacobian_weight(a, b):
    """Derivative of ``4 * chi(a, b)`` with respect to ``a``."""
    return 3.0 * a * a + 2.0 * a * b + b * b


def assemble_J(space: P2Space, phi_curr, phi_prev) -> sp.csr_matrix:
    """Weighted mass ``((3 a^2 + 2 a b + b^2) phi_k, phi_l)``, a = phi_curr, b = phi_prev."""
    a = space.evaluate(_check_vector(space, phi_curr, "phi_curr"))
    b = space.evaluate(_check_vector(space, phi_prev, "phi_prev"))
    return space.weighted_mass(jacobian_weight(a, b))


def interpolate(space: P2Space, f) -> np.ndarray:
    """Nodal interpolant of ``f(x, y)`` (vectorized over arrays)."""
    x = space.nodes
    vals = np.asarray(f(x[:, 0], x[:, 1]), dtype=float)
    return np.broadcast_to(vals, (space.n_dof,)).copy()


def _bordered_solve(space, rhs):
    """Solve ``(K + c c^t) x = rhs`` through the sparse bordered system."""
    K, c = space.stiffness, space.mean_vector
    col = sp.csr_matrix(c[:, None])
    A = sp.bmat([[K, col], [col.T, sp.csr_matrix([[-1.0]])]], format="csc")
    sol = spla.splu(A).solve(np.append(rhs, 0.0))
    return sol[:-1]


def ritz_projection(space: P2Space, f, grad_f) -> np.ndarray:
    """Neumann Ritz projection with matched mean.

    Solves ``a(R f - f, w) = 0`` for all ``w`` and ``(R f - f, 1) = 0``.
    ``f(x, y)`` returns values and ``grad_f(x, y)`` a pair ``(fx, fy)``.
    """
    xq = space.quadrature_points()
    fvals = np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float), xq.shape[:2])
    gx, gy = grad_f(xq[..., 0], xq[..., 1])
    grad = np.stack(np.broadcast_arrays(np.asarray(gx, float), np.asarray(gy, float)), axis=-1)
    if not (np.all(np.isfinite(fvals)) and np.all(np.isfinite(grad))):
        raise FloatingPointError("non-finite values of f or grad f at quadrature points")
    # (grad f, grad phi_k) = sum_i dN_k/dlam_i (grad f . grad lambda_i)
    H = np.einsum("tqd,tid->tqi", grad, space.grad_lambda)
    w = space.rule.weights
    local = np.einsum("q,qki,tqi->tk", w, space.dbasis_at_qp, H) * space.areas[:, None]
    b = np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.n_dof)
    mean_f = space.integrate(fvals)
    return _bordered_solve(space, b + space.mean_vector * mean_f)


def discrete_laplacian(space: P2Space, M, K, v) -> np.ndarray:
    """The FE function ``w`` with ``(w, psi) = -a(v, psi)`` for all ``psi``."""
    v = _check_vector(space, v, "v")
    rhs = -(K @ v)
    if M is space.mass:
        w = space.mass_solver.solve(rhs)
    else:
        w = spla.splu(sp.csc_matrix(M)).solve(rhs)
    res = np.linalg.norm(M @ w - rhs)
    if res > 1e-12 * max(np.linalg.norm(rhs), 1.0):
        raise ArithmeticError(f"mass solve did not converge (residual {res:.3e})")
    return w


def integrate_energy(space: P2Space, phi, eps: float) -> float:
    """Ginzburg-Landau energy ``int (phi^2-1)^2/(4 eps) + eps/2 |grad phi|^2``."""
    phi = _check_vector(space, phi, "phi")
    q = space.evaluate(phi)
    bulk = space.integrate((q * q - 1.0) ** 2) / (4.0 * eps)
    return bulk + 0.5 * eps * float(phi @ (space.stiffness @ phi))


def integrate_modified_energy(space: P2Space, phi, psi, eps: float) -> float:
    """Energy of ``phi`` plus the two-level penalty on ``phi - psi``."""
    d = _check_vector(space, phi, "phi") - _check_vector(space, psi, "psi")
    extra = float(d @ (space.mass @ d)) / (4.0 * eps)
    extra += eps / 8.0 * float(d @ (space.stiffness @ d))
    return integrate_energy(space, phi, eps) + extra
