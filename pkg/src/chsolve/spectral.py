"""Eigenvalue certification of the block-diagonal preconditioner.

For the simplified saddle matrix ``B`` (Jacobian block replaced by ``6M``)
and the block preconditioner ``P`` built with ``K + c c^t``, the generalized
eigenproblem ``(K + c c^t) v = kappa M v`` splits ``P^{-1} B`` into 2x2 blocks,
one per ``kappa``.  This module evaluates those blocks in closed form,
compares them with a dense eigensolve of the full pencil, and checks the
bounds ``max(sqrt(tau), eps) / 8 <= |lambda| <= 4``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fem import P2Space
from .mesh import build_hierarchy

MAX_DENSE_DOFS = 2000

LOWER_CONSTANT = 1.0 / 8.0
UPPER_CONSTANT = 4.0


class SizeLimitExceeded(ValueError):
    """Raised when a dense eigensolve would be too large."""


def _check_size(n):
    if n > MAX_DENSE_DOFS:
        raise SizeLimitExceeded(f"{n} unknowns exceed the dense limit of {MAX_DENSE_DOFS}")


def augmented_stiffness(space: P2Space) -> np.ndarray:
    c = space.mean_vector
    _check_size(space.n_dof)
    return space.stiffness.toarray() + np.outer(c, c)


def generalized_eigs(K_aug, M):
    """Solve ``K_aug v = kappa M v`` densely.

    Returns
    -------
    kappa : ndarray
        Ascending eigenvalues (all positive for ``K + c c^t``).
    vectors : ndarray
        Columns are M-orthonormal eigenvectors.
    """
    K_aug = K_aug.toarray() if hasattr(K_aug, "toarray") else np.asarray(K_aug, dtype=float)
    M = M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)
    _check_size(K_aug.shape[0])
    return sla.eigh(K_aug, M)


def block_matrix(kappa, tau, eps) -> np.ndarray:
    """The 2x2 matrix that ``P^{-1} B`` reduces to on one eigen-direction."""
    w = 0.5 * np.sqrt(tau) * kappa
    return np.array(
        [
            [w / (w + 1.0), 1.0 / (w + 1.0)],
            [1.0 / (eps**2 * w + 1.0), (-3.0 * np.sqrt(tau) - 3.0 * eps**2 * w) / (eps**2 * w + 1.0)],
        ]
    )


def block_eigenvalues(kappa, tau, eps):
    """Both eigenvalues of :func:`block_matrix`, vectorized over ``kappa``.

    The 2x2 matrix has a negative determinant, so the roots are real and of
    opposite sign; they are returned as ``(lambda_minus, lambda_plus)``.
    """
    kappa = np.asarray(kappa, dtype=float)
    w = 0.5 * np.sqrt(tau) * kappa
    a = w / (w + 1.0)
    b = 1.0 / (w + 1.0)
    c = 1.0 / (eps**2 * w + 1.0)
    d = (-3.0 * np.sqrt(tau) - 3.0 * eps**2 * w) / (eps**2 * w + 1.0)
    half_trace = 0.5 * (a + d)
    det = a * d - b * c
    root = np.sqrt(half_trace**2 - det)
    # avoid cancellation in the smaller root
    big = np.where(half_trace >= 0, half_trace + root, half_trace - root)
    small = det / big
    return np.minimum(big, small), np.maximum(big, small)


def block_determinant(kappa, tau, eps):
    """Closed form of ``|det C|`` with ``omega = sqrt(tau) kappa / 2``."""
    w = 0.5 * np.sqrt(tau) * np.asarray(kappa, dtype=float)
    num = 1.0 + 3.0 * np.sqrt(tau) * w + 3.0 * eps**2 * w**2
    den = 1.0 + (1.0 + eps**2) * w + eps**2 * w**2
    return num / den


def simplified_saddle(K_aug, M, tau, eps) -> np.ndarray:
    """Dense ``B`` with the Jacobian block replaced by ``6 M``."""
    g = 0.5 * np.sqrt(tau)
    return np.block([[g * K_aug, M], [M, -6.0 * g * M - 3.0 * g * eps**2 * K_aug]])


def block_preconditioner_matrix(K, M, tau, eps) -> np.ndarray:
    """Dense ``diag(g K + M, g eps^2 K + M)``; pass ``K + c c^t`` or plain ``K``."""
    g = 0.5 * np.sqrt(tau)
    n = M.shape[0]
    Z = np.zeros((n, n))
    return np.block([[g * K + M, Z], [Z, g * eps**2 * K + M]])


def dense_spectrum(B, P) -> np.ndarray:
    """Eigenvalues of ``P^{-1} B`` for symmetric ``B`` and SPD ``P``."""
    _check_size(B.shape[0] // 2)
    return sla.eigh(B, P, eigvals_only=True)


def max_multiset_distance(a, b) -> float:
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    if a.shape != b.shape:
        return np.inf
    return float(np.max(np.abs(a - b))) if a.size else 0.0


@dataclass
class SpectralReport:
    level: int
    tau: float
    eps: float
    kappa_values: np.ndarray = field(repr=False)
    lambda_values: np.ndarray = field(repr=False)
    min_abs_lambda: float
    max_abs_lambda: float
    bound_lhs: float
    bound_rhs: float
    passed: bool
    dense_mismatch: float = np.nan
    practical_min_abs: float = np.nan
    practical_max_abs: float = np.nan

    @property
    def practical_upper(self) -> float:
        """Measured upper constant for the preconditioner without ``c c^t``."""
        return self.practical_max_abs

    @property
    def practical_lower(self) -> float:
        """Measured lower constant, i.e. ``min |lambda| / max(sqrt(tau), eps)``."""
        return self.practical_min_abs / max(np.sqrt(self.tau), self.eps)


def certify_bounds(level, tau_grid, eps_grid, dense_check=True, space=None):
    """Check the eigenvalue bounds on one mesh level for every (tau, eps).

    The generalized stiffness spectrum is computed once.  With
    ``dense_check`` the full pencils ``(B, P)`` and ``(B, P_*)`` are also
    solved densely; the first is compared against the block reduction and the
    second yields the measured constants of the practical preconditioner.
    """
    if space is None:
        space = P2Space(build_hierarchy(level + 1).finest)
    _check_size(space.n_dof)
    M = space.mass.toarray()
    K = space.stiffness.toarray()
    c = space.mean_vector
    K_aug = K + np.outer(c, c)
    kappa, _ = generalized_eigs(K_aug, M)

    reports = []
    for tau in tau_grid:
        for eps in eps_grid:
            lo, hi = block_eigenvalues(kappa, tau, eps)
            lam = np.sort(np.concatenate([lo, hi]))
            absl = np.abs(lam)
            lhs = LOWER_CONSTANT * max(np.sqrt(tau), eps)
            rep = SpectralReport(
                level=level,
                tau=float(tau),
                eps=float(eps),
                kappa_values=kappa,
                lambda_values=lam,
                min_abs_lambda=float(absl.min()),
                max_abs_lambda=float(absl.max()),
                bound_lhs=lhs,
                bound_rhs=UPPER_CONSTANT,
                passed=bool(absl.min() >= lhs and absl.max() <= UPPER_CONSTANT),
            )
            if dense_check:
                B = simplified_saddle(K_aug, M, tau, eps)
                full = dense_spectrum(B, block_preconditioner_matrix(K_aug, M, tau, eps))
                rep.dense_mismatch = max_multiset_distance(full, lam)
                practical = np.abs(dense_spectrum(B, block_preconditioner_matrix(K, M, tau, eps)))
                rep.practical_min_abs = float(practical.min())
                rep.practical_max_abs = float(practical.max())
            reports.append(rep)
    return reports


CSV_FIELDS = ("level", "tau", "eps", "min_abs_lambda", "max_abs_lambda", "lhs_bound", "passed")


def report_rows(reports):
    for r in reports:
        yield (
            r.level,
            repr(float(r.tau)),
            repr(float(r.eps)),
            f"{r.min_abs_lambda:.17g}",
            f"{r.max_abs_lambda:.17g}",
            f"{r.bound_lhs:.17g}",
            "true" if r.passed else "false",
        )


def write_report_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        w.writerows(report_rows(reports))


def read_report_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["level"] = int(row["level"])
        for k in ("tau", "eps", "min_abs_lambda", "max_abs_lambda", "lhs_bound"):
            row[k] = float(row[k])
        row["passed"] = row["passed"] == "true"
    return rows
