"""Preconditioned MINRES for symmetric indefinite systems."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BreakdownError(ArithmeticError):
    """Lanczos recurrence broke down away from a solution."""


@dataclass
class MinresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norms: list = field(default_factory=list)

    @property
    def max_iterations_exceeded(self) -> bool:
        return not self.converged


def _as_apply(op):
    if op is None:
        return lambda v: v.copy()
    if callable(op) and not hasattr(op, "matvec"):
        return op
    return op.matvec


def minres(A, b, M=None, tol=1e-7, maxit=1000, x0=None) -> MinresResult:
    """Solve ``A x = b`` with symmetric ``A`` and SPD preconditioner ``M``.

    ``M`` applies the inverse of the preconditioner. Iteration stops when the
    preconditioned residual norm ``||b - A x||_{M}`` drops below ``tol`` times
    its initial value. ``residual_norms`` lists that norm after each iteration
    (entry 0 is the initial value). If ``maxit`` is reached the last iterate
    is returned with ``converged=False``.
    """
    if maxit < 1:
        raise ValueError("maxit must be >= 1")
    matvec = _as_apply(A)
    psolve = _as_apply(M)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)

    r1 = b - matvec(x) if x0 is not None else b.copy()
    y = psolve(r1)
    beta1 = r1 @ y
    if beta1 < 0:
        raise ValueError("preconditioner is not positive definite")
    beta1 = math.sqrt(beta1)
    history = [beta1]
    if beta1 == 0.0:
        return MinresResult(x, 0, True, history)

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    r2 = r1
    target = tol * beta1
    tiny = np.finfo(float).eps * beta1

    for itn in range(1, maxit + 1):
        v = y / beta
        y = matvec(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = psolve(r2)
        oldb = beta
        beta2 = r2 @ y
        if beta2 < 0:
            raise ValueError("preconditioner is not positive definite")
        beta = math.sqrt(beta2)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = math.hypot(gbar, beta)
        if gamma == 0.0:
            raise BreakdownError("singular tridiagonal factor")
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(phibar)

        if phibar <= target:
            return MinresResult(x, itn, True, history)
        if beta <= tiny:
            # invariant Krylov subspace: x is exact up to round-off
            if phibar <= math.sqrt(tol) * beta1:
                return MinresResult(x, itn, True, history)
            raise BreakdownError(f"Lanczos breakdown at iteration {itn}")
    return MinresResult(x, maxit, False, history)
