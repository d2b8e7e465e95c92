"""Self-referenced convergence study.

Coarse solutions are embedded into the reference space through the chain of
multigrid prolongations, which is exact for nested P2 spaces, so errors are
measured without any interpolation error of their own.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import build_prolongations
from .mesh import build_hierarchy
from .presets import InitialCondition
from .scheme import SchemeParams, run


@dataclass
class ConvergenceResult:
    levels: list
    h: list
    tau: list
    errors: list
    reference_level: int
    final_time: float
    l2_errors: list = field(default_factory=list)

    @property
    def orders(self) -> list:
        """Observed orders between consecutive levels (``log2`` of ratios)."""
        e = np.asarray(self.errors)
        return list(np.log2(e[:-1] / e[1:]))

    @property
    def ratios(self) -> list:
        e = np.asarray(self.errors)
        return list(e[:-1] / e[1:])


def embed(v, prolongations, start_level):
    """Carry a coefficient vector from ``start_level`` up the prolongation chain."""
    for P in prolongations[start_level:]:
        v = P @ v
    return v


def convergence_study(
    ic: InitialCondition,
    eps: float,
    levels=(4, 5, 6),
    reference_level=7,
    tau_per_h=0.07,
    final_time=0.0875,
    mode="ritz",
    progress=None,
    **param_overrides,
) -> ConvergenceResult:
    """H1 errors at ``final_time`` against the finest run, with ``tau = tau_per_h * h``.

    Parameters
    ----------
    ic
        Initial condition (smooth presets are required for ``mode="ritz"``).
    levels
        Mesh levels to measure; all must be below ``reference_level``.
    progress
        Optional ``callback(level, record)`` forwarded to each run.
    """
    levels = sorted(levels)
    if not levels or levels[-1] >= reference_level:
        raise ValueError("levels must lie strictly below the reference level")
    finals = {}
    taus = {}
    for lev in list(levels) + [reference_level]:
        h = 1.0 / 2**lev
        tau = tau_per_h * h
        params = SchemeParams(eps=eps, tau=tau, final_time=final_time, **param_overrides)
        sub = build_hierarchy(lev + 1)
        cb = None if progress is None else (lambda state, rec, lev=lev: progress(lev, rec))
        result = run(params, ic, sub, mode=mode, callback=cb)
        finals[lev] = result.state.phi_curr
        taus[lev] = tau

    disc = result.disc  # the reference run comes last
    prolongations = build_prolongations(disc.spaces)
    ref_space = disc.space
    ref = finals[reference_level]
    errors, l2 = [], []
    for lev in levels:
        diff = embed(finals[lev], prolongations, lev) - ref
        errors.append(ref_space.h1_norm(diff))
        l2.append(ref_space.l2_norm(diff))
    return ConvergenceResult(
        levels=list(levels),
        h=[1.0 / 2**lev for lev in levels],
        tau=[taus[lev] for lev in levels],
        errors=errors,
        reference_level=reference_level,
        final_time=final_time,
        l2_errors=l2,
    )
