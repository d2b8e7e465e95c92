"""Second-order convex-splitting time stepping with a Newton/MINRES solver.

Each step is solved in the mean-zero variables. The Newton correction is
computed from the unconstrained system on the full space, rescaled so that
its matrix is the symmetric saddle operator preconditioned blockwise by
multigrid.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fem import P2Space, assemble_J, discrete_laplacian, integrate_energy, integrate_modified_energy
from .fem import interpolate, ritz_projection
from .linalg import (
    BlockPreconditioner,
    ExactBlockPreconditioner,
    RankOneAugmented,
    SaddleOperator,
    minres,
)
from .mesh import MeshHierarchy
from .presets import InitialCondition

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NewtonError(SolverError):
    pass


class MinresFailure(SolverError):
    pass


class RunAborted(SolverError):
    """A run stopped early; carries the records produced so far."""

    def __init__(self, message, records, state):
        super().__init__(message)
        self.records = records
        self.state = state


@dataclass(frozen=True)
class SchemeParams:
    eps: float
    tau: float
    final_time: float
    newton_linf_tol: float = 1e-15
    newton_residual_tol: float = 1e-7
    minres_tol: float = 1e-7
    minres_maxit: int = 1000
    max_newton: int = 20
    cycles_per_application: int = 2
    # initial Newton iterate for phi: "previous" (phi^m), "linear" or
    # "quadratic" extrapolation from the stored history
    newton_guess: str = "quadratic"
    # use Q^t J Q (constants removed) in the Jacobian block; see SaddleOperator
    project_constants: bool = True

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.final_time < 0:
            raise ValueError("final_time must be non-negative")
        for name in ("newton_linf_tol", "newton_residual_tol", "minres_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.minres_maxit < 1 or self.max_newton < 1 or self.cycles_per_application < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.newton_guess not in ("previous", "linear", "quadratic"):
            raise ValueError(f"unknown newton_guess {self.newton_guess!r}")

    @property
    def n_steps(self) -> int:
        n = round(self.final_time / self.tau)
        if abs(n * self.tau - self.final_time) > 1e-9 * max(self.final_time, self.tau):
            raise ValueError(
                f"final_time {self.final_time} is not a multiple of tau {self.tau}"
            )
        return int(n)


@dataclass
class SchemeState:
    """Solution history: ``phi_curr`` is phi^m, ``phi_prev`` phi^(m-1).

    ``mu_ring`` and ``mu_mean`` split the latest chemical potential
    (mu^(m-1/2), or mu_h^0 before the first step) into its mean-zero part
    and its mean.
    """

    phi_curr: np.ndarray
    phi_prev: Optional[np.ndarray]
    mu_ring: np.ndarray
    mu_mean: float
    mean_phi0: float
    step_index: int = 0
    phi_prev2: Optional[np.ndarray] = None

    @property
    def mu(self) -> np.ndarray:
        return self.mu_ring + self.mu_mean

    def ring(self, v):
        return v - self.mean_phi0


@dataclass
class StepRecord:
    step_index: int
    time: float
    newton_iterations: int
    minres_iterations: list
    energy: float
    modified_energy: float
    mass: float
    max_abs_phi: float
    wall_seconds: float
    newton_residual: float = 0.0
    # tau * eps * ||grad mu^(m+1/2)||^2
    dissipation: float = 0.0
    # (1/4eps)||phi^(m+1) - 2phi^m + phi^(m-1)||^2 + (eps/8)||grad(...)||^2
    second_difference: float = 0.0
    # right-hand side of the first-step energy inequality (step 1 only)
    initial_energy_bound: float = math.nan

    @property
    def minres_total(self) -> int:
        return int(sum(self.minres_iterations))


class Discretization:
    """Spaces, matrices and preconditioner shared by all steps of a run."""

    def __init__(self, hierarchy: MeshHierarchy, params: SchemeParams, preconditioner="multigrid"):
        self.hierarchy = hierarchy
        self.params = params
        self.spaces = [P2Space(m) for m in hierarchy.levels]
        self.space = self.spaces[-1]
        self.M = self.space.mass
        self.K = self.space.stiffness
        self.c = self.space.mean_vector
        self.K_aug = RankOneAugmented(self.K, self.c)
        if preconditioner == "multigrid":
            self.preconditioner = BlockPreconditioner.for_spaces(
                self.spaces, params.tau, params.eps, params.cycles_per_application
            )
        elif preconditioner == "exact":
            self.preconditioner = ExactBlockPreconditioner(self.space, params.tau, params.eps)
        else:
            raise ValueError(f"unknown preconditioner {preconditioner!r}")

    def project_mean_zero(self, v):
        return v - (self.c @ v)


def scale_factors(tau, eps):
    """``(s_mu, s_phi)`` with ``dmu = s_mu u`` and ``dphi = s_phi p``."""
    s = (4.0 * tau) ** 0.25 * math.sqrt(eps)
    return 1.0 / s, s


def to_scaled(dmu, dphi, tau, eps):
    s_mu, s_phi = scale_factors(tau, eps)
    return dmu / s_mu, dphi / s_phi


def from_scaled(u, p, tau, eps):
    s_mu, s_phi = scale_factors(tau, eps)
    return s_mu * u, s_phi * p


def chi(a, b):
    """Secant nonlinearity ``(a^2 + b^2)(a + b) / 4``."""
    return 0.25 * (a + b) * (a * a + b * b)


@dataclass
class StepProblem:
    """Data fixed during the Newton iteration of one time step.

    The residuals are, for trial functions ``nu, psi``::

        F(nu)  = tau eps a(mu, nu) + (phi - phi_m, nu)
        G(psi) = (mu, psi) - [ (chi(phi, phi_m), psi) / eps - explicit(psi)
                               + eps * stiffness_factor * a(phi, psi) ]
    """

    phi_m: np.ndarray  # full phi^m
    phi_ring_m: np.ndarray
    explicit: np.ndarray
    stiffness_factor: float


@dataclass
class NewtonSystem:
    f: np.ndarray
    g: np.ndarray
    J: object
    operator: SaddleOperator
    rhs: np.ndarray

    @property
    def residual_norm(self) -> float:
        return float(math.hypot(np.linalg.norm(self.f), np.linalg.norm(self.g)))


@dataclass
class NewtonResult:
    phi_ring: np.ndarray
    mu_ring: np.ndarray
    iterations: int
    minres_counts: list
    residual_norm: float
    increments: list = field(default_factory=list)


def newton_residual(disc: Discretization, prob: StepProblem, phi_ring, mu_ring, mean_phi0):
    """Residual vectors against the nodal basis, with constants annihilated."""
    p = disc.params
    space = disc.space
    a = space.evaluate(phi_ring + mean_phi0)
    b = space.evaluate(prob.phi_m)
    chivec = space.load_vector(chi(a, b))
    f = p.tau * p.eps * (disc.K @ mu_ring) + disc.M @ (phi_ring - prob.phi_ring_m)
    g = disc.M @ mu_ring - (
        chivec / p.eps - prob.explicit + p.eps * prob.stiffness_factor * (disc.K @ phi_ring)
    )
    # F~(phi_k) = F(phi_k) - (phi_k, 1) F(1) and F(1) = sum_k F(phi_k)
    f -= disc.c * f.sum()
    g -= disc.c * g.sum()
    return f, g


def assemble_newton_system(disc, prob, phi_ring, mu_ring, mean_phi0) -> NewtonSystem:
    p = disc.params
    f, g = newton_residual(disc, prob, phi_ring, mu_ring, mean_phi0)
    J = assemble_J(disc.space, phi_ring + mean_phi0, prob.phi_m)
    op = SaddleOperator.newton(
        p.tau, p.eps, disc.K_aug, disc.M, J, prob.stiffness_factor, p.project_constants
    )
    s_mu, s_phi = scale_factors(p.tau, p.eps)
    return NewtonSystem(f, g, J, op, np.concatenate([s_mu * f, s_phi * g]))


def newton_solve(phi_guess, mu_guess, prob: StepProblem, disc: Discretization, mean_phi0) -> NewtonResult:
    """Newton iteration for one step in mean-zero variables.

    Stops when the max-norm of the phi increment is at most
    ``newton_linf_tol`` or the Euclidean residual norm is at most
    ``newton_residual_tol``.
    """
    p = disc.params
    phi = disc.project_mean_zero(np.array(phi_guess, dtype=float))
    mu = disc.project_mean_zero(np.array(mu_guess, dtype=float))
    n = disc.space.n_dof
    counts, increments = [], []
    system = assemble_newton_system(disc, prob, phi, mu, mean_phi0)
    rnorm = system.residual_norm
    while rnorm > p.newton_residual_tol:
        if len(counts) == p.max_newton:
            raise NewtonError(
                f"Newton did not converge in {p.max_newton} iterations (residual {rnorm:.3e})"
            )
        sol = minres(
            system.operator, system.rhs, disc.preconditioner, p.minres_tol, p.minres_maxit
        )
        if not sol.converged:
            raise MinresFailure(f"MINRES did not converge in {p.minres_maxit} iterations")
        counts.append(sol.iterations)
        dmu, dphi = from_scaled(sol.x[:n], sol.x[n:], p.tau, p.eps)
        mu = disc.project_mean_zero(mu - dmu)
        phi = disc.project_mean_zero(phi - dphi)
        step = float(np.abs(dphi).max())
        increments.append(step)
        system = assemble_newton_system(disc, prob, phi, mu, mean_phi0)
        rnorm = system.residual_norm
        if step <= p.newton_linf_tol:
            break
    return NewtonResult(phi, mu, len(counts), counts, rnorm, increments)


def recover_mu_mean(phi_ring_next, phi_ring_curr, mean_phi0, space: P2Space, eps) -> float:
    """Mean of mu^(m+1/2) from the psi = 1 test of the chemical potential equation."""
    a = space.evaluate(phi_ring_next + mean_phi0)
    b = space.evaluate(phi_ring_curr + mean_phi0)
    return (space.integrate(chi(a, b)) - mean_phi0) / eps


def initialize_state(space: P2Space, ic: InitialCondition, params: SchemeParams, mode="interpolate"):
    """Discrete initial data ``(phi_h^0, mu_h^0)``.

    ``interpolate``: nodal interpolant of phi0 and the discrete chemical
    potential ``(mu, psi) = ((phi^3 - phi)/eps, psi) + eps a(phi, psi)``.
    ``ritz``: Ritz projections of phi0 and of
    ``mu0 = (phi0^3 - phi0)/eps - eps Lap phi0``.
    """
    eps = params.eps
    if mode == "interpolate":
        phi0 = interpolate(space, ic.value)
        q = space.evaluate(phi0)
        rhs = space.load_vector(q**3 - q) / eps + eps * (space.stiffness @ phi0)
        mu0 = space.mass_solver.solve(rhs)
    elif mode == "ritz":
        if ic.grad is None or ic.laplacian is None or ic.grad_laplacian is None:
            raise ValueError(f"ritz initialization needs derivatives of preset {ic.name!r}")
        phi0 = ritz_projection(space, ic.value, ic.grad)

        def mu_field(x, y):
            f = ic.value(x, y)
            return (f**3 - f) / eps - eps * ic.laplacian(x, y)

        def mu_grad(x, y):
            f = ic.value(x, y)
            fx, fy = ic.grad(x, y)
            lx, ly = ic.grad_laplacian(x, y)
            w = (3.0 * f * f - 1.0) / eps
            return w * fx - eps * lx, w * fy - eps * ly

        mu0 = ritz_projection(space, mu_field, mu_grad)
    else:
        raise ValueError(f"unknown initialization mode {mode!r}")
    return phi0, mu0


def initial_state(space, phi0, mu0) -> SchemeState:
    mean_phi0 = float(space.mean_vector @ phi0)
    mu_mean = float(space.mean_vector @ mu0)
    return SchemeState(phi0.copy(), None, mu0 - mu_mean, mu_mean, mean_phi0, 0)


def _record(disc, state_new, phi_old, newton, t0, phi_oldold=None):
    p = disc.params
    space = disc.space
    phi, mu = state_new.phi_curr, state_new.mu
    rec = StepRecord(
        step_index=state_new.step_index,
        time=state_new.step_index * p.tau,
        newton_iterations=newton.iterations,
        minres_iterations=list(newton.minres_counts),
        energy=integrate_energy(space, phi, p.eps),
        modified_energy=integrate_modified_energy(space, phi, phi_old, p.eps),
        mass=float(disc.c @ phi),
        max_abs_phi=float(np.abs(phi).max()),
        wall_seconds=0.0,
        newton_residual=newton.residual_norm,
        dissipation=p.tau * p.eps * float(mu @ (disc.K @ mu)),
    )
    if phi_oldold is not None:
        d2 = phi - 2.0 * phi_old + phi_oldold
        rec.second_difference = float(d2 @ (disc.M @ d2)) / (4.0 * p.eps) + p.eps / 8.0 * float(
            d2 @ (disc.K @ d2)
        )
    rec.wall_seconds = time.perf_counter() - t0
    return rec


def first_step_problem(state: SchemeState, disc: Discretization) -> StepProblem:
    """Newton data of the initialization step from ``(phi^0, mu^0)``."""
    p = disc.params
    K, M = disc.K, disc.M
    phi_ring0 = state.ring(state.phi_curr)
    explicit = M @ phi_ring0 / p.eps - 0.5 * p.tau * (K @ state.mu) - 0.5 * p.eps * (K @ phi_ring0)
    return StepProblem(state.phi_curr, phi_ring0, explicit, stiffness_factor=0.5)


def generic_step_problem(state: SchemeState, disc: Discretization) -> StepProblem:
    """Newton data of the two-level step ``m -> m+1``."""
    p = disc.params
    pr_m = state.ring(state.phi_curr)
    pr_m1 = state.ring(state.phi_prev)
    explicit = disc.M @ (1.5 * pr_m - 0.5 * pr_m1) / p.eps - 0.25 * p.eps * (disc.K @ pr_m1)
    return StepProblem(state.phi_curr, pr_m, explicit, stiffness_factor=0.75)


def first_step(state: SchemeState, disc: Discretization):
    """Initialization step; returns ``(new_state, record)``."""
    t0 = time.perf_counter()
    p = disc.params
    K, M = disc.K, disc.M
    phi0 = state.phi_curr
    phi_ring0 = state.ring(phi0)
    mu0 = state.mu
    prob = first_step_problem(state, disc)
    res = newton_solve(phi_ring0, state.mu_ring, prob, disc, state.mean_phi0)
    mu_mean = recover_mu_mean(res.phi_ring, phi_ring0, state.mean_phi0, disc.space, p.eps)
    new = SchemeState(
        res.phi_ring + state.mean_phi0, phi0, res.mu_ring, mu_mean, state.mean_phi0, 1
    )
    rec = _record(disc, new, phi0, res, t0)
    lap_mu0 = discrete_laplacian(disc.space, M, K, mu0)
    rec.initial_energy_bound = integrate_energy(disc.space, phi0, p.eps) + (
        p.eps * p.tau**2 / 4.0 * float(lap_mu0 @ (M @ lap_mu0))
    )
    rec.wall_seconds = time.perf_counter() - t0
    return new, rec


def time_step(state: SchemeState, disc: Discretization):
    """Generic step m -> m+1 (m >= 1); returns ``(new_state, record)``."""
    if state.phi_prev is None:
        raise ValueError("time_step needs two history levels; call first_step first")
    t0 = time.perf_counter()
    p = disc.params
    pr_m = state.ring(state.phi_curr)
    pr_m1 = state.ring(state.phi_prev)
    prob = generic_step_problem(state, disc)
    guess = pr_m
    if p.newton_guess == "quadratic" and state.phi_prev2 is not None:
        guess = 3.0 * (pr_m - pr_m1) + state.ring(state.phi_prev2)
    elif p.newton_guess != "previous":
        guess = 2.0 * pr_m - pr_m1
    res = newton_solve(guess, state.mu_ring, prob, disc, state.mean_phi0)
    mu_mean = recover_mu_mean(res.phi_ring, pr_m, state.mean_phi0, disc.space, p.eps)
    new = SchemeState(
        res.phi_ring + state.mean_phi0,
        state.phi_curr,
        res.mu_ring,
        mu_mean,
        state.mean_phi0,
        state.step_index + 1,
        state.phi_prev,
    )
    return new, _record(disc, new, state.phi_curr, res, t0, state.phi_prev)


@dataclass
class RunResult:
    records: list
    state: SchemeState
    disc: Discretization
    initial_phi: np.ndarray
    initial_mu: np.ndarray

    @property
    def minres_counts(self) -> list:
        return [k for r in self.records for k in r.minres_iterations]


def run(
    params: SchemeParams,
    ic: InitialCondition,
    hierarchy: MeshHierarchy,
    mode="interpolate",
    n_steps: Optional[int] = None,
    callback: Optional[Callable] = None,
    preconditioner="multigrid",
    disc: Optional[Discretization] = None,
) -> RunResult:
    """Initialize, take the first step, then generic steps up to ``final_time``.

    ``n_steps`` overrides the step count implied by ``final_time``.
    ``callback(state, record)`` is called after every step (and once with
    ``record=None`` for the initial state).
    """
    steps = params.n_steps if n_steps is None else int(n_steps)
    disc = disc or Discretization(hierarchy, params, preconditioner)
    phi0, mu0 = initialize_state(disc.space, ic, params, mode)
    state = initial_state(disc.space, phi0, mu0)
    records = []
    if callback:
        callback(state, None)
    try:
        for m in range(steps):
            state, rec = (first_step if m == 0 else time_step)(state, disc)
            records.append(rec)
            log.debug(
                "step %d: newton %d, minres %s", rec.step_index, rec.newton_iterations,
                rec.minres_iterations,
            )
            if callback:
                callback(state, rec)
    except SolverError as exc:
        raise RunAborted(str(exc), records, state) from exc
    return RunResult(records, state, disc, phi0, mu0)


def energy_law_residuals(records) -> np.ndarray:
    """Telescoped modified-energy identity defect after each generic step,
    relative to the modified energy after the first step."""
    if not records:
        return np.zeros(0)
    F1 = records[0].modified_energy
    acc = 0.0
    out = []
    for rec in records[1:]:
        acc += rec.dissipation + rec.second_difference
        out.append((rec.modified_energy + acc - F1) / abs(F1))
    return np.array(out)


def first_step_energy_gap(record: StepRecord, phi1, phi0, space, eps) -> float:
    """``rhs - lhs`` of the first-step energy inequality (non-negative if it holds)."""
    d = phi1 - phi0
    lhs = record.energy + record.dissipation + float(d @ (space.mass @ d)) / (4.0 * eps)
    return record.initial_energy_bound - lhs
