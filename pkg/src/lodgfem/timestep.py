"""Backward Euler for the linear problem and the linearized scheme for the semilinear one.

The same routines serve the fine P1 space, the coarse P1 space and the
multiscale space; only the matrices (and, for the nonlinear term, the basis
used to lift coefficients to fine nodal values) differ.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import BlowUpError, ConvergenceError, DomainError, SolverError
from .linalg import STEP_TOL, JacobiCG, as_csr


@dataclass(frozen=True)
class Schedule:
    tau: float
    n_steps: int

    def __post_init__(self):
        if not self.tau > 0 or self.n_steps < 1:
            raise DomainError(f"need tau > 0 and n_steps >= 1, got {self.tau}, {self.n_steps}")

    @property
    def T(self):
        return self.tau * self.n_steps

    def time(self, n):
        return n * self.tau


@dataclass
class Trajectory:
    space: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final: np.ndarray = None
    final_fine: np.ndarray = None


def _recorder(space, stride, n_steps):
    traj = Trajectory(space)

    def record(n, t, U):
        if n == n_steps or (stride and n % stride == 0):
            traj.times.append(t)
            traj.states.append(U.copy())

    return traj, record


def _step_solver(stiffness, mass, tau, tol):
    return JacobiCG(as_csr(mass + tau * stiffness), tol)


def _solve_step(solver, rhs, guess, n):
    try:
        return solver.solve(rhs, x0=guess)[0]
    except ConvergenceError as exc:
        raise SolverError(f"time step {n}: {exc}") from exc


def backward_euler_linear(stiffness, mass, loads, u0, schedule, *, space="fine", lift=None,
                          tol=STEP_TOL, stride=None):
    """Solve ``(M + tau K) U_n = M U_{n-1} + tau b_n`` for n = 1..N.

    ``loads`` is None (zero), a callable ``t -> vector`` or an array with one row
    per step.
    """
    tau = schedule.tau
    solver = _step_solver(stiffness, mass, tau, tol)
    traj, record = _recorder(space, stride, schedule.n_steps)
    U = np.array(u0, dtype=np.float64)
    for n in range(1, schedule.n_steps + 1):
        t = schedule.time(n)
        rhs = mass @ U
        if loads is not None:
            b = loads(t) if callable(loads) else np.asarray(loads[n - 1])
            rhs = rhs + tau * b
        U = _solve_step(solver, rhs, U, n)
        record(n, t, U)
    traj.final = U
    traj.final_fine = lift(U) if lift is not None else U
    return traj


def allen_cahn(u):
    return -(u ** 3 - u)


def nonlinear_load(nonlinearity, coeffs, mass, fine=None, basis=None):
    """``(f(U), v)`` for all basis functions ``v`` by the interpolant rule.

    With ``fine`` (fine FemOperators) the coefficients are lifted to fine nodal
    values through ``basis`` (identity when None), ``f`` is applied nodewise, the
    result integrated with the full fine mass matrix and tested against the basis.
    Without ``fine``, ``f`` acts directly on the coefficients and ``mass`` integrates.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        if fine is None:
            g = nonlinearity(coeffs)
            if not np.all(np.isfinite(g)):
                raise BlowUpError("nonlinearity produced non-finite values")
            return mass @ g
        u_int = coeffs if basis is None else basis @ coeffs
        g = nonlinearity(fine.extend(u_int))
    if not np.all(np.isfinite(g)):
        raise BlowUpError("nonlinearity produced non-finite values")
    load = (fine.full_mass @ g)[fine.interior]
    return load if basis is None else basis.T @ load


def backward_euler_semilinear(stiffness, mass, nonlinearity, u0, schedule, *, fine=None,
                              basis=None, space="fine", lift=None, tol=STEP_TOL, stride=None):
    """Solve ``(M + tau K) U_n = M U_{n-1} + tau (f(U_{n-1}), v)`` for n = 1..N."""
    tau = schedule.tau
    solver = _step_solver(stiffness, mass, tau, tol)
    traj, record = _recorder(space, stride, schedule.n_steps)
    U = np.array(u0, dtype=np.float64)
    for n in range(1, schedule.n_steps + 1):
        t = schedule.time(n)
        try:
            g = nonlinear_load(nonlinearity, U, mass, fine, basis)
        except BlowUpError as exc:
            raise BlowUpError(f"time step {n}: {exc}") from exc
        U = _solve_step(solver, mass @ U + tau * g, U, n)
        record(n, t, U)
    traj.final = U
    if lift is not None:
        traj.final_fine = lift(U)
    elif basis is not None:
        traj.final_fine = basis @ U
    else:
        traj.final_fine = U
    return traj


def ms_initial_projection(space, fem, u0_fine):
    """L2 projection onto the multiscale space: ``ms_mass c = B^T M_h u0``."""
    rhs = space.basis.T @ (fem.mass @ np.asarray(u0_fine, dtype=np.float64))
    return sla.cho_solve(sla.cho_factor(space.ms_mass.toarray()), rhs)
