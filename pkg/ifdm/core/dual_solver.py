"""
Space-time dual functional for ideal FDM and its maximization.

The dual fields D = (lam, A, mu) live on N+1 time levels t_k = k dt. Their
gradients are collocated at interval centers:

    d_t lam   = (lam^{k+1} - lam^k) / dt
    grad lam  = grad (lam^k + lam^{k+1}) / 2           (same for A and mu)

and every collocation point carries the weight w = dt h^3. The objective is

    S[D] = sum_k sum_x w min_U L(U, D_k(x)) - h^3 sum_x (lam^0 . v0 + A^0 : alpha0)

with lam^N = A^N = 0. Its gradient is the transpose of the collocation map
applied to dL/dD at the mapped primal point, which is the interval-centered
weak form of the ideal FDM equations evaluated on U_hat.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.linalg

from ..enums import Backend, OptimizerMethod, SolveStatus
from ..logging import log_event, log_error
from ..schemas.reports import IterationRecord, MappedDiagnostics, ResidualNorms, SolveReport
from ..utils.decorators import get_time
from ..utils.exceptions import ArgumentError, MappingFailureError
from ..utils.helpers.settings import get_workers
from .dtp_mapping import (
    DtpResult,
    closed_form_integrand,
    dtp_solve_field,
    envelope_hessian_action,
    mapped_lagrangian,
)
from .grid_fields import DerivativeOperators, PeriodicGrid, SpectralOperators, operators_for
from .packed_algebra import D_SIZE, U_SIZE, OperatorTables, default_tables, envelope_dL_dD
from .primal_system import PrimalState, alpha_cross_v, divergence_norms, nonlinear_flux, primal_residual

CLOSED_FORM_TOLERANCE = 1e-12


# ---- lattice and fields ----------------------------------------------------

@dataclass(frozen=True)
class SpaceTimeLattice:
    """Periodic grid times N_t uniform intervals on (0, T)."""

    grid: PeriodicGrid
    nt: int
    T: float
    backend: Backend = Backend.SPECTRAL

    def __post_init__(self):
        if self.nt < 2:
            raise ArgumentError(f"need at least 2 time intervals, got {self.nt}")
        if not self.T > 0.0:
            raise ArgumentError(f"final time must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def weight(self) -> float:
        return self.dt * self.grid.cell_volume

    @property
    def levels(self) -> int:
        return self.nt + 1

    @property
    def points(self) -> int:
        """Number of space-time collocation points."""
        return self.nt * self.grid.points

    @property
    def operators(self) -> DerivativeOperators:
        return operators_for(self.grid.n, Backend(self.backend), get_workers())

    def interval_times(self) -> np.ndarray:
        return (np.arange(self.nt) + 0.5) * self.dt


@dataclass
class DualState:
    """
    lam (N+1, 3, n, n, n), A (N+1, 3, 3, n, n, n), mu (N+1, n, n, n).

    The final levels of lam and A are fixed at zero; mu is free on every level.
    """

    lam: np.ndarray
    A: np.ndarray
    mu: np.ndarray

    @classmethod
    def zeros(cls, lattice: SpaceTimeLattice) -> "DualState":
        shape = (lattice.levels,) + lattice.grid.shape
        return cls(
            lam=np.zeros((lattice.levels, 3) + lattice.grid.shape),
            A=np.zeros((lattice.levels, 3, 3) + lattice.grid.shape),
            mu=np.zeros(shape),
        )

    @classmethod
    def random(
        cls, lattice: SpaceTimeLattice, amplitude: float, rng: np.random.Generator, modes: int = 2
    ) -> "DualState":
        """Smooth random fields built from the lowest `modes` Fourier modes per axis."""
        n = lattice.grid.n
        ops = operators_for(n, Backend.SPECTRAL, get_workers())
        assert isinstance(ops, SpectralOperators)

        def smooth(shape: tuple[int, ...]) -> np.ndarray:
            noise = rng.standard_normal(shape + lattice.grid.shape)
            m = np.fft.fftfreq(n, d=1.0 / n)
            keep = (np.abs(m[:, None, None]) <= modes) & (np.abs(m[None, :, None]) <= modes)
            keep = keep & (np.arange(n // 2 + 1)[None, None, :] <= modes)
            return ops.backward(keep * ops.forward(noise))

        state = cls(lam=smooth((lattice.levels, 3)), A=smooth((lattice.levels, 3, 3)), mu=smooth((lattice.levels,)))
        scale = max(np.max(np.abs(state.lam)), np.max(np.abs(state.A)), np.max(np.abs(state.mu)))
        state.lam *= amplitude / scale
        state.A *= amplitude / scale
        state.mu *= amplitude / scale
        state.enforce_final()
        return state

    def enforce_final(self) -> "DualState":
        self.lam[-1] = 0.0
        self.A[-1] = 0.0
        return self

    def copy(self) -> "DualState":
        return DualState(lam=self.lam.copy(), A=self.A.copy(), mu=self.mu.copy())

    def flatten(self) -> np.ndarray:
        """Free unknowns: lam and A on levels 0..N-1, mu on every level."""
        return np.concatenate([self.lam[:-1].ravel(), self.A[:-1].ravel(), self.mu.ravel()])

    @classmethod
    def unflatten(cls, x: np.ndarray, lattice: SpaceTimeLattice) -> "DualState":
        state = cls.zeros(lattice)
        n_lam = state.lam[:-1].size
        n_A = state.A[:-1].size
        state.lam[:-1] = x[:n_lam].reshape(state.lam[:-1].shape)
        state.A[:-1] = x[n_lam : n_lam + n_A].reshape(state.A[:-1].shape)
        state.mu[:] = x[n_lam + n_A :].reshape(state.mu.shape)
        return state

    @staticmethod
    def size(lattice: SpaceTimeLattice) -> int:
        return lattice.points * 12 + lattice.levels * lattice.grid.points


@dataclass
class BaseState:
    """
    Base primal fields per time interval plus the initial data.

    v (N, 3, n, n, n), alpha (N, 3, 3, n, n, n), p (N, n, n, n).
    """

    v: np.ndarray
    alpha: np.ndarray
    p: np.ndarray
    v0: np.ndarray
    alpha0: np.ndarray

    @property
    def nt(self) -> int:
        return self.v.shape[0]

    def packed(self) -> np.ndarray:
        """Point-major (N * n^3, 13)."""
        return to_points(pack_series(self.v, self.alpha, self.p), U_SIZE)


def pack_series(v: np.ndarray, alpha: np.ndarray, p: np.ndarray) -> np.ndarray:
    """(N, 13, n, n, n) from per-interval primal fields."""
    N = v.shape[0]
    spatial = v.shape[2:]
    return np.concatenate([v, alpha.reshape((N, 9) + spatial), p[:, None]], axis=1)


def unpack_series(U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    N = U.shape[0]
    spatial = U.shape[2:]
    return U[:, 0:3], U[:, 3:12].reshape((N, 3, 3) + spatial), U[:, 12]


def to_points(field_values: np.ndarray, size: int) -> np.ndarray:
    """(N, C, n, n, n) component-slowest to point-major (N * n^3, C)."""
    return np.ascontiguousarray(np.moveaxis(field_values, 1, -1)).reshape(-1, size)


def from_points(points: np.ndarray, lattice: SpaceTimeLattice) -> np.ndarray:
    size = points.shape[-1]
    return np.moveaxis(points.reshape((lattice.nt,) + lattice.grid.shape + (size,)), -1, 1)


def base_from_trajectory(
    snapshots: Sequence[PrimalState],
    v0: Optional[np.ndarray] = None,
    alpha0: Optional[np.ndarray] = None,
) -> BaseState:
    """Interval values as averages of adjacent snapshots; initial data default to the first snapshot."""
    if len(snapshots) < 3:
        raise ArgumentError(f"a base trajectory needs at least 3 snapshots, got {len(snapshots)}")
    v = np.stack([s.v for s in snapshots])
    alpha = np.stack([s.alpha for s in snapshots])
    p = np.stack([s.p for s in snapshots])
    return BaseState(
        v=0.5 * (v[1:] + v[:-1]),
        alpha=0.5 * (alpha[1:] + alpha[:-1]),
        p=0.5 * (p[1:] + p[:-1]),
        v0=snapshots[0].v.copy() if v0 is None else v0,
        alpha0=snapshots[0].alpha.copy() if alpha0 is None else alpha0,
    )


def base_from_state(
    state: PrimalState,
    nt: int,
    v0: Optional[np.ndarray] = None,
    alpha0: Optional[np.ndarray] = None,
) -> BaseState:
    """A base state constant in time."""
    return BaseState(
        v=np.repeat(state.v[None], nt, axis=0),
        alpha=np.repeat(state.alpha[None], nt, axis=0),
        p=np.repeat(state.p[None], nt, axis=0),
        v0=state.v.copy() if v0 is None else v0,
        alpha0=state.alpha.copy() if alpha0 is None else alpha0,
    )


# ---- collocation map and its transpose ---------------------------------------

def compute_calD(D: DualState, lattice: SpaceTimeLattice) -> np.ndarray:
    """Packed dual gradients at interval centers, shape (N, 51, n, n, n)."""
    ops = lattice.operators
    dt = lattice.dt

    def mid(x: np.ndarray) -> np.ndarray:
        return 0.5 * (x[1:] + x[:-1])

    N = lattice.nt
    spatial = lattice.grid.shape
    return np.concatenate(
        [
            (D.lam[1:] - D.lam[:-1]) / dt,
            ops.grad(mid(D.lam)).reshape((N, 9) + spatial),
            ops.grad(mid(D.mu)),
            ((D.A[1:] - D.A[:-1]) / dt).reshape((N, 9) + spatial),
            ops.grad(mid(D.A)).reshape((N, 27) + spatial),
        ],
        axis=1,
    )


def calD_adjoint(E: np.ndarray, lattice: SpaceTimeLattice) -> DualState:
    """
    Weighted transpose of `compute_calD`: sum_k w E_k . calD_k(D) = <adjoint, D>.

    E has shape (N, 51, n, n, n). Final lam and A levels come out zero.
    """
    ops = lattice.operators
    N = lattice.nt
    spatial = lattice.grid.shape
    h3 = lattice.grid.cell_volume
    half_w = 0.5 * lattice.weight

    e_dt_lam = E[:, 0:3]
    e_G = E[:, 3:12].reshape((N, 3, 3) + spatial)
    e_mu = E[:, 12:15]
    e_dt_A = E[:, 15:24].reshape((N, 3, 3) + spatial)
    e_H = E[:, 24:51].reshape((N, 3, 3, 3) + spatial)

    def spread(x: np.ndarray) -> np.ndarray:
        # interval k feeds levels k and k+1
        out = np.zeros((N + 1,) + x.shape[1:])
        out[:-1] += x
        out[1:] += x
        return out

    def telescope(x: np.ndarray) -> np.ndarray:
        out = np.zeros((N + 1,) + x.shape[1:])
        out[:-1] -= x
        out[1:] += x
        return out

    grad = DualState(
        lam=h3 * telescope(e_dt_lam) - half_w * spread(ops.div(e_G)),
        A=h3 * telescope(e_dt_A) - half_w * spread(ops.div(e_H)),
        mu=-half_w * spread(ops.div(e_mu)),
    )
    return grad.enforce_final()


# ---- objective ---------------------------------------------------------------

@dataclass
class DualEvaluation:
    """S, its gradient, and the mapped primal data behind them."""

    S: float
    gradient: DualState
    S_closed: float
    calD: np.ndarray = field(repr=False)
    mapping: DtpResult = field(repr=False)

    @property
    def min_pivot(self) -> float:
        return self.mapping.min_pivot

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.gradient.flatten())))


def initial_term(D: DualState, base: BaseState, lattice: SpaceTimeLattice) -> float:
    h3 = lattice.grid.cell_volume
    return h3 * float(np.sum(D.lam[0] * base.v0) + np.sum(D.A[0] * base.alpha0))


def objective_and_gradient(
    D: DualState,
    base: BaseState,
    lattice: SpaceTimeLattice,
    a: np.ndarray,
    tables: Optional[OperatorTables] = None,
) -> DualEvaluation:
    """
    Evaluate S[D] and its gradient.

    Raises MappingFailureError (with the flat collocation index) if K is not
    positive definite somewhere.
    """
    tables = tables or default_tables()
    calD = compute_calD(D, lattice)
    D_points = to_points(calD, D_SIZE)
    U_bar = base.packed()

    mapping = dtp_solve_field(D_points, U_bar, a, tables)
    boundary = initial_term(D, base, lattice)
    S = lattice.weight * float(np.sum(mapped_lagrangian(D_points, U_bar, a, mapping, tables))) - boundary
    S_closed = lattice.weight * float(np.sum(closed_form_integrand(D_points, U_bar, mapping, tables))) - boundary

    if abs(S - S_closed) > CLOSED_FORM_TOLERANCE * max(1.0, abs(S)):
        log_error(
            "mapped and closed-form objectives disagree",
            f"S={S:.16e} closed={S_closed:.16e}",
            error_type="dual.closed_form",
        )

    E = from_points(envelope_dL_dD(mapping.U_hat, tables), lattice)
    gradient = calD_adjoint(E, lattice)
    h3 = lattice.grid.cell_volume
    gradient.lam[0] -= h3 * base.v0
    gradient.A[0] -= h3 * base.alpha0
    return DualEvaluation(S=S, gradient=gradient, S_closed=S_closed, calD=calD, mapping=mapping)


def objective(D: DualState, base: BaseState, lattice: SpaceTimeLattice, a: np.ndarray, tables=None) -> float:
    return objective_and_gradient(D, base, lattice, a, tables).S


def hessian_action(
    direction: DualState, evaluation: DualEvaluation, lattice: SpaceTimeLattice, tables: Optional[OperatorTables] = None
) -> DualState:
    """Exact second derivative of S at the evaluated point applied to `direction`."""
    tables = tables or default_tables()
    dD = to_points(compute_calD(direction, lattice), D_SIZE)
    return calD_adjoint(from_points(envelope_hessian_action(dD, evaluation.mapping, tables), lattice), lattice)


def second_difference(
    D: DualState,
    direction: DualState,
    base: BaseState,
    lattice: SpaceTimeLattice,
    a: np.ndarray,
    tables: Optional[OperatorTables] = None,
) -> float:
    """S(D + d) - 2 S(D) + S(D - d); never positive for a concave S."""
    plus = DualState.unflatten(D.flatten() + direction.flatten(), lattice)
    minus = DualState.unflatten(D.flatten() - direction.flatten(), lattice)
    return (
        objective(plus, base, lattice, a, tables)
        - 2.0 * objective(D, base, lattice, a, tables)
        + objective(minus, base, lattice, a, tables)
    )


# ---- weak form of the primal equations -------------------------------------

def weak_form_residual(
    v: np.ndarray,
    alpha: np.ndarray,
    p: np.ndarray,
    v0: np.ndarray,
    alpha0: np.ndarray,
    lattice: SpaceTimeLattice,
) -> DualState:
    """
    Interval-centered weak residual of the ideal FDM system for a primal series
    given per interval, written with direct formulas:

        lam level k: h^3 (v_k - v_{k-1}) + (w/2)(div sigma_{k-1} + div sigma_k)
        A level k:   h^3 (alpha_k - alpha_{k-1}) + (w/2)(curl(alpha x v)_{k-1} + curl(alpha x v)_k)
        mu level k:  (w/2)(div v_{k-1} + div v_k)

    with v_{-1} = v0, alpha_{-1} = alpha0 and absent intervals dropped.
    """
    ops = lattice.operators
    N = lattice.nt
    h3 = lattice.grid.cell_volume
    half_w = 0.5 * lattice.weight

    div_sigma = np.empty_like(v)
    curl_emf = np.empty_like(alpha)
    for k in range(N):
        sigma = nonlinear_flux(v[k], alpha[k])
        for i in range(3):
            sigma[i, i] += p[k]
        div_sigma[k] = ops.div(sigma)
        curl_emf[k] = ops.curl(alpha_cross_v(alpha[k], v[k]))
    div_v = ops.div(v)

    def with_initial(x: np.ndarray, x0: np.ndarray) -> np.ndarray:
        previous = np.concatenate([x0[None], x[:-1]])
        return x - previous

    lam = np.zeros((N + 1,) + v.shape[1:])
    A = np.zeros((N + 1,) + alpha.shape[1:])
    mu = np.zeros((N + 1,) + p.shape[1:])

    lam[:N] = h3 * with_initial(v, v0)
    lam[:N] += half_w * div_sigma
    lam[1:N] += half_w * div_sigma[:-1]

    A[:N] = h3 * with_initial(alpha, alpha0)
    A[:N] += half_w * curl_emf
    A[1:N] += half_w * curl_emf[:-1]

    mu[:N] += half_w * div_v
    mu[1:] += half_w * div_v
    return DualState(lam=lam, A=A, mu=mu)


def discrete_residual(
    v: np.ndarray, alpha: np.ndarray, p: np.ndarray, base: BaseState, lattice: SpaceTimeLattice
) -> ResidualNorms:
    """Max-norms of the weak residual divided by the collocation weight."""
    r = weak_form_residual(v, alpha, p, base.v0, base.alpha0, lattice)
    ops = lattice.operators
    w = lattice.weight
    return ResidualNorms(
        momentum=float(np.max(np.abs(r.lam))) / w,
        transport=float(np.max(np.abs(r.A))) / w,
        div_v=float(np.max(np.abs(r.mu))) / w,
        div_alpha=float(np.max(np.abs(ops.div(alpha)))),
    )


# ---- extraction --------------------------------------------------------------

def extract_primal(
    D: DualState,
    base: BaseState,
    lattice: SpaceTimeLattice,
    a: np.ndarray,
    tables: Optional[OperatorTables] = None,
) -> list[PrimalState]:
    """Mapped primal states at the interval centers."""
    tables = tables or default_tables()
    mapping = dtp_solve_field(to_points(compute_calD(D, lattice), D_SIZE), base.packed(), a, tables)
    v, alpha, p = unpack_series(from_points(mapping.U_hat, lattice))
    times = lattice.interval_times()
    states = [
        PrimalState(v=v[k].copy(), alpha=alpha[k].copy(), p=p[k].copy(), time=float(times[k]))
        for k in range(lattice.nt)
    ]
    diagnostics = mapped_diagnostics(states, base, lattice)
    log_event(
        f"extracted {len(states)} mapped primal states",
        diagnostics.model_dump(),
        event_type="dual.extract",
        min_pivot=mapping.min_pivot,
    )
    return states


def mapped_diagnostics(
    states: Sequence[PrimalState], base: BaseState, lattice: SpaceTimeLattice
) -> MappedDiagnostics:
    """
    Divergence norms, weak-form residual and strong-form residual of a mapped series.

    The strong-form residual uses centered differences in time over the
    interval centers, so it is only reported when there are at least three.
    """
    div_v = div_alpha = 0.0
    for state in states:
        level_v, level_alpha = divergence_norms(state, lattice.backend)
        div_v = max(div_v, level_v)
        div_alpha = max(div_alpha, level_alpha)
    v, alpha, p = series_arrays(states)
    primal = primal_residual(states, lattice.dt, lattice.backend) if len(states) >= 3 else None
    return MappedDiagnostics(
        div_v=div_v,
        div_alpha=div_alpha,
        weak_form=discrete_residual(v, alpha, p, base, lattice),
        primal=primal,
    )


def series_arrays(states: Sequence[PrimalState]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.stack([s.v for s in states]),
        np.stack([s.alpha for s in states]),
        np.stack([s.p for s in states]),
    )


# ---- maximization -----------------------------------------------------------

@dataclass
class SolverSettings:
    method: OptimizerMethod = OptimizerMethod.LBFGS
    tol: float = 1e-8
    max_iter: int = 500
    history: int = 10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    cg_rtol: float = 1e-10
    cg_maxiter: int = 500


def _lbfgs_direction(g: np.ndarray, s_hist: list[np.ndarray], y_hist: list[np.ndarray]) -> np.ndarray:
    """Two-loop recursion for the minimization of -S; returns an ascent direction for S."""
    q = -g
    coefficients = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / np.dot(y, s)
        c = rho * np.dot(s, q)
        q = q - c * y
        coefficients.append((rho, c))
    s, y = s_hist[-1], y_hist[-1]
    z = q * (np.dot(s, y) / np.dot(y, y))
    for (s, y), (rho, c) in zip(zip(s_hist, y_hist), reversed(coefficients)):
        b = rho * np.dot(y, z)
        z = z + (c - b) * s
    return -z


def _newton_direction(
    evaluation: DualEvaluation, lattice: SpaceTimeLattice, settings: SolverSettings, tables: OperatorTables
) -> np.ndarray:
    """Solve (-Hess S) p = grad S by conjugate gradients on the frozen-K Hessian."""
    size = DualState.size(lattice)

    def matvec(x: np.ndarray) -> np.ndarray:
        d = DualState.unflatten(np.asarray(x).ravel(), lattice)
        return -hessian_action(d, evaluation, lattice, tables).flatten()

    operator = scipy.sparse.linalg.LinearOperator((size, size), matvec=matvec, dtype=np.float64)
    g = evaluation.gradient.flatten()
    p, info = scipy.sparse.linalg.cg(operator, g, rtol=settings.cg_rtol, maxiter=settings.cg_maxiter)
    if info < 0 or not np.all(np.isfinite(p)) or np.dot(p, g) <= 0.0:
        log_event("conjugate gradients gave no ascent direction", {"info": int(info)}, event_type="dual.newton")
        return g / max(np.max(np.abs(g)), np.finfo(float).tiny)
    return p


def _converged(evaluation: DualEvaluation, tol: float) -> bool:
    return evaluation.grad_norm <= tol * (1.0 + abs(evaluation.S))


def _record(iteration: int, evaluation: DualEvaluation, step: float) -> IterationRecord:
    record = IterationRecord(
        iteration=iteration,
        objective=evaluation.S,
        grad_norm=evaluation.grad_norm,
        min_pivot=evaluation.min_pivot,
        step_length=step,
    )
    log_event(
        f"iter {iteration}: S={evaluation.S:.12e} |grad|={evaluation.grad_norm:.3e}",
        record.model_dump(),
        event_type="dual.iteration",
    )
    return record


@get_time
def maximize(
    D0: DualState,
    base: BaseState,
    lattice: SpaceTimeLattice,
    a: np.ndarray,
    settings: Optional[SolverSettings] = None,
    tables: Optional[OperatorTables] = None,
) -> tuple[DualState, SolveReport]:
    """
    Ascend S from D0 by L-BFGS or Newton-CG with Armijo backtracking.

    A trial point where the mapping fails counts as a rejected step. A
    mapping failure at D0 itself is raised.
    """
    settings = settings or SolverSettings()
    tables = tables or default_tables()
    started = perf_counter()
    evaluations = 0

    def evaluate(x: np.ndarray) -> DualEvaluation:
        nonlocal evaluations
        evaluations += 1
        return objective_and_gradient(DualState.unflatten(x, lattice), base, lattice, a, tables)

    x = D0.copy().enforce_final().flatten()
    try:
        current = evaluate(x)
    except MappingFailureError as e:
        log_error("initial dual state is outside the solvable region", e, error_type="dual.start")
        raise

    history = [_record(0, current, 0.0)]
    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    status = SolveStatus.MAX_ITERATIONS
    message = ""
    iteration = 0

    while True:
        if _converged(current, settings.tol):
            status = SolveStatus.CONVERGED
            break
        if iteration >= settings.max_iter:
            break
        iteration += 1

        g = current.gradient.flatten()
        if settings.method is OptimizerMethod.NEWTON:
            direction = _newton_direction(current, lattice, settings, tables)
        elif s_hist:
            direction = _lbfgs_direction(g, s_hist, y_hist)
            if np.dot(direction, g) <= 0.0:
                s_hist.clear()
                y_hist.clear()
                direction = g / np.max(np.abs(g))
        else:
            direction = g / np.max(np.abs(g))

        slope = float(np.dot(g, direction))
        step = 1.0
        accepted: Optional[DualEvaluation] = None
        for _ in range(settings.max_backtracks):
            trial_x = x + step * direction
            try:
                trial = evaluate(trial_x)
            except MappingFailureError:
                step *= settings.shrink
                continue
            if trial.S >= current.S + settings.armijo * step * slope and trial.S > current.S:
                accepted = trial
                break
            step *= settings.shrink

        if accepted is None:
            status = SolveStatus.STAGNATION
            message = f"line search found no ascent at iteration {iteration}"
            log_event(message, {"S": current.S, "grad_norm": current.grad_norm}, event_type="dual.stagnation")
            iteration -= 1
            break

        new_x = trial_x
        s = new_x - x
        y = current.gradient.flatten() - accepted.gradient.flatten()
        # curvature pair for minimizing -S
        if np.dot(s, y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > settings.history:
                s_hist.pop(0)
                y_hist.pop(0)

        x, current = new_x, accepted
        history.append(_record(iteration, current, step))

    D_star = DualState.unflatten(x, lattice)
    v, alpha, p = unpack_series(from_points(current.mapping.U_hat, lattice))
    report = SolveReport(
        status=status,
        iterations=iteration,
        history=history,
        evaluations=evaluations,
        mapped_residuals=discrete_residual(v, alpha, p, base, lattice),
        wall_time=perf_counter() - started,
        message=message or str(status),
    )
    log_event(
        f"dual solve finished: {status}",
        {"iterations": iteration, "S": current.S, "grad_norm": current.grad_norm},
        event_type="dual.finish",
    )
    return D_star, report
