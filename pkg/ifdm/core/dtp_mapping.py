"""
Dual-to-primal mapping: the pointwise minimizer of the Lagrangian in U.

At each collocation point the stationarity condition dL/dU = 0 is the linear
system

    K (U_hat - U_bar) = -(M D + (D . B) U_bar),     K = diag(a) + D . B,

solved here by a batched Cholesky factorization. A pivot at or below
1e-10 * max(a) marks a point outside the region where K is safely positive
definite; that is reported as a MappingFailureError, which the optimizer
treats as a request to shorten its step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..logging import log_error, log_event
from ..utils.exceptions import InvalidInputError, MappingFailureError
from .packed_algebra import (
    D_SIZE,
    EPS,
    P_SLOT,
    U_SIZE,
    OperatorTables,
    K_flat,
    coupling,
    coupling_transpose,
    default_tables,
    linear_term,
    quadratic_term,
    unpack_d,
    unpack_u,
)

PIVOT_FLOOR = 1e-10
RESIDUAL_TOLERANCE = 1e-10


def pivot_floor(a: np.ndarray) -> float:
    return PIVOT_FLOOR * float(np.max(a))


# ---- batched dense Cholesky -----------------------------------------------

def cholesky_with_pivots(K: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Factor a stack K (P, n, n) as L L^T column by column.

    Returns (L, pivots, ok): pivots[:, j] is the j-th diagonal entry before the
    square root; points with any pivot <= floor have ok False and carry an
    identity column in their place so the batch can finish.
    """
    P, n, _ = K.shape
    L = np.zeros_like(K)
    pivots = np.empty((P, n))
    ok = np.ones(P, dtype=bool)

    for j in range(n):
        row = L[:, j, :j]
        d = K[:, j, j] - np.einsum("pk,pk->p", row, row)
        pivots[:, j] = d
        bad = ~(d > floor)
        ok &= ~bad
        d = np.where(bad, 1.0, d)
        root = np.sqrt(d)
        L[:, j, j] = root
        if j + 1 < n:
            below = K[:, j + 1 :, j] - np.einsum("pik,pk->pi", L[:, j + 1 :, :j], row)
            L[:, j + 1 :, j] = below / root[:, None]
    return L, pivots, ok


def forward_substitute(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L y = b for a stack of lower triangular L."""
    y = np.empty_like(b)
    for i in range(b.shape[1]):
        y[:, i] = (b[:, i] - np.einsum("pk,pk->p", L[:, i, :i], y[:, :i])) / L[:, i, i]
    return y


def back_substitute(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve L^T x = y for a stack of lower triangular L."""
    n = y.shape[1]
    x = np.empty_like(y)
    for i in range(n - 1, -1, -1):
        x[:, i] = (y[:, i] - np.einsum("pk,pk->p", L[:, i + 1 :, i], x[:, i + 1 :])) / L[:, i, i]
    return x


def cholesky_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    return back_substitute(L, forward_substitute(L, b))


# ---- direct stationarity residual -----------------------------------------

def mapping_residual(U: np.ndarray, D: np.ndarray, U_bar: np.ndarray, a: np.ndarray) -> np.ndarray:
    """
    dL/dU written out row by row, independent of the packed tables.

        v:     a_v (v_i - vbar_i) - (G_ij + G_ji) v_j - e_pjr e_pmi alpha_km H_kjr - dt lam_i - d_i mu
        alpha: a_a (alpha_ij - abar_ij) + (G_js + G_sj) alpha_is - e_pkr e_pjs v_s H_ikr - dt A_ij
        p:     a_p (p - pbar) - G_ii

    Point-major input, returns (P, 13).
    """
    U = np.asarray(U, dtype=np.float64).reshape(-1, U_SIZE)
    D = np.asarray(D, dtype=np.float64).reshape(-1, D_SIZE)
    shift = a * (U - np.asarray(U_bar, dtype=np.float64).reshape(-1, U_SIZE))
    v, alpha, _ = unpack_u(U)
    dt_lambda, G, grad_mu, dt_A, H = unpack_d(D)
    G_sym = G + np.swapaxes(G, 1, 2)

    out = np.empty_like(U)
    out[:, 0:3] = (
        shift[:, 0:3]
        - np.einsum("nij,nj->ni", G_sym, v)
        - np.einsum("pjr,pmi,nkm,nkjr->ni", EPS, EPS, alpha, H)
        - dt_lambda
        - grad_mu
    )
    r_alpha = (
        np.einsum("njs,nis->nij", G_sym, alpha)
        - np.einsum("pkr,pjs,ns,nikr->nij", EPS, EPS, v, H)
        - dt_A
    )
    out[:, 3:12] = shift[:, 3:12] + r_alpha.reshape(-1, 9)
    out[:, P_SLOT] = shift[:, P_SLOT] - np.trace(G, axis1=1, axis2=2)
    return out


# ---- solves ----------------------------------------------------------------

@dataclass
class DtpResult:
    """Mapped primal point(s) with factorization diagnostics."""

    U_hat: np.ndarray
    min_eigenvalue_estimate: np.ndarray
    residual_norm: np.ndarray
    factor: np.ndarray = field(repr=False)
    failures: list[tuple[int, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def min_pivot(self) -> float:
        return float(np.min(self.min_eigenvalue_estimate))

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual_norm))

    @property
    def worst_point(self) -> int:
        return int(np.argmin(self.min_eigenvalue_estimate))


def _solve_points(
    D: np.ndarray,
    U_bar: np.ndarray,
    a: np.ndarray,
    tables: OperatorTables,
    collect_all: bool,
) -> DtpResult:
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(U_bar))):
        raise InvalidInputError("dual gradients or base state contain non-finite values")

    K = K_flat(D, a, tables)
    L, pivots, ok = cholesky_with_pivots(K, pivot_floor(a))
    min_pivot = pivots.min(axis=1)

    failures: list[tuple[int, float]] = []
    if not np.all(ok):
        bad = np.flatnonzero(~ok)
        failures = [(int(i), float(min_pivot[i])) for i in bad]
        point, pivot = failures[0]
        log_event(
            "mapping left the positive definite region",
            {"point": point, "pivot": pivot, "failed_points": len(failures)},
            event_type="dtp.failure",
        )
        if not collect_all:
            raise MappingFailureError(
                f"K not positive definite at point {point} (pivot {pivot:.3e})", point=point, pivot=pivot
            )

    rhs = -coupling(U_bar, D, tables)
    U_hat = U_bar + cholesky_solve(L, rhs)
    # the pressure row decouples: a_p (p - pbar) = tr G
    U_hat[:, P_SLOT] = U_bar[:, P_SLOT] + np.trace(D[:, 3:12].reshape(-1, 3, 3), axis1=1, axis2=2) / a[P_SLOT]
    if failures:
        U_hat[~ok] = np.nan

    residual = np.max(np.abs(mapping_residual(U_hat, D, U_bar, a)), axis=1)
    scale = np.maximum(1.0, np.max(np.abs(rhs), axis=1))
    if np.any(residual[ok] > RESIDUAL_TOLERANCE * scale[ok]):
        worst = int(np.argmax(np.where(ok, residual / scale, -np.inf)))
        log_error(
            "mapping residual above tolerance",
            f"point {worst}: {residual[worst]:.3e}",
            error_type="dtp.residual",
        )

    return DtpResult(
        U_hat=U_hat,
        min_eigenvalue_estimate=min_pivot,
        residual_norm=residual,
        factor=L,
        failures=failures,
    )


def dtp_solve(
    D: np.ndarray, U_bar: np.ndarray, a: np.ndarray, tables: Optional[OperatorTables] = None
) -> DtpResult:
    """Map one point: D (51,), U_bar (13,) to U_hat (13,). Diagnostics are scalars."""
    tables = tables or default_tables()
    result = _solve_points(
        np.asarray(D, dtype=np.float64).reshape(1, D_SIZE),
        np.asarray(U_bar, dtype=np.float64).reshape(1, U_SIZE),
        np.asarray(a, dtype=np.float64),
        tables,
        collect_all=False,
    )
    return DtpResult(
        U_hat=result.U_hat[0],
        min_eigenvalue_estimate=result.min_eigenvalue_estimate[0],
        residual_norm=result.residual_norm[0],
        factor=result.factor,
    )


def dtp_solve_field(
    D: np.ndarray,
    U_bar: np.ndarray,
    a: np.ndarray,
    tables: Optional[OperatorTables] = None,
    collect_all: bool = False,
) -> DtpResult:
    """
    Map every point of a point-major field: D (..., 51), U_bar (..., 13).

    The first failing point aborts unless collect_all is set, in which case
    all failures are listed and their U_hat rows are NaN.
    """
    tables = tables or default_tables()
    D = np.asarray(D, dtype=np.float64)
    lead = D.shape[:-1]
    U_bar = np.broadcast_to(np.asarray(U_bar, dtype=np.float64), lead + (U_SIZE,))
    result = _solve_points(
        D.reshape(-1, D_SIZE), np.ascontiguousarray(U_bar).reshape(-1, U_SIZE), np.asarray(a), tables, collect_all
    )
    result.U_hat = result.U_hat.reshape(lead + (U_SIZE,))
    return result


# ---- derived quantities ---------------------------------------------------

def closed_form_integrand(
    D: np.ndarray, U_bar: np.ndarray, result: DtpResult, tables: Optional[OperatorTables] = None
) -> np.ndarray:
    """
    min_U L(U, D) = -1/2 r . K^-1 r + U_bar . M D + 1/2 D . B : (U_bar (x) U_bar),

    with r = (M + B U_bar) D and K^-1 applied through the stored factor.
    """
    tables = tables or default_tables()
    D = np.asarray(D, dtype=np.float64).reshape(-1, D_SIZE)
    U_bar = np.asarray(U_bar, dtype=np.float64).reshape(-1, U_SIZE)
    r = coupling(U_bar, D, tables)
    y = forward_substitute(result.factor, r)
    return -0.5 * np.sum(y * y, axis=1) + linear_term(U_bar, D, tables) + quadratic_term(U_bar, D, tables)


def mapped_lagrangian(
    D: np.ndarray, U_bar: np.ndarray, a: np.ndarray, result: DtpResult, tables: Optional[OperatorTables] = None
) -> np.ndarray:
    """L(U_hat, D) per point, evaluated from the packed tables."""
    tables = tables or default_tables()
    U_hat = result.U_hat.reshape(-1, U_SIZE)
    D = np.asarray(D, dtype=np.float64).reshape(-1, D_SIZE)
    shift = U_hat - np.asarray(U_bar, dtype=np.float64).reshape(-1, U_SIZE)
    return linear_term(U_hat, D, tables) + quadratic_term(U_hat, D, tables) + 0.5 * np.sum(a * shift * shift, axis=1)


def envelope_hessian_action(
    dD: np.ndarray, result: DtpResult, tables: Optional[OperatorTables] = None
) -> np.ndarray:
    """
    Second derivative of min_U L(U, D) applied to dD: -N^T K^-1 N dD, N = M + B U_hat.

    Negative semi-definite wherever the mapping succeeded.
    """
    tables = tables or default_tables()
    U_hat = result.U_hat.reshape(-1, U_SIZE)
    dD = np.asarray(dD, dtype=np.float64).reshape(-1, D_SIZE)
    dU = -cholesky_solve(result.factor, coupling(U_hat, dD, tables))
    return coupling_transpose(U_hat, dU, tables)
