"""
The ideal FDM system, its MHD embedding, and conservation diagnostics.

    d_t v_i     + d_j (v_i v_j - alpha_ki alpha_kj + p delta_ij) = 0
    d_t alpha_ij + e_jrp d_r (e_pms alpha_im v_s)                = 0
    d_i v_i = 0

Rows of alpha are transported like magnetic fields; a state whose alpha has a
single nonzero row B is an ideal MHD state with alpha^T alpha = B (x) B.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..enums import Backend
from ..schemas.reports import ConservationReport, ResidualNorms
from ..utils.exceptions import (
    ArgumentError,
    IllPosedPotentialError,
    InsufficientDataError,
    NotCurlSolvableError,
    UnsupportedBackendError,
)
from .grid_fields import (
    PeriodicGrid,
    SpectralOperators,
    curl_rowwise,
    curl_vector,
    div_tensor_rowwise,
    div_vector,
    ensure_finite,
    get_operators,
    grid_of,
)

MEAN_TOLERANCE = 1e-8
DIVERGENCE_TOLERANCE = 1e-6


@dataclass
class PrimalState:
    """U = (v, alpha, p) on a periodic grid."""

    v: np.ndarray
    alpha: np.ndarray
    p: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        n = self.p.shape[-1]
        if self.v.shape != (3, n, n, n) or self.alpha.shape != (3, 3, n, n, n) or self.p.shape != (n, n, n):
            raise ArgumentError(
                f"inconsistent primal shapes v{self.v.shape} alpha{self.alpha.shape} p{self.p.shape}"
            )
        ensure_finite(self.v, self.alpha, self.p, what="primal state")

    @property
    def grid(self) -> PeriodicGrid:
        return grid_of(self.p)

    @classmethod
    def zeros(cls, grid: PeriodicGrid, time: float = 0.0) -> "PrimalState":
        return cls(v=grid.zeros(1), alpha=grid.zeros(2), p=grid.zeros(0), time=time)

    def copy(self) -> "PrimalState":
        return PrimalState(v=self.v.copy(), alpha=self.alpha.copy(), p=self.p.copy(), time=self.time)


def alpha_cross_v(alpha: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise cross product (alpha x v)_ip = e_pms alpha_im v_s."""
    return np.stack(
        [
            alpha[:, 1] * v[2] - alpha[:, 2] * v[1],
            alpha[:, 2] * v[0] - alpha[:, 0] * v[2],
            alpha[:, 0] * v[1] - alpha[:, 1] * v[0],
        ],
        axis=1,
    )


def alpha_gram(alpha: np.ndarray) -> np.ndarray:
    """(alpha^T alpha)_ij = alpha_ki alpha_kj."""
    return np.einsum("ki...,kj...->ij...", alpha, alpha)


def nonlinear_flux(v: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """v (x) v - alpha^T alpha, the pressure-free part of the momentum flux."""
    return np.einsum("i...,j...->ij...", v, v) - alpha_gram(alpha)


def momentum_flux(state: PrimalState) -> np.ndarray:
    """sigma_ij = v_i v_j - alpha_ki alpha_kj + p delta_ij."""
    sigma = nonlinear_flux(state.v, state.alpha)
    for i in range(3):
        sigma[i, i] += state.p
    return sigma


def transport_rhs(alpha: np.ndarray, v: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """d_t alpha of the ideal system: -curl_rowwise(alpha x v)."""
    ensure_finite(alpha, v, what="transport input")
    return -curl_rowwise(alpha_cross_v(alpha, v), backend)


def induction_rhs(B: np.ndarray, v: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """Vector-form ideal induction d_t B = -curl(B x v)."""
    ensure_finite(B, v, what="induction input")
    B_cross_v = np.stack(
        [
            B[1] * v[2] - B[2] * v[1],
            B[2] * v[0] - B[0] * v[2],
            B[0] * v[1] - B[1] * v[0],
        ]
    )
    return -curl_vector(B_cross_v, backend)


def embed_mhd(B: np.ndarray, row: int = 1) -> np.ndarray:
    """Place B in row `row` (1..3) of an otherwise zero alpha."""
    if row not in (1, 2, 3):
        raise ArgumentError(f"embedding row must be 1, 2 or 3, got {row}")
    ensure_finite(B, what="magnetic field")
    alpha = np.zeros((3,) + B.shape, dtype=np.float64)
    alpha[row - 1] = B
    return alpha


def extract_row(alpha: np.ndarray, row: int = 1) -> np.ndarray:
    if row not in (1, 2, 3):
        raise ArgumentError(f"row must be 1, 2 or 3, got {row}")
    return alpha[row - 1].copy()


def helicity(alpha: np.ndarray) -> tuple[list[float], float]:
    """
    Helicity analog per row, int chi_row . alpha_row dx, and its total.

    chi is the divergence-free, zero-mean vector potential of each row, so each
    row must itself be mean-free and divergence-free.
    """
    ensure_finite(alpha, what="alpha")
    grid = grid_of(alpha)
    ops = get_operators(alpha, Backend.SPECTRAL)
    assert isinstance(ops, SpectralOperators)

    means = alpha.mean(axis=(-3, -2, -1))
    if np.max(np.abs(means)) > MEAN_TOLERANCE:
        raise NotCurlSolvableError(f"alpha rows have nonzero mean (max |mean| = {np.max(np.abs(means)):.3e})")
    div_norm = float(np.max(np.abs(ops.div(alpha))))
    if div_norm > DIVERGENCE_TOLERANCE:
        raise IllPosedPotentialError(f"alpha rows are not divergence-free (max |div| = {div_norm:.3e})")

    chi = ops.vector_potential(alpha)
    per_row = [float(grid.integrate(np.sum(chi[i] * alpha[i], axis=0))) for i in range(3)]
    return per_row, float(sum(per_row))


def cross_helicity(state: PrimalState) -> list[float]:
    """Per-row int v . alpha_row dx (MHD cross helicity under row embedding)."""
    grid = state.grid
    return [float(grid.integrate(np.sum(state.v * state.alpha[i], axis=0))) for i in range(3)]


def energy(state: PrimalState) -> float:
    """int 1/2 (|v|^2 + |alpha|^2) dx with uniform weights."""
    density = 0.5 * (np.sum(state.v ** 2, axis=0) + np.sum(state.alpha ** 2, axis=(0, 1)))
    return float(state.grid.integrate(density))


def divergence_norms(state: PrimalState, backend: Backend | str = Backend.SPECTRAL) -> tuple[float, float]:
    div_v = float(np.max(np.abs(div_vector(state.v, backend))))
    div_alpha = float(np.max(np.abs(div_tensor_rowwise(state.alpha, backend))))
    return div_v, div_alpha


def conservation_report(state: PrimalState, backend: Backend | str = Backend.SPECTRAL) -> ConservationReport:
    """Energy, helicity analog, cross helicity and divergence norms of a state."""
    div_v, div_alpha = divergence_norms(state, backend)
    try:
        per_row, total = helicity(state.alpha)
    except (NotCurlSolvableError, IllPosedPotentialError):
        per_row, total = None, None
    return ConservationReport(
        time=state.time,
        energy=energy(state),
        helicity_per_row=per_row,
        helicity_total=total,
        cross_helicity_per_row=cross_helicity(state),
        div_v_norm=div_v,
        div_alpha_norm=div_alpha,
    )


def time_derivative(levels: np.ndarray, dt: float) -> np.ndarray:
    """
    Second-order derivative along axis 0: centered inside, one-sided at the ends.

    Differences are formed before scaling so constant series give exact zeros.
    """
    out = np.empty_like(levels)
    out[1:-1] = (levels[2:] - levels[:-2]) / (2.0 * dt)
    out[0] = (4.0 * (levels[1] - levels[0]) - (levels[2] - levels[0])) / (2.0 * dt)
    out[-1] = (4.0 * (levels[-1] - levels[-2]) - (levels[-1] - levels[-3])) / (2.0 * dt)
    return out


def _dealiased_rates(state: PrimalState) -> tuple[np.ndarray, np.ndarray]:
    """div sigma and the ideal alpha rate with every quadratic product 2/3-filtered."""
    ops = get_operators(state.p, Backend.SPECTRAL)
    assert isinstance(ops, SpectralOperators)
    sigma = ops.dealias(nonlinear_flux(state.v, state.alpha))
    for i in range(3):
        sigma[i, i] += state.p
    return ops.div(sigma), -ops.curl(ops.dealias(alpha_cross_v(state.alpha, state.v)))


def primal_residual(
    trajectory: Sequence[PrimalState],
    dt: float,
    backend: Backend | str = Backend.SPECTRAL,
    dealias: bool = False,
) -> ResidualNorms:
    """
    Max-norm residuals of the full system over a uniformly sampled trajectory.

    With `dealias` the flux and the row-wise EMF are 2/3-filtered before
    differentiation, which is the discrete system the reference integrator
    advances with dealiasing on. The stored pressure must then come from
    the same filtered flux.
    """
    if len(trajectory) < 3:
        raise InsufficientDataError(f"residuals need at least 3 time levels, got {len(trajectory)}")
    if dt <= 0.0:
        raise ArgumentError(f"time spacing must be positive, got {dt}")
    if dealias and Backend(backend) is not Backend.SPECTRAL:
        raise UnsupportedBackendError(f"dealiased residuals require the spectral backend, got {backend}")

    v = np.stack([state.v for state in trajectory])
    alpha = np.stack([state.alpha for state in trajectory])
    dv_dt = time_derivative(v, dt)
    dalpha_dt = time_derivative(alpha, dt)

    momentum = transport = div_v = div_alpha = 0.0
    for k, state in enumerate(trajectory):
        if dealias:
            div_sigma, alpha_rate = _dealiased_rates(state)
        else:
            div_sigma = div_tensor_rowwise(momentum_flux(state), backend)
            alpha_rate = transport_rhs(state.alpha, state.v, backend)
        momentum = max(momentum, float(np.max(np.abs(dv_dt[k] + div_sigma))))
        transport = max(transport, float(np.max(np.abs(dalpha_dt[k] - alpha_rate))))
        level_div_v, level_div_alpha = divergence_norms(state, backend)
        div_v = max(div_v, level_div_v)
        div_alpha = max(div_alpha, level_div_alpha)

    return ResidualNorms(momentum=momentum, transport=transport, div_v=div_v, div_alpha=div_alpha)
