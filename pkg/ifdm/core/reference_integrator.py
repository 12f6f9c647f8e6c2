"""
Pseudo-spectral method-of-lines solver for ideal (and lightly regularized) FDM.

Pressure never appears explicitly: the momentum rate is Leray-projected and p
is reconstructed on demand from -Lap p = div div(v (x) v - alpha^T alpha).
Time stepping is classical fixed-step RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..enums import Backend
from ..logging import log_event, log_error
from ..schemas.reports import ConservationReport
from ..utils.exceptions import NumericalAbortError, StepSizeError
from .grid_fields import SpectralOperators, get_operators
from .primal_system import (
    PrimalState,
    alpha_cross_v,
    conservation_report,
    nonlinear_flux,
)

DIVERGENCE_WARNING = 1e-10


class IntegratorConfig(BaseModel):
    """Fixed-step forward integration settings."""

    dt: float = Field(..., gt=0.0)
    steps: int = Field(..., gt=0)
    nu: float = Field(0.0, ge=0.0, description="viscosity")
    eta: float = Field(0.0, ge=0.0, description="dislocation diffusion")
    dealias: bool = True
    cfl_limit: float = Field(0.5, gt=0.0)
    reconstruct_pressure: bool = True


@dataclass
class IntegrationResult:
    trajectory: list[PrimalState] = field(default_factory=list)
    reports: list[ConservationReport] = field(default_factory=list)

    @property
    def final(self) -> PrimalState:
        return self.trajectory[-1]


def _spectral(array: np.ndarray) -> SpectralOperators:
    ops = get_operators(array, Backend.SPECTRAL)
    assert isinstance(ops, SpectralOperators)
    return ops


def cfl_number(v: np.ndarray, alpha: np.ndarray, dt: float) -> float:
    n = v.shape[-1]
    v_max = float(np.max(np.sqrt(np.sum(v ** 2, axis=0))))
    alpha_max = float(np.max(np.sqrt(np.sum(alpha ** 2, axis=(0, 1)))))
    return dt * (v_max + alpha_max) * n


def check_cfl(v: np.ndarray, alpha: np.ndarray, config: IntegratorConfig) -> None:
    cfl = cfl_number(v, alpha, config.dt)
    if not cfl <= config.cfl_limit:
        raise StepSizeError(f"CFL number {cfl:.3f} exceeds {config.cfl_limit}", cfl=cfl)


def _rates(v: np.ndarray, alpha: np.ndarray, config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    ops = _spectral(v)
    flux = nonlinear_flux(v, alpha)
    emf = alpha_cross_v(alpha, v)
    if config.dealias:
        flux = ops.dealias(flux)
        emf = ops.dealias(emf)

    dv = ops.leray(-ops.div(flux))
    dalpha = -ops.curl(emf)
    if config.nu > 0.0:
        dv = dv + config.nu * ops.laplacian(v)
    if config.eta > 0.0:
        dalpha = dalpha + config.eta * ops.laplacian(alpha)
    return dv, dalpha


def semidiscrete_rhs(state: PrimalState, config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """(dv/dt, dalpha/dt) with pressure removed by projection."""
    check_cfl(state.v, state.alpha, config)
    return _rates(state.v, state.alpha, config)


def _rk4(y: tuple[np.ndarray, ...], rhs: Callable[..., tuple[np.ndarray, ...]], dt: float) -> tuple[np.ndarray, ...]:
    k1 = rhs(*y)
    k2 = rhs(*(u + 0.5 * dt * k for u, k in zip(y, k1)))
    k3 = rhs(*(u + 0.5 * dt * k for u, k in zip(y, k2)))
    k4 = rhs(*(u + dt * k for u, k in zip(y, k3)))
    return tuple(
        u + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for u, a, b, c, d in zip(y, k1, k2, k3, k4)
    )


def _step_arrays(v: np.ndarray, alpha: np.ndarray, config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    check_cfl(v, alpha, config)
    v_new, alpha_new = _rk4((v, alpha), lambda a, b: _rates(a, b, config), config.dt)
    return _spectral(v).leray(v_new), alpha_new


def step_rk4(state: PrimalState, config: IntegratorConfig) -> PrimalState:
    """One RK4 step; the new velocity is re-projected onto divergence-free fields."""
    v, alpha = _step_arrays(state.v, state.alpha, config)
    return PrimalState(v=v, alpha=alpha, p=state.p.copy(), time=state.time + config.dt)


def reconstruct_pressure(v: np.ndarray, alpha: np.ndarray, dealias: bool = False) -> np.ndarray:
    """
    Zero-mean p solving -Lap p = div div(v (x) v - alpha^T alpha).

    With `dealias` the flux is 2/3-filtered first, matching the rates of a
    dealiased run so that the momentum equation closes with this p.
    """
    ops = _spectral(v)
    flux = nonlinear_flux(v, alpha)
    if dealias:
        flux = ops.dealias(flux)
    return ops.inverse_laplacian(ops.div(ops.div(flux)))


def reverse_state(state: PrimalState) -> PrimalState:
    """Time reversal of the ideal system: v -> -v, alpha unchanged."""
    return PrimalState(v=-state.v, alpha=state.alpha.copy(), p=state.p.copy(), time=state.time)


def mhd_rhs(v: np.ndarray, B: np.ndarray, config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vector-form incompressible MHD: Lorentz force from B (x) B, induction -curl(B x v)."""
    ops = _spectral(v)
    flux = np.einsum("i...,j...->ij...", v, v) - np.einsum("i...,j...->ij...", B, B)
    emf = np.stack(
        [
            B[1] * v[2] - B[2] * v[1],
            B[2] * v[0] - B[0] * v[2],
            B[0] * v[1] - B[1] * v[0],
        ]
    )
    if config.dealias:
        flux = ops.dealias(flux)
        emf = ops.dealias(emf)

    dv = ops.leray(-ops.div(flux))
    dB = -ops.curl(emf)
    if config.nu > 0.0:
        dv = dv + config.nu * ops.laplacian(v)
    if config.eta > 0.0:
        dB = dB + config.eta * ops.laplacian(B)
    return dv, dB


def step_rk4_mhd(v: np.ndarray, B: np.ndarray, config: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    v_new, B_new = _rk4((v, B), lambda a, b: mhd_rhs(a, b, config), config.dt)
    return _spectral(v).leray(v_new), B_new


def integrate(
    state0: PrimalState,
    config: IntegratorConfig,
    sample_every: int = 1,
    on_sample: Optional[Callable[[PrimalState, ConservationReport], None]] = None,
) -> IntegrationResult:
    """
    Integrate `config.steps` steps, sampling every `sample_every` steps and at the end.

    A step that produces non-finite values or violates the CFL bound mid-run
    aborts with the last good state attached.
    """
    check_cfl(state0.v, state0.alpha, config)
    result = IntegrationResult()

    def sample(v: np.ndarray, alpha: np.ndarray, p: np.ndarray, time: float) -> None:
        if config.reconstruct_pressure:
            p = reconstruct_pressure(v, alpha, dealias=config.dealias)
        state = PrimalState(v=v, alpha=alpha, p=p, time=time)
        report = conservation_report(state)
        if max(report.div_v_norm, report.div_alpha_norm) > DIVERGENCE_WARNING:
            log_event(
                "divergence above tolerance",
                {"time": time, "div_v": report.div_v_norm, "div_alpha": report.div_alpha_norm},
                event_type="forward.divergence",
            )
        log_event(
            f"sample t={time:.6g}",
            {"energy": report.energy, "helicity": report.helicity_total},
            event_type="forward.sample",
        )
        result.trajectory.append(state)
        result.reports.append(report)
        if on_sample is not None:
            on_sample(state, report)

    v, alpha, p = state0.v, state0.alpha, state0.p
    time = state0.time
    sample(v, alpha, p, time)

    for step in range(1, config.steps + 1):
        try:
            v_new, alpha_new = _step_arrays(v, alpha, config)
        except StepSizeError as e:
            last_good = PrimalState(v=v, alpha=alpha, p=p, time=time)
            log_error("forward run left the stable step range", e, time=time)
            raise NumericalAbortError(f"CFL bound violated at t={time:.6g}", last_state=last_good, time=time) from e

        if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(alpha_new))):
            last_good = PrimalState(v=v, alpha=alpha, p=p, time=time)
            log_error("non-finite values in forward run", f"step {step}", time=time)
            raise NumericalAbortError(f"non-finite values at step {step}", last_state=last_good, time=time)

        v, alpha = v_new, alpha_new
        time = state0.time + step * config.dt
        if step % sample_every == 0 or step == config.steps:
            sample(v, alpha, p, time)

    return result
