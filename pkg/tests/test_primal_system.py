import numpy as np
import pytest

from ifdm.cli.scenarios import alfven_state, beltrami_field, constant_state, random_smooth_state, solenoidal_random
from ifdm.core.grid_fields import PeriodicGrid, div_tensor_rowwise, grad_scalar
from ifdm.core.primal_system import (
    PrimalState,
    conservation_report,
    embed_mhd,
    energy,
    extract_row,
    helicity,
    induction_rhs,
    momentum_flux,
    primal_residual,
    transport_rhs,
)
from ifdm.enums import Backend
from ifdm.utils.exceptions import (
    ArgumentError,
    IllPosedPotentialError,
    InsufficientDataError,
    NotCurlSolvableError,
    UnsupportedBackendError,
)


def constant_field(grid, values):
    return np.stack([np.full(grid.shape, float(x)) for x in values])


def test_momentum_flux_of_pressure_is_identity(grid16):
    state = PrimalState.zeros(grid16)
    state.p[:] = 1.0
    sigma = momentum_flux(state)
    assert np.array_equal(sigma, np.broadcast_to(np.eye(3)[:, :, None, None, None], sigma.shape))


def test_momentum_flux_of_embedded_field(grid16):
    B = constant_field(grid16, (1, 2, 3))
    state = PrimalState(v=grid16.zeros(1), alpha=embed_mhd(B, 1), p=grid16.zeros(0))
    sigma = momentum_flux(state)
    assert np.all(sigma[0, 0] == -1.0)
    assert np.all(sigma[0, 1] == -2.0)
    assert np.all(sigma[1, 2] == -6.0)


def test_alfven_flux_cancels(grid16):
    B = constant_field(grid16, (1, 2, 3))
    state = PrimalState(v=B.copy(), alpha=embed_mhd(B, 1), p=np.full(grid16.shape, 0.3))
    sigma = momentum_flux(state)
    assert np.array_equal(sigma, 0.3 * np.broadcast_to(np.eye(3)[:, :, None, None, None], sigma.shape))


def test_transport_vanishes_for_parallel_fields(grid16, rng):
    assert np.max(np.abs(transport_rhs(rng.standard_normal((3, 3) + grid16.shape), grid16.zeros(1)))) == 0.0

    const = transport_rhs(
        np.broadcast_to(rng.standard_normal((3, 3, 1, 1, 1)), (3, 3) + grid16.shape).copy(),
        constant_field(grid16, (0.5, -1.0, 2.0)),
    )
    assert np.max(np.abs(const)) <= 1e-14

    B = beltrami_field(grid16)
    assert np.max(np.abs(transport_rhs(embed_mhd(B, 1), B))) <= 1e-12


def test_embed_and_extract(grid16):
    B = constant_field(grid16, (1, 2, 3))
    alpha = embed_mhd(B, 1)
    assert np.array_equal(alpha[0], B)
    assert np.all(alpha[1:] == 0.0)
    assert np.all(np.einsum("ki...,kj...->ij...", alpha, alpha)[0, 1] == 2.0)
    assert np.array_equal(extract_row(embed_mhd(B, 3), 3), B)


def test_embed_rejects_bad_row(grid16):
    with pytest.raises(ArgumentError):
        embed_mhd(grid16.zeros(1), 4)


def test_helicity_of_zero_and_beltrami(grid16):
    per_row, total = helicity(grid16.zeros(2))
    assert per_row == [0.0, 0.0, 0.0] and total == 0.0

    per_row, total = helicity(embed_mhd(beltrami_field(grid16), 1))
    assert per_row[0] == pytest.approx(1.0 / (2.0 * np.pi), abs=1e-10)
    assert total == pytest.approx(per_row[0], abs=1e-14)


def test_helicity_is_gauge_invariant(grid16):
    B = beltrami_field(grid16)
    chi = B / (2.0 * np.pi)
    x1, x2, _ = grid16.coordinates()
    shifted = chi + grad_scalar(np.sin(2.0 * np.pi * x1) * np.cos(4.0 * np.pi * x2))
    reference = grid16.integrate(np.sum(chi * B, axis=0))
    gauged = grid16.integrate(np.sum(shifted * B, axis=0))
    assert gauged == pytest.approx(reference, abs=1e-12)
    assert helicity(embed_mhd(B, 1))[0][0] == pytest.approx(reference, abs=1e-10)


def test_helicity_errors(grid16):
    with pytest.raises(NotCurlSolvableError):
        helicity(embed_mhd(constant_field(grid16, (1, 0, 0)), 1))

    x1, _, _ = grid16.coordinates()
    compressive = np.stack([np.sin(2.0 * np.pi * x1), np.zeros(grid16.shape), np.zeros(grid16.shape)])
    with pytest.raises(IllPosedPotentialError):
        helicity(embed_mhd(compressive, 2))


def test_energy_examples(grid16):
    assert energy(PrimalState.zeros(grid16)) == 0.0
    assert energy(constant_state(grid16)) == pytest.approx(0.5, abs=1e-15)
    assert energy(alfven_state(grid16)) == pytest.approx(1.0, abs=1e-12)


def test_conservation_report_skips_helicity_of_non_solenoidal_alpha(grid16):
    report = conservation_report(constant_state(grid16))
    assert report.helicity_total == 0.0
    state = constant_state(grid16)
    state.alpha[0, 0] = 1.0
    report = conservation_report(state)
    assert report.helicity_per_row is None
    assert report.helicity_total is None
    assert report.div_alpha_norm == 0.0


def test_constant_trajectory_has_zero_residual(grid16):
    state = constant_state(grid16)
    residual = primal_residual([state] * 3, dt=0.1)
    assert residual.worst() == 0.0


def test_alfven_trajectory_is_stationary(grid16):
    state = alfven_state(grid16)
    residual = primal_residual([state] * 4, dt=0.05)
    assert residual.worst() <= 1e-10


@pytest.mark.slow
def test_alfven_residual_at_desk_resolution():
    state = alfven_state(PeriodicGrid(32))
    assert primal_residual([state] * 3, dt=0.05).worst() <= 1e-10


def test_residual_needs_three_levels(grid16):
    with pytest.raises(InsufficientDataError):
        primal_residual([constant_state(grid16)] * 2, dt=0.1)


def test_transport_rate_is_divergence_free(grid16, rng):
    state = random_smooth_state(grid16, rng)
    rate = transport_rhs(state.alpha, state.v)
    assert np.max(np.abs(div_tensor_rowwise(rate))) <= 1e-12 * np.max(np.abs(rate))


@pytest.mark.parametrize("backend", [Backend.SPECTRAL, Backend.FD2])
def test_embedded_transport_is_the_induction_equation(grid16, rng, backend):
    v = solenoidal_random(grid16, rng, 1.0)
    B = solenoidal_random(grid16, rng, 1.0)
    rate = transport_rhs(embed_mhd(B, 1), v, backend)
    induction = induction_rhs(B, v, backend)
    assert np.max(np.abs(rate[0] - induction)) <= 1e-13 * max(1.0, np.max(np.abs(induction)))
    assert np.all(rate[1:] == 0.0)


def test_dealiased_residual_needs_the_spectral_backend(grid16):
    with pytest.raises(UnsupportedBackendError):
        primal_residual([constant_state(grid16)] * 3, dt=0.1, backend=Backend.FD2, dealias=True)


def test_dealiased_residual_of_a_constant_trajectory_is_zero(grid16):
    residual = primal_residual([constant_state(grid16)] * 3, dt=0.1, dealias=True)
    assert residual.worst() <= 1e-14
