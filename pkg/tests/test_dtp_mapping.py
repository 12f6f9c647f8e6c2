import numpy as np
import pytest

from ifdm.core.dtp_mapping import (
    closed_form_integrand,
    dtp_solve,
    dtp_solve_field,
    envelope_hessian_action,
    mapped_lagrangian,
    mapping_residual,
)
from ifdm.core.packed_algebra import (
    D_SIZE,
    P_SLOT,
    U_SIZE,
    K_at,
    diagonal_a,
    dt_a_slot,
    grad_lambda_slot,
    grad_mu_slot,
    lagrangian_packed,
)
from ifdm.utils.exceptions import InvalidInputError, MappingFailureError


@pytest.fixture
def U_bar(rng):
    return rng.standard_normal(U_SIZE)


def test_zero_dual_returns_base_exactly(U_bar, a100):
    result = dtp_solve(np.zeros(D_SIZE), U_bar, a100)
    assert np.array_equal(result.U_hat, U_bar)
    assert result.min_eigenvalue_estimate == 100.0


def test_zero_dual_field_returns_base_field(rng, a100):
    U_bar = rng.standard_normal((2, 3, U_SIZE))
    result = dtp_solve_field(np.zeros((2, 3, D_SIZE)), U_bar, a100)
    assert result.U_hat.shape == (2, 3, U_SIZE)
    assert np.array_equal(result.U_hat, U_bar)


def test_grad_mu_only_shifts_velocity(U_bar):
    a = diagonal_a(4.0, 7.0, 9.0)
    g = np.array([0.3, -0.2, 0.5])
    D = np.zeros(D_SIZE)
    for i in range(3):
        D[grad_mu_slot(i)] = g[i]
    U_hat = dtp_solve(D, U_bar, a).U_hat
    assert np.allclose(U_hat[0:3], U_bar[0:3] + g / 4.0, rtol=0.0, atol=1e-14)
    assert np.allclose(U_hat[3:], U_bar[3:], rtol=0.0, atol=1e-14)


def test_dt_A_only_shifts_alpha(U_bar):
    a = diagonal_a(4.0, 8.0, 9.0)
    Q = np.arange(1.0, 10.0).reshape(3, 3) / 10.0
    D = np.zeros(D_SIZE)
    for i in range(3):
        for j in range(3):
            D[dt_a_slot(i, j)] = Q[i, j]
    U_hat = dtp_solve(D, U_bar, a).U_hat
    assert np.allclose(U_hat[3:12], U_bar[3:12] + Q.ravel() / 8.0, rtol=0.0, atol=1e-14)
    assert np.allclose(U_hat[0:3], U_bar[0:3], rtol=0.0, atol=1e-14)
    assert np.allclose(U_hat[P_SLOT], U_bar[P_SLOT], rtol=0.0, atol=1e-14)


def test_divergence_of_lambda_sets_pressure():
    D = np.zeros(D_SIZE)
    for i, d in enumerate((0.5, 0.7, 0.8)):
        D[grad_lambda_slot(i, i)] = d
    U_bar = np.zeros(U_SIZE)
    U_bar[P_SLOT] = 1.0
    U_hat = dtp_solve(D, U_bar, diagonal_a(100.0, 100.0, 10.0)).U_hat
    assert U_hat[P_SLOT] == pytest.approx(1.2, abs=1e-14)


def test_substitute_back_residual(rng, a100):
    D = rng.uniform(-1.0, 1.0, (10_000, D_SIZE))
    U_bar = rng.standard_normal((10_000, U_SIZE))
    result = dtp_solve_field(D, U_bar, a100)
    assert result.ok
    assert np.max(np.abs(mapping_residual(result.U_hat, D, U_bar, a100))) <= 1e-11 * np.max(np.abs(D))
    assert result.max_residual <= 1e-10


def test_small_dual_keeps_pivots_bounded(rng, a100):
    D = rng.uniform(-1.0, 1.0, (500, D_SIZE)) * (100.0 / 40.0)
    result = dtp_solve_field(D, rng.standard_normal((500, U_SIZE)), a100)
    assert result.min_pivot >= 50.0


def test_large_dual_fails_at_the_offending_point(a100):
    D = np.zeros((4, D_SIZE))
    D[2, grad_lambda_slot(0, 0)] = 1000.0

    with pytest.raises(MappingFailureError) as excinfo:
        dtp_solve_field(D, np.zeros((4, U_SIZE)), a100)
    assert excinfo.value.point == 2
    assert excinfo.value.pivot <= 0.0

    result = dtp_solve_field(D, np.zeros((4, U_SIZE)), a100, collect_all=True)
    assert [point for point, _ in result.failures] == [2]
    assert np.all(np.isnan(result.U_hat[2]))
    assert np.all(np.isfinite(result.U_hat[[0, 1, 3]]))
    assert result.worst_point == 2


def test_non_finite_input_is_rejected(U_bar, a100):
    D = np.zeros(D_SIZE)
    D[5] = np.inf
    with pytest.raises(InvalidInputError):
        dtp_solve(D, U_bar, a100)


def test_mapped_point_minimizes_the_lagrangian(rng, U_bar, a100):
    D = rng.uniform(-1.0, 1.0, D_SIZE)
    U_hat = dtp_solve(D, U_bar, a100).U_hat
    best = lagrangian_packed(U_hat, D, U_bar, a100)[0]
    trial_points = U_hat + rng.standard_normal((20, U_SIZE))
    values = lagrangian_packed(trial_points, np.broadcast_to(D, (20, D_SIZE)), U_bar, a100)
    assert np.all(values >= best)


def test_resolving_from_the_mapped_point_stays_stationary(rng, U_bar, a100):
    D = rng.uniform(-1.0, 1.0, D_SIZE)
    first = dtp_solve(D, U_bar, a100)
    second = dtp_solve(D, first.U_hat, a100)
    scale = max(1.0, np.max(np.abs(D)))
    assert second.residual_norm <= 1e-10 * scale


def test_closed_form_matches_mapped_lagrangian(rng, a100):
    D = rng.uniform(-1.0, 1.0, (200, D_SIZE))
    U_bar = rng.standard_normal((200, U_SIZE))
    result = dtp_solve_field(D, U_bar, a100)
    mapped = mapped_lagrangian(D, U_bar, a100, result)
    closed = closed_form_integrand(D, U_bar, result)
    assert np.max(np.abs(mapped - closed) / (1.0 + np.abs(mapped))) <= 1e-12


def test_envelope_hessian_is_negative_semidefinite(rng, a100):
    D = rng.uniform(-1.0, 1.0, (50, D_SIZE))
    result = dtp_solve_field(D, rng.standard_normal((50, U_SIZE)), a100)
    dD = rng.standard_normal((50, D_SIZE))
    curvature = np.sum(dD * envelope_hessian_action(dD, result), axis=1)
    assert np.all(curvature <= 1e-12)


def test_K_definiteness_matches_the_pivots(rng, a100):
    D = rng.uniform(-1.0, 1.0, D_SIZE) * 2.0
    result = dtp_solve(D, np.zeros(U_SIZE), a100)
    smallest = np.linalg.eigvalsh(K_at(D, a100))[0]
    assert smallest > 0.0
    assert result.min_eigenvalue_estimate >= smallest * (1.0 - 1e-12)
