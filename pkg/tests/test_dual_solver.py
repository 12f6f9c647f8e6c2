import numpy as np
import pytest

from ifdm.cli.scenarios import alfven_state, perturb
from ifdm.core.dual_solver import (
    DualState,
    SolverSettings,
    SpaceTimeLattice,
    base_from_state,
    base_from_trajectory,
    calD_adjoint,
    compute_calD,
    discrete_residual,
    extract_primal,
    from_points,
    hessian_action,
    mapped_diagnostics,
    maximize,
    objective_and_gradient,
    second_difference,
    series_arrays,
    unpack_series,
    weak_form_residual,
)
from ifdm.core.grid_fields import PeriodicGrid
from ifdm.core.packed_algebra import D_SIZE, grad_mu_slot
from ifdm.core.primal_system import PrimalState
from ifdm.enums import OptimizerMethod, SolveStatus
from ifdm.utils.exceptions import ArgumentError, MappingFailureError


def test_lattice_geometry(lattice4):
    assert lattice4.dt == 0.125
    assert lattice4.levels == 5
    assert lattice4.weight == 0.125 / 64
    assert np.allclose(lattice4.interval_times(), [0.0625, 0.1875, 0.3125, 0.4375])


def test_lattice_needs_two_intervals():
    with pytest.raises(ArgumentError):
        SpaceTimeLattice(grid=PeriodicGrid(4), nt=1, T=1.0)


def test_flatten_round_trip(lattice4, rng):
    D = DualState.random(lattice4, 0.1, rng)
    x = D.flatten()
    assert x.size == DualState.size(lattice4)
    back = DualState.unflatten(x, lattice4)
    assert np.array_equal(back.lam, D.lam)
    assert np.array_equal(back.A, D.A)
    assert np.array_equal(back.mu, D.mu)
    assert np.all(back.lam[-1] == 0.0) and np.all(back.A[-1] == 0.0)


def test_random_dual_state_amplitude(lattice4, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    largest = max(np.max(np.abs(D.lam)), np.max(np.abs(D.A)), np.max(np.abs(D.mu)))
    assert 0.0 < largest <= 1e-2 * (1.0 + 1e-12)


def test_calD_of_zero_is_zero(lattice4):
    assert np.all(compute_calD(DualState.zeros(lattice4), lattice4) == 0.0)


def test_calD_of_linear_in_time_lambda(lattice4):
    D = DualState.zeros(lattice4)
    c = np.array([1.0, -2.0, 0.5])
    for k in range(lattice4.levels):
        D.lam[k] = (k * lattice4.dt) * c[:, None, None, None]
    calD = compute_calD(D, lattice4)
    for i in range(3):
        assert np.all(calD[:, i] == c[i])
    assert np.all(calD[:, 3:] == 0.0)


def test_calD_of_spatial_mu(lattice4):
    D = DualState.zeros(lattice4)
    x1, _, _ = lattice4.grid.coordinates()
    D.mu[:] = np.sin(2.0 * np.pi * x1)
    calD = compute_calD(D, lattice4)
    assert np.max(np.abs(calD[:, grad_mu_slot(0)] - 2.0 * np.pi * np.cos(2.0 * np.pi * x1))) <= 1e-12
    assert np.all(calD[:, 0:3] == 0.0)
    assert np.all(calD[:, 15:24] == 0.0)


def test_calD_adjoint_is_the_weighted_transpose(lattice4, rng):
    D = DualState.random(lattice4, 1.0, rng)
    E = rng.standard_normal((lattice4.nt, D_SIZE) + lattice4.grid.shape)
    lhs = lattice4.weight * np.sum(E * compute_calD(D, lattice4))
    rhs = np.dot(calD_adjoint(E, lattice4).flatten(), D.flatten())
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_objective_vanishes_at_zero(lattice4, random_base, a100):
    evaluation = objective_and_gradient(DualState.zeros(lattice4), random_base, lattice4, a100)
    assert evaluation.S == 0.0


def test_zero_is_critical_for_a_constant_base(lattice4, constant_base, a100):
    evaluation = objective_and_gradient(DualState.zeros(lattice4), constant_base, lattice4, a100)
    assert evaluation.grad_norm <= 1e-13


def test_zero_is_nearly_critical_for_the_alfven_base(a100):
    lattice = SpaceTimeLattice(grid=PeriodicGrid(16), nt=8, T=0.5)
    base = base_from_state(alfven_state(lattice.grid), lattice.nt)
    evaluation = objective_and_gradient(DualState.zeros(lattice), base, lattice, a100)
    assert evaluation.grad_norm <= 1e-8


def test_alfven_gradient_stays_at_round_off_under_step_halving(a100):
    grid = PeriodicGrid(16)
    norms = []
    for nt in (8, 16):
        lattice = SpaceTimeLattice(grid=grid, nt=nt, T=0.5)
        base = base_from_state(alfven_state(grid), nt)
        norms.append(objective_and_gradient(DualState.zeros(lattice), base, lattice, a100).grad_norm)
    coarse, fine = norms
    assert coarse <= 1e-8
    assert fine <= max(0.3 * coarse, 1e-10)


def test_gradient_matches_finite_differences(lattice4, random_base, a100, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    evaluation = objective_and_gradient(D, random_base, lattice4, a100)
    g = evaluation.gradient.flatten()
    x = D.flatten()
    scale = np.max(np.abs(g))
    eps = 1e-5
    for index in rng.choice(x.size, size=40, replace=False):
        xp, xm = x.copy(), x.copy()
        xp[index] += eps
        xm[index] -= eps
        fp = objective_and_gradient(DualState.unflatten(xp, lattice4), random_base, lattice4, a100).S
        fm = objective_and_gradient(DualState.unflatten(xm, lattice4), random_base, lattice4, a100).S
        fd = (fp - fm) / (2 * eps)
        assert abs(fd - g[index]) <= 1e-6 * max(abs(g[index]), 1e-3 * scale)


@pytest.mark.slow
def test_gradient_matches_finite_differences_in_every_component(lattice4, random_base, a100, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    g = objective_and_gradient(D, random_base, lattice4, a100).gradient.flatten()
    x = D.flatten()
    scale = np.max(np.abs(g))
    eps = 1e-5
    for index in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[index] += eps
        xm[index] -= eps
        fp = objective_and_gradient(DualState.unflatten(xp, lattice4), random_base, lattice4, a100).S
        fm = objective_and_gradient(DualState.unflatten(xm, lattice4), random_base, lattice4, a100).S
        fd = (fp - fm) / (2 * eps)
        assert abs(fd - g[index]) <= 1e-6 * max(abs(g[index]), 1e-3 * scale), f"component {index}"


def test_gradient_is_the_weak_residual_of_the_mapped_series(lattice4, random_base, a100, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    evaluation = objective_and_gradient(D, random_base, lattice4, a100)
    v, alpha, p = unpack_series(from_points(evaluation.mapping.U_hat, lattice4))
    weak = weak_form_residual(v, alpha, p, random_base.v0, random_base.alpha0, lattice4)
    assert np.max(np.abs(weak.flatten() - evaluation.gradient.flatten())) <= 1e-13


def test_closed_form_objective_agrees(lattice4, random_base, a100, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    evaluation = objective_and_gradient(D, random_base, lattice4, a100)
    assert evaluation.S_closed == pytest.approx(evaluation.S, rel=1e-12, abs=1e-14)


def test_objective_is_concave(lattice4, random_base, a100, rng):
    for _ in range(5):
        d1 = DualState.random(lattice4, 1e-2, rng)
        d2 = DualState.random(lattice4, 1e-2, rng)
        mid = DualState.unflatten(0.5 * (d1.flatten() + d2.flatten()), lattice4)
        s1 = objective_and_gradient(d1, random_base, lattice4, a100).S
        s2 = objective_and_gradient(d2, random_base, lattice4, a100).S
        sm = objective_and_gradient(mid, random_base, lattice4, a100).S
        assert 0.5 * (s1 + s2) <= sm + 1e-12 * (1.0 + abs(sm))
        assert second_difference(d1, d2, random_base, lattice4, a100) <= 1e-12


@pytest.mark.slow
def test_objective_is_concave_over_many_pairs(lattice4, random_base, a100, rng):
    for _ in range(100):
        d1 = DualState.random(lattice4, 1e-2, rng)
        d2 = DualState.random(lattice4, 1e-2, rng)
        assert second_difference(d1, d2, random_base, lattice4, a100) <= 1e-12


def test_hessian_action_matches_gradient_differences(lattice4, random_base, a100, rng):
    D = DualState.random(lattice4, 1e-2, rng)
    direction = DualState.random(lattice4, 1.0, rng)
    evaluation = objective_and_gradient(D, random_base, lattice4, a100)
    exact = hessian_action(direction, evaluation, lattice4).flatten()

    eps = 1e-4
    x, d = D.flatten(), direction.flatten()
    plus = objective_and_gradient(DualState.unflatten(x + eps * d, lattice4), random_base, lattice4, a100)
    minus = objective_and_gradient(DualState.unflatten(x - eps * d, lattice4), random_base, lattice4, a100)
    fd = (plus.gradient.flatten() - minus.gradient.flatten()) / (2 * eps)
    assert np.max(np.abs(fd - exact)) <= 1e-6 * np.max(np.abs(exact))
    assert np.dot(d, exact) <= 0.0


def test_mapping_failure_is_raised_for_huge_dual_states(lattice4, constant_base, a100, rng):
    D = DualState.random(lattice4, 1e4, rng)
    with pytest.raises(MappingFailureError):
        objective_and_gradient(D, constant_base, lattice4, a100)


def test_weak_residual_of_a_constant_series_is_zero(lattice4, constant_base):
    r = weak_form_residual(
        constant_base.v, constant_base.alpha, constant_base.p, constant_base.v0, constant_base.alpha0, lattice4
    )
    assert np.all(r.flatten() == 0.0)
    assert discrete_residual(constant_base.v, constant_base.alpha, constant_base.p, constant_base, lattice4).worst() == 0.0


def test_base_from_trajectory_averages_snapshots(lattice4):
    grid = lattice4.grid
    snapshots = []
    for k in range(3):
        state = PrimalState.zeros(grid, time=0.1 * k)
        state.v[0] = float(k)
        snapshots.append(state)
    base = base_from_trajectory(snapshots)
    assert base.nt == 2
    assert np.all(base.v[:, 0] == np.array([0.5, 1.5])[:, None, None, None])
    assert np.all(base.v0 == snapshots[0].v)


def test_extract_primal_of_zero_returns_the_base(lattice4, random_base, a100):
    states = extract_primal(DualState.zeros(lattice4), random_base, lattice4, a100)
    assert len(states) == lattice4.nt
    v, alpha, p = series_arrays(states)
    assert np.array_equal(v, random_base.v)
    assert np.array_equal(alpha, random_base.alpha)
    assert np.array_equal(p, random_base.p)
    assert states[1].time == pytest.approx(0.1875)


def test_mapped_diagnostics_of_the_base_series(lattice4, random_base, a100):
    states = extract_primal(DualState.zeros(lattice4), random_base, lattice4, a100)
    diagnostics = mapped_diagnostics(states, random_base, lattice4)
    v, alpha, p = series_arrays(states)
    assert diagnostics.weak_form == discrete_residual(v, alpha, p, random_base, lattice4)
    assert diagnostics.div_v > 0.0
    assert diagnostics.div_alpha == pytest.approx(diagnostics.weak_form.div_alpha, rel=1e-12)
    assert diagnostics.primal is not None


def test_mapped_diagnostics_of_a_constant_series_vanish(lattice4, constant_base, a100):
    states = extract_primal(DualState.zeros(lattice4), constant_base, lattice4, a100)
    diagnostics = mapped_diagnostics(states, constant_base, lattice4)
    assert diagnostics.div_v == 0.0
    assert diagnostics.div_alpha == 0.0
    assert diagnostics.weak_form.worst() == 0.0
    assert diagnostics.primal.worst() == 0.0


def test_mapped_diagnostics_skip_the_strong_residual_for_two_intervals(a100):
    lattice = SpaceTimeLattice(grid=PeriodicGrid(4), nt=2, T=0.5)
    base = base_from_state(alfven_state(lattice.grid), lattice.nt)
    states = extract_primal(DualState.zeros(lattice), base, lattice, a100)
    assert mapped_diagnostics(states, base, lattice).primal is None


def test_maximize_stops_immediately_at_a_critical_point(lattice4, constant_base, a100):
    D_star, report = maximize(DualState.zeros(lattice4), constant_base, lattice4, a100)
    assert report.status is SolveStatus.CONVERGED
    assert report.iterations == 0
    assert np.all(D_star.flatten() == 0.0)
    assert report.mapped_residuals.worst() == 0.0


def test_maximize_is_monotone(lattice4, random_base, a100, rng):
    D0 = DualState.random(lattice4, 1e-3, rng)
    _, report = maximize(D0, random_base, lattice4, a100, SolverSettings(max_iter=15))
    history = report.objective_history
    assert all(later > earlier for earlier, later in zip(history, history[1:]))
    assert report.evaluations >= len(history)


def test_maximize_rejects_an_unsolvable_start(lattice4, constant_base, a100, rng):
    with pytest.raises(MappingFailureError):
        maximize(DualState.random(lattice4, 1e4, rng), constant_base, lattice4, a100)


@pytest.mark.slow
def test_recovers_the_constant_solution(lattice4, constant_base, a100, rng):
    D0 = DualState.random(lattice4, 1e-3, rng)
    settings = SolverSettings(method=OptimizerMethod.NEWTON, tol=1e-12, max_iter=50)
    D_star, report = maximize(D0, constant_base, lattice4, a100, settings)
    assert report.converged
    assert report.history[-1].objective <= 1e-12

    v, alpha, p = series_arrays(extract_primal(D_star, constant_base, lattice4, a100))
    assert np.max(np.abs(v - constant_base.v)) <= 1e-8
    assert np.max(np.abs(alpha - constant_base.alpha)) <= 1e-8
    assert np.max(np.abs(p - constant_base.p)) <= 1e-8


@pytest.mark.slow
def test_dual_solve_improves_a_perturbed_alfven_base(a100):
    rng = np.random.default_rng(7)
    lattice = SpaceTimeLattice(grid=PeriodicGrid(8), nt=8, T=0.5)
    exact = alfven_state(lattice.grid)
    base = base_from_state(perturb(exact, 1e-3, rng), lattice.nt, v0=exact.v, alpha0=exact.alpha)

    D_star, report = maximize(DualState.zeros(lattice), base, lattice, a100, SolverSettings(tol=1e-10, max_iter=500))
    v, alpha, p = series_arrays(extract_primal(D_star, base, lattice, a100))

    base_residual = discrete_residual(base.v, base.alpha, base.p, base, lattice).worst()
    mapped_residual = discrete_residual(v, alpha, p, base, lattice).worst()
    assert mapped_residual <= 0.5 * base_residual
    assert all(later > earlier for earlier, later in zip(report.objective_history, report.objective_history[1:]))
