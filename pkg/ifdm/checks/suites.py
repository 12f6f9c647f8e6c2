"""
Invariant suites run by `ifdm check`.

Every check is a small desk-scale experiment returning a CheckResult; a check
that raises is reported as failed with the exception text.
"""

from __future__ import annotations

from typing import Callable, Optional, get_args

import numpy as np
from typing_extensions import Literal

from ..cli.scenarios import alfven_state
from ..core.dtp_mapping import (
    closed_form_integrand,
    dtp_solve,
    dtp_solve_field,
    mapped_lagrangian,
    mapping_residual,
)
from ..core.dual_solver import (
    DualState,
    SpaceTimeLattice,
    base_from_state,
    from_points,
    objective_and_gradient,
    second_difference,
    unpack_series,
    weak_form_residual,
)
from ..core.grid_fields import PeriodicGrid, curl_vector, div_vector, grad_scalar, leray_project
from ..core.packed_algebra import (
    D_SIZE,
    U_SIZE,
    OperatorTables,
    default_tables,
    diagonal_a,
    envelope_dL_dD,
    grad_lambda_slot,
    lagrangian_direct,
    lagrangian_packed,
    quadratic_term,
)
from ..core.primal_system import PrimalState, helicity, primal_residual
from ..enums import CheckSuite
from ..logging import log_event
from ..schemas.reports import CheckResult
from ..utils.exceptions import ArgumentError

Fault = Literal["corrupt-b"]
FAULTS: tuple[str, ...] = get_args(Fault)
SEED = 20240601

Check = Callable[[], tuple[bool, str]]


def corrupted_tables() -> OperatorTables:
    """B with one G11 coupling of v1 shifted; M untouched."""
    return default_tables().with_entry_offset(grad_lambda_slot(0, 0), 0, 0, 0.5)


def _run(suite: CheckSuite, name: str, check: Check) -> CheckResult:
    try:
        passed, detail = check()
    except Exception as e:
        passed, detail = False, f"{type(e).__name__}: {e}"
    log_event(f"check {suite}.{name}: {'pass' if passed else 'FAIL'}", {"detail": detail}, event_type="check")
    return CheckResult(suite=str(suite), name=name, passed=bool(passed), detail=detail)


def _alfven(n: int) -> PrimalState:
    return alfven_state(PeriodicGrid(n))


# ---- operators -------------------------------------------------------------

def operator_checks(tables: OperatorTables) -> list[tuple[str, Check]]:
    grid = PeriodicGrid(16)
    x1, _, _ = grid.coordinates()

    def derivative_oracle():
        err = np.max(np.abs(grad_scalar(np.sin(2 * np.pi * x1))[0] - 2 * np.pi * np.cos(2 * np.pi * x1)))
        return err <= 1e-12, f"max error {err:.2e}"

    def leray_idempotent():
        rng = np.random.default_rng(SEED)
        v = rng.standard_normal((3,) + grid.shape)
        once = leray_project(v)
        twice = leray_project(once)
        err = max(np.max(np.abs(twice - once)), np.max(np.abs(div_vector(once))))
        return err <= 1e-12, f"max deviation {err:.2e}"

    def beltrami_curl():
        B = _alfven(16).v
        err = np.max(np.abs(curl_vector(B) - 2 * np.pi * B))
        return err <= 1e-12, f"max error {err:.2e}"

    def beltrami_helicity():
        _, total = helicity(_alfven(16).alpha)
        err = abs(total - 1.0 / (2 * np.pi))
        return err <= 1e-10, f"helicity {total:.15f}"

    def exact_residuals():
        constant = PrimalState.zeros(grid)
        constant.v[0] = 1.0
        zero = primal_residual([constant] * 3, 0.1).worst()
        alfven = _alfven(16)
        stationary = primal_residual([alfven] * 3, 0.1).worst()
        return zero == 0.0 and stationary <= 1e-10, f"constant {zero:.1e}, alfven {stationary:.2e}"

    return [
        ("spectral derivative", derivative_oracle),
        ("leray idempotent", leray_idempotent),
        ("beltrami curl", beltrami_curl),
        ("beltrami helicity", beltrami_helicity),
        ("exact solution residuals", exact_residuals),
    ]


# ---- algebra ---------------------------------------------------------------

def algebra_checks(tables: OperatorTables) -> list[tuple[str, Check]]:
    rng = np.random.default_rng(SEED)
    P = 2000
    U = rng.standard_normal((P, U_SIZE))
    D = rng.standard_normal((P, D_SIZE))
    U_bar = rng.standard_normal((P, U_SIZE))
    a = diagonal_a(100.0, 100.0, 100.0)

    def table_shape():
        ok = tables.M.nnz == 18 and tables.is_symmetric()
        return ok, f"M nonzeros {tables.M.nnz}, B symmetric {tables.is_symmetric()}"

    def packed_vs_direct():
        direct = lagrangian_direct(U, D, U_bar, a)
        packed = lagrangian_packed(U, D, U_bar, a, tables)
        err = np.max(np.abs(direct - packed) / (1.0 + np.abs(direct)))
        return err <= 1e-13, f"max relative deviation {err:.2e}"

    def symmetric_part_only():
        dG = rng.standard_normal((P, 3, 3))
        dG = dG - np.swapaxes(dG, 1, 2)
        dH = rng.standard_normal((P, 3, 3, 3))
        dH = dH + np.swapaxes(dH, 2, 3)
        shift = np.zeros_like(D)
        shift[:, 3:12] = dG.reshape(P, 9)
        shift[:, 24:51] = dH.reshape(P, 27)
        err = np.max(np.abs(quadratic_term(U, D + shift, tables) - quadratic_term(U, D, tables)))
        scale = np.max(np.abs(quadratic_term(U, D, tables)))
        return err <= 1e-14 * max(1.0, scale), f"max change {err:.2e}"

    def envelope_fd():
        eps = 1e-6
        u, d, ub = U[:1], D[:1], U_bar[:1]
        env = envelope_dL_dD(u[0], tables)
        worst = 0.0
        for g in range(D_SIZE):
            dp = d.copy()
            dm = d.copy()
            dp[0, g] += eps
            dm[0, g] -= eps
            fd = (lagrangian_packed(u, dp, ub, a, tables)[0] - lagrangian_packed(u, dm, ub, a, tables)[0]) / (2 * eps)
            worst = max(worst, abs(fd - env[g]) / max(1.0, abs(env[g])))
        return worst <= 1e-7, f"max relative deviation {worst:.2e}"

    return [
        ("table structure", table_shape),
        ("packed matches direct", packed_vs_direct),
        ("symmetric-part dependence", symmetric_part_only),
        ("envelope derivative", envelope_fd),
    ]


# ---- mapping ---------------------------------------------------------------

def mapping_checks(tables: OperatorTables) -> list[tuple[str, Check]]:
    rng = np.random.default_rng(SEED)
    a = diagonal_a(100.0, 100.0, 100.0)

    def zero_dual():
        U_bar = rng.standard_normal(U_SIZE)
        result = dtp_solve(np.zeros(D_SIZE), U_bar, a, tables)
        return bool(np.array_equal(result.U_hat, U_bar)), "U_hat equals U_bar" if np.array_equal(result.U_hat, U_bar) else "differs"

    def pressure_case():
        D = np.zeros(D_SIZE)
        for i, d in enumerate((0.5, 0.7, 0.8)):
            D[grad_lambda_slot(i, i)] = d
        U_bar = np.zeros(U_SIZE)
        U_bar[12] = 1.0
        p_hat = dtp_solve(D, U_bar, diagonal_a(100.0, 100.0, 10.0), tables).U_hat[12]
        return abs(p_hat - 1.2) <= 1e-14, f"p_hat {p_hat!r}"

    def substitute_back():
        P = 2000
        D = rng.uniform(-1.0, 1.0, (P, D_SIZE))
        U_bar = rng.standard_normal((P, U_SIZE))
        result = dtp_solve_field(D, U_bar, a, tables)
        err = np.max(np.abs(mapping_residual(result.U_hat, D, U_bar, a)))
        return err <= 1e-11 * np.max(np.abs(D)), f"max residual {err:.2e}"

    def gershgorin():
        P = 500
        D = rng.uniform(-1.0, 1.0, (P, D_SIZE)) * (100.0 / 40.0)
        result = dtp_solve_field(D, rng.standard_normal((P, U_SIZE)), a, tables)
        return result.min_pivot >= 50.0, f"min pivot {result.min_pivot:.3f}"

    def adversarial():
        D = np.zeros((4, D_SIZE))
        D[2, grad_lambda_slot(0, 0)] = 1000.0
        result = dtp_solve_field(D, np.zeros((4, U_SIZE)), a, tables, collect_all=True)
        return [p for p, _ in result.failures] == [2], f"failures {result.failures}"

    def minimality():
        D = rng.uniform(-1.0, 1.0, D_SIZE)
        U_bar = rng.standard_normal(U_SIZE)
        U_hat = dtp_solve(D, U_bar, a, tables).U_hat
        best = lagrangian_packed(U_hat, D, U_bar, a, tables)[0]
        trial_points = U_hat + rng.standard_normal((20, U_SIZE))
        values = lagrangian_packed(trial_points, np.broadcast_to(D, (20, D_SIZE)), U_bar, a, tables)
        return bool(np.all(values >= best)), f"minimum {best:.6e}"

    def closed_form():
        P = 200
        D = rng.uniform(-1.0, 1.0, (P, D_SIZE))
        U_bar = rng.standard_normal((P, U_SIZE))
        result = dtp_solve_field(D, U_bar, a, tables)
        mapped = mapped_lagrangian(D, U_bar, a, result, tables)
        closed = closed_form_integrand(D, U_bar, result, tables)
        err = np.max(np.abs(mapped - closed) / (1.0 + np.abs(mapped)))
        return err <= 1e-12, f"max relative deviation {err:.2e}"

    return [
        ("zero dual returns base", zero_dual),
        ("pressure decoupling", pressure_case),
        ("substitute-back residual", substitute_back),
        ("pivot bound", gershgorin),
        ("adversarial failure", adversarial),
        ("envelope minimality", minimality),
        ("closed form integrand", closed_form),
    ]


# ---- dual ------------------------------------------------------------------

def dual_checks(tables: OperatorTables) -> list[tuple[str, Check]]:
    rng = np.random.default_rng(SEED)
    lattice = SpaceTimeLattice(grid=PeriodicGrid(4), nt=4, T=0.5)
    a = diagonal_a(100.0, 100.0, 100.0)

    constant = PrimalState.zeros(lattice.grid)
    constant.v[0] = 1.0
    constant_base = base_from_state(constant, lattice.nt)

    random_state = PrimalState(
        v=0.5 * rng.standard_normal((3,) + lattice.grid.shape),
        alpha=0.5 * rng.standard_normal((3, 3) + lattice.grid.shape),
        p=0.5 * rng.standard_normal(lattice.grid.shape),
    )
    random_base = base_from_state(random_state, lattice.nt)
    D = DualState.random(lattice, 1e-2, rng)

    def zero_objective():
        evaluation = objective_and_gradient(DualState.zeros(lattice), random_base, lattice, a, tables)
        return evaluation.S == 0.0, f"S(0) = {evaluation.S!r}"

    def critical_point():
        evaluation = objective_and_gradient(DualState.zeros(lattice), constant_base, lattice, a, tables)
        return evaluation.grad_norm <= 1e-13, f"|grad S(0)| = {evaluation.grad_norm:.2e}"

    def gradient_matches_weak_form():
        evaluation = objective_and_gradient(D, random_base, lattice, a, tables)
        v, alpha, p = unpack_series(from_points(evaluation.mapping.U_hat, lattice))
        weak = weak_form_residual(v, alpha, p, random_base.v0, random_base.alpha0, lattice)
        err = np.max(np.abs(weak.flatten() - evaluation.gradient.flatten()))
        return err <= 1e-13, f"max deviation {err:.2e}"

    def gradient_fd():
        evaluation = objective_and_gradient(D, random_base, lattice, a, tables)
        g = evaluation.gradient.flatten()
        x = D.flatten()
        scale = np.max(np.abs(g))
        worst = 0.0
        eps = 1e-5
        for index in rng.choice(x.size, size=40, replace=False):
            xp, xm = x.copy(), x.copy()
            xp[index] += eps
            xm[index] -= eps
            fp = objective_and_gradient(DualState.unflatten(xp, lattice), random_base, lattice, a, tables).S
            fm = objective_and_gradient(DualState.unflatten(xm, lattice), random_base, lattice, a, tables).S
            fd = (fp - fm) / (2 * eps)
            worst = max(worst, abs(fd - g[index]) / max(abs(g[index]), 1e-3 * scale))
        return worst <= 1e-6, f"max relative deviation {worst:.2e}"

    def concavity():
        worst = -np.inf
        for _ in range(5):
            d1 = DualState.random(lattice, 1e-2, rng)
            d2 = DualState.random(lattice, 1e-2, rng)
            mid = DualState.unflatten(0.5 * (d1.flatten() + d2.flatten()), lattice)
            s1 = objective_and_gradient(d1, random_base, lattice, a, tables).S
            s2 = objective_and_gradient(d2, random_base, lattice, a, tables).S
            sm = objective_and_gradient(mid, random_base, lattice, a, tables).S
            worst = max(worst, 0.5 * (s1 + s2) - sm - 1e-12 * (1.0 + abs(sm)))
            second = second_difference(d1, d2, random_base, lattice, a, tables)
            worst = max(worst, second - 1e-12)
        return worst <= 0.0, f"worst violation {worst:.2e}"

    return [
        ("zero dual objective", zero_objective),
        ("constant state critical point", critical_point),
        ("gradient matches weak form", gradient_matches_weak_form),
        ("gradient matches finite differences", gradient_fd),
        ("concavity", concavity),
    ]


SUITES = {
    CheckSuite.OPERATORS: operator_checks,
    CheckSuite.ALGEBRA: algebra_checks,
    CheckSuite.MAPPING: mapping_checks,
    CheckSuite.DUAL: dual_checks,
}


def run_suites(suite: CheckSuite, fault: Optional[Fault] = None) -> list[CheckResult]:
    """Run one suite (or all) against the default tables, or a corrupted copy when `fault` is set."""
    if fault is not None and fault not in FAULTS:
        raise ArgumentError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    tables = corrupted_tables() if fault == "corrupt-b" else default_tables()
    selected = list(SUITES) if suite is CheckSuite.ALL else [suite]
    results: list[CheckResult] = []
    for name in selected:
        for check_name, check in SUITES[name](tables):
            results.append(_run(name, check_name, check))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max([len(f"{r.suite}.{r.name}") for r in results] + [5])
    lines = [f"{'check':<{width}}  result  detail", "-" * (width + 16)]
    for r in results:
        lines.append(f"{r.suite + '.' + r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.detail}")
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} passed")
    return "\n".join(lines)
