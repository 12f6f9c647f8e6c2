"""
Command implementations: forward runs, dual solves, check suites, table dumps.

Each command returns the process exit status; exceptions are mapped to exit
codes by `error_handlers.run_command`.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional

import numpy as np

from ..checks import Fault, format_table, run_suites
from ..core.dual_solver import (
    BaseState,
    DualState,
    SolverSettings,
    SpaceTimeLattice,
    base_from_state,
    base_from_trajectory,
    discrete_residual,
    extract_primal,
    mapped_diagnostics,
    maximize,
)
from ..core.grid_fields import PeriodicGrid
from ..core.packed_algebra import d_slot_name, default_tables, u_slot_name
from ..core.primal_system import PrimalState
from ..core.reference_integrator import IntegratorConfig, cfl_number, integrate
from ..enums import CheckSuite, ScenarioName
from ..logging import log_event, log_error
from ..schemas.config import RunConfig
from ..schemas.reports import ConservationReport, IterationRecord
from ..utils.decorators import get_time
from ..utils.exceptions import ConfigError, NumericalAbortError
from ..utils.persistence import read_trajectory, write_csv, write_field, write_state
from ..utils.persistence.field_file import snapshot_tag
from .scenarios import build_scenario, is_exact, perturb, scenario_from_config

DEFAULT_PERTURBATION = 1e-3


def _output_dir(config: RunConfig, command: str) -> Path:
    out = Path(config.io.output_dir) / command
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(config.to_toml(), encoding="utf-8")
    return out


def integrator_config(config: RunConfig, dt: float, steps: int) -> IntegratorConfig:
    return IntegratorConfig(
        dt=dt,
        steps=steps,
        nu=config.forward.nu,
        eta=config.forward.eta,
        dealias=config.forward.dealias,
        cfl_limit=config.forward.cfl_limit,
    )


def cfl_substeps(state0: PrimalState, sample_dt: float, config: RunConfig) -> int:
    """Steps per sample interval that keep the initial CFL number below 90% of the limit."""
    cfl = cfl_number(state0.v, state0.alpha, sample_dt)
    return max(1, math.ceil(cfl / (0.9 * config.forward.cfl_limit)))


# ---- forward ---------------------------------------------------------------

@get_time
def cmd_forward(config: RunConfig) -> int:
    """Integrate the scenario forward and write snapshots plus diagnostics.csv."""
    grid = PeriodicGrid(config.grid.n)
    out = _output_dir(config, "forward")
    state0 = scenario_from_config(config.scenario, grid)
    sample_dt = config.time.forward_dt
    # an explicit time.dt is the integrator step; otherwise samples fall every T / nt
    substeps = 1 if config.time.dt is not None else cfl_substeps(state0, sample_dt, config)
    settings = integrator_config(config, dt=sample_dt / substeps, steps=config.time.forward_steps * substeps)
    log_event(
        f"forward run: {config.scenario.name} n={grid.n} dt={settings.dt} steps={settings.steps}",
        event_type="forward.start",
    )

    reports: list[ConservationReport] = []
    written = 0

    def on_sample(state: PrimalState, report: ConservationReport) -> None:
        nonlocal written
        write_state(out, state, snapshot_tag(written))
        reports.append(report)
        written += 1

    try:
        integrate(state0, settings, sample_every=config.forward.sample_every * substeps, on_sample=on_sample)
    except NumericalAbortError as e:
        if e.last_state is not None:
            write_state(out, e.last_state, "last_good")
        raise
    finally:
        write_csv(out / "diagnostics.csv", ConservationReport.csv_header(), (r.csv_row() for r in reports))

    log_event(f"forward run wrote {written} snapshots to {out}", event_type="forward.finish")
    return 0


# ---- dual ------------------------------------------------------------------

def _trajectory_base(state0: PrimalState, config: RunConfig) -> BaseState:
    """Base from a forward run sampled at the dual lattice levels."""
    dt = config.time.T / config.time.nt
    substeps = cfl_substeps(state0, dt, config)
    settings = integrator_config(config, dt=dt / substeps, steps=config.time.nt * substeps)
    result = integrate(state0, settings, sample_every=substeps)
    return base_from_trajectory(result.trajectory)


def check_base_trajectory(snapshots: list[PrimalState], config: RunConfig) -> None:
    """A stored base must hold nt + 1 snapshots on the configured grid, spaced T / nt apart."""
    path = config.dual.base_path
    nt = config.time.nt
    if len(snapshots) != nt + 1:
        raise ConfigError(f"base trajectory {path} has {len(snapshots)} snapshots, expected time.nt + 1 = {nt + 1}")
    n = snapshots[0].grid.n
    if n != config.grid.n:
        raise ConfigError(f"base trajectory {path} is on an n = {n} grid, but grid.n = {config.grid.n}")
    spacing = np.diff([s.time for s in snapshots])
    expected = config.time.T / nt
    if not np.allclose(spacing, expected, rtol=1e-9, atol=1e-12):
        raise ConfigError(
            f"base trajectory {path} has snapshot spacing {spacing.min():.6g}..{spacing.max():.6g}, "
            f"expected time.T / time.nt = {expected:.6g}"
        )


def build_base(config: RunConfig) -> BaseState:
    """Base state per dual interval together with the initial data."""
    dual = config.dual
    grid = PeriodicGrid(config.grid.n)
    nt = config.time.nt

    if dual.base is ScenarioName.FROM_FILE:
        snapshots = read_trajectory(dual.base_path)
        check_base_trajectory(snapshots, config)
        return base_from_trajectory(snapshots)

    rng = np.random.default_rng(config.scenario.seed)
    if dual.base is ScenarioName.PERTURBED_ALFVEN:
        exact = build_scenario(ScenarioName.BELTRAMI_ALFVEN, grid, amplitude=config.scenario.amplitude, row=config.scenario.row)
        shifted = perturb(exact, dual.perturbation or DEFAULT_PERTURBATION, rng)
        return base_from_state(shifted, nt, v0=exact.v, alpha0=exact.alpha)

    state0 = build_scenario(
        dual.base, grid, seed=config.scenario.seed, amplitude=config.scenario.amplitude, row=config.scenario.row
    )
    if is_exact(dual.base):
        base_state = perturb(state0, dual.perturbation, rng) if dual.perturbation > 0.0 else state0
        return base_from_state(base_state, nt, v0=state0.v, alpha0=state0.alpha)
    return _trajectory_base(state0, config)


@get_time
def cmd_dual(config: RunConfig) -> int:
    """Maximize the dual functional and write the report, D* and the mapped primal series."""
    grid = PeriodicGrid(config.grid.n)
    lattice = SpaceTimeLattice(grid=grid, nt=config.time.nt, T=config.time.T, backend=config.scheme.backend)
    base = build_base(config)
    out = _output_dir(config, "dual")
    a = config.dual.a()

    if config.dual.initial_amplitude > 0.0:
        D0 = DualState.random(lattice, config.dual.initial_amplitude, np.random.default_rng(config.scenario.seed))
    else:
        D0 = DualState.zeros(lattice)

    settings = SolverSettings(
        method=config.dual.method,
        tol=config.dual.tol,
        max_iter=config.dual.max_iter,
        history=config.dual.history,
    )
    D_star, report = maximize(D0, base, lattice, a, settings)

    write_csv(out / "solve_report.csv", IterationRecord.csv_header(), (r.csv_row() for r in report.history))

    for k in range(lattice.levels):
        t = k * lattice.dt
        write_field(out / "dual_fields" / f"lambda_{k:05d}.ifdm", D_star.lam[k], "lambda", t)
        write_field(out / "dual_fields" / f"A_{k:05d}.ifdm", D_star.A[k], "A", t)
        write_field(out / "dual_fields" / f"mu_{k:05d}.ifdm", D_star.mu[k], "mu", t)

    mapped = extract_primal(D_star, base, lattice, a)
    for k, state in enumerate(mapped):
        write_state(out / "mapped_primal", state, f"interval_{k:05d}")

    base_residual = discrete_residual(base.v, base.alpha, base.p, base, lattice)
    mapped_residual = report.mapped_residuals
    diagnostics = mapped_diagnostics(mapped, base, lattice)
    write_csv(
        out / "summary.csv",
        [
            "status", "iterations", "evaluations", "S", "grad_norm", "wall_time",
            "base_residual", "mapped_residual", "mapped_div_v", "mapped_div_alpha", "mapped_primal_residual",
        ],
        [[
            str(report.status),
            report.iterations,
            report.evaluations,
            report.history[-1].objective,
            report.history[-1].grad_norm,
            report.wall_time,
            base_residual.worst(),
            mapped_residual.worst() if mapped_residual else None,
            diagnostics.div_v,
            diagnostics.div_alpha,
            diagnostics.primal.worst() if diagnostics.primal else None,
        ]],
    )
    log_event(
        f"dual solve {report.status} after {report.iterations} iterations",
        {"base_residual": base_residual.worst(), "mapped_residual": mapped_residual.worst() if mapped_residual else None},
        event_type="dual.summary",
    )
    return 0


# ---- checks and tables -----------------------------------------------------

@get_time
def cmd_check(suite: CheckSuite | str, fault: Optional[Fault] = None) -> int:
    """Run the invariant suites and print a pass/fail table; 0 iff all pass."""
    results = run_suites(CheckSuite(suite), fault=fault)
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    if failed:
        log_error(f"{len(failed)} of {len(results)} checks failed", ", ".join(f"{r.suite}.{r.name}" for r in failed))
        return 1
    return 0


def cmd_dump_tables(out: str | Path) -> int:
    """Write the nonzeros of M and B as CSV."""
    tables = default_tables()
    out = Path(out)
    write_csv(
        out / "M.csv",
        ["I", "Gamma", "value", "I_name", "Gamma_name"],
        ([i, g, v, u_slot_name(i), d_slot_name(g)] for i, g, v in tables.m_entries),
    )
    write_csv(
        out / "B.csv",
        ["Gamma", "J", "K", "value", "Gamma_name", "J_name", "K_name"],
        ([g, j, k, v, d_slot_name(g), u_slot_name(j), u_slot_name(k)] for g, j, k, v in tables.b_entries),
    )
    log_event(f"tables written to {out}", {"M": len(tables.m_entries), "B": len(tables.b_entries)}, event_type="tables")
    return 0

