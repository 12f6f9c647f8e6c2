"""
Scenario library: named initial and base states.

Exact solutions of the ideal system (constant states and stationary Alfven
states on a Beltrami field) plus seeded smooth random states.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core.grid_fields import PeriodicGrid, SpectralOperators, operators_for
from ..core.primal_system import PrimalState, embed_mhd
from ..enums import Backend, ScenarioName
from ..schemas.config import ScenarioSection
from ..utils.exceptions import ArgumentError
from ..utils.helpers.settings import get_workers
from ..utils.persistence import read_trajectory

LOW_MODES = 2


def _spectral(grid: PeriodicGrid) -> SpectralOperators:
    ops = operators_for(grid.n, Backend.SPECTRAL, get_workers())
    assert isinstance(ops, SpectralOperators)
    return ops


def beltrami_field(grid: PeriodicGrid, amplitude: float = 1.0) -> np.ndarray:
    """B = (sin 2 pi x3, cos 2 pi x3, 0): curl B = 2 pi B, |B| = 1."""
    _, _, x3 = grid.coordinates()
    return amplitude * np.stack([np.sin(2.0 * np.pi * x3), np.cos(2.0 * np.pi * x3), np.zeros_like(x3)])


def smooth_random(grid: PeriodicGrid, components: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Mean-free random field restricted to integer wavenumbers |m| <= LOW_MODES."""
    ops = _spectral(grid)
    n = grid.n
    m = np.fft.fftfreq(n, d=1.0 / n)
    keep = (
        (np.abs(m)[:, None, None] <= LOW_MODES)
        & (np.abs(m)[None, :, None] <= LOW_MODES)
        & (np.arange(n // 2 + 1)[None, None, :] <= LOW_MODES)
    )
    keep[0, 0, 0] = False
    noise = rng.standard_normal(components + grid.shape)
    return ops.backward(keep * ops.forward(noise))


def solenoidal_random(grid: PeriodicGrid, rng: np.random.Generator, amplitude: float) -> np.ndarray:
    """Divergence-free, mean-free smooth vector field with max |component| = amplitude."""
    field = _spectral(grid).leray(smooth_random(grid, (3,), rng))
    return amplitude * field / np.max(np.abs(field))


def constant_state(grid: PeriodicGrid, amplitude: float = 1.0) -> PrimalState:
    state = PrimalState.zeros(grid)
    state.v[0] = amplitude
    return state


def alfven_state(grid: PeriodicGrid, amplitude: float = 1.0, row: int = 1) -> PrimalState:
    """Stationary Alfven state v = B, alpha = B in `row`, p = 0."""
    B = beltrami_field(grid, amplitude)
    return PrimalState(v=B.copy(), alpha=embed_mhd(B, row), p=grid.zeros(0))


def perturb(state: PrimalState, amplitude: float, rng: np.random.Generator) -> PrimalState:
    """Add smooth solenoidal perturbations of size `amplitude` to v and every alpha row."""
    grid = state.grid
    dv = solenoidal_random(grid, rng, amplitude)
    dalpha = np.stack([solenoidal_random(grid, rng, amplitude) for _ in range(3)])
    return PrimalState(v=state.v + dv, alpha=state.alpha + dalpha, p=state.p.copy(), time=state.time)


def random_smooth_state(grid: PeriodicGrid, rng: np.random.Generator, amplitude: float = 1.0) -> PrimalState:
    v = solenoidal_random(grid, rng, amplitude)
    alpha = np.stack([solenoidal_random(grid, rng, amplitude) for _ in range(3)])
    return PrimalState(v=v, alpha=alpha, p=grid.zeros(0))


def mhd_embedded_state(grid: PeriodicGrid, rng: np.random.Generator, amplitude: float = 1.0, row: int = 1) -> PrimalState:
    v = solenoidal_random(grid, rng, amplitude)
    B = solenoidal_random(grid, rng, amplitude)
    return PrimalState(v=v, alpha=embed_mhd(B, row), p=grid.zeros(0))


def build_scenario(
    name: ScenarioName | str,
    grid: PeriodicGrid,
    seed: int = 0,
    amplitude: float = 1.0,
    row: int = 1,
    path: Optional[str] = None,
    perturbation: float = 1e-3,
) -> PrimalState:
    """Initial state for a named scenario."""
    name = ScenarioName(name)
    rng = np.random.default_rng(seed)

    if name is ScenarioName.CONSTANT:
        return constant_state(grid, amplitude)
    if name is ScenarioName.BELTRAMI_ALFVEN:
        return alfven_state(grid, amplitude, row)
    if name is ScenarioName.PERTURBED_ALFVEN:
        return perturb(alfven_state(grid, amplitude, row), perturbation, rng)
    if name is ScenarioName.RANDOM_SMOOTH:
        return random_smooth_state(grid, rng, amplitude)
    if name is ScenarioName.MHD_EMBED:
        return mhd_embedded_state(grid, rng, amplitude, row)
    if name is ScenarioName.FROM_FILE:
        if path is None:
            raise ArgumentError("from_file scenario needs a path")
        return load_initial_state(path, grid)
    raise ArgumentError(f"unknown scenario {name}")


def scenario_from_config(section: ScenarioSection, grid: PeriodicGrid) -> PrimalState:
    return build_scenario(section.name, grid, section.seed, section.amplitude, section.row, section.path)


def load_initial_state(path: str, grid: PeriodicGrid) -> PrimalState:
    """First snapshot of a forward-run directory."""
    state = read_trajectory(path)[0]
    if state.grid != grid:
        raise ArgumentError(f"state in {path} is on a {state.grid.n}^3 grid, expected {grid.n}^3")
    return state


def is_exact(name: ScenarioName) -> bool:
    """Scenarios whose initial state is a stationary solution of the ideal system."""
    return name in (ScenarioName.CONSTANT, ScenarioName.BELTRAMI_ALFVEN)

