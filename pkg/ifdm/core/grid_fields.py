"""
Periodic grid, fields and differential operators on the unit torus.

Values are collocated at x = i*h, i = 0..n-1, on every axis. Arrays are stored
component-slowest with the three spatial axes last, ordered (x3, x2, x1) so
that x1 is the fastest-varying index:

    scalar  (n, n, n)
    vector  (3, n, n, n)        v[i]    = v_{i+1}
    tensor  (3, 3, n, n, n)     T[i, j] = T_{i+1, j+1} (row-major)

Operators treat the trailing component index of their input as the vector
index, so `grad` of a vector yields G[i, j] = d_j v_i, `div` of a tensor is
row-wise and `curl` of a tensor is row-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from cachetools import LRUCache, cached

from ..enums import Backend
from ..utils.exceptions import ArgumentError, InvalidFieldError, UnsupportedBackendError
from ..utils.helpers.settings import get_workers

COMPONENTS_BY_RANK = {0: 1, 1: 3, 2: 9}

# axis of the array that carries spatial direction d (0 -> x1)
SPATIAL_AXIS = (-1, -2, -3)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on (0,1)^3 with n points per axis."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ArgumentError(f"grid needs at least 4 points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def points(self) -> int:
        return self.n ** 3

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (x1, x2, x3), each of shape (n, n, n) in storage order."""
        x = np.arange(self.n) * self.h
        x3, x2, x1 = np.meshgrid(x, x, x, indexing="ij")
        return x1, x2, x3

    def integrate(self, values: np.ndarray) -> np.ndarray | float:
        """Uniform-weight quadrature h^3 * sum over the trailing spatial axes."""
        return self.cell_volume * np.sum(values, axis=(-3, -2, -1))

    def zeros(self, rank: int = 0) -> np.ndarray:
        return np.zeros((3,) * rank + self.shape)


@dataclass
class Field:
    """
    A named field on a grid in persistence layout (components, n, n, n).
    """

    grid: PeriodicGrid
    values: np.ndarray
    name: str = "field"
    time: float = 0.0

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[1:] != self.grid.shape:
            raise ArgumentError(f"field '{self.name}' has shape {self.values.shape}, expected (c, n, n, n)")
        if self.values.shape[0] not in COMPONENTS_BY_RANK.values():
            raise ArgumentError(f"field '{self.name}' has {self.values.shape[0]} components")
        ensure_finite(self.values, what=self.name)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @property
    def rank(self) -> int:
        return {1: 0, 3: 1, 9: 2}[self.components]

    @classmethod
    def from_array(cls, grid: PeriodicGrid, array: np.ndarray, name: str = "field", time: float = 0.0) -> "Field":
        """Wrap a scalar, vector or tensor array in natural shape."""
        array = np.asarray(array, dtype=np.float64)
        rank = array.ndim - 3
        if rank not in COMPONENTS_BY_RANK or array.shape[:rank] != (3,) * rank or array.shape[rank:] != grid.shape:
            raise ArgumentError(f"cannot store an array of shape {array.shape} as a field")
        values = array.reshape((COMPONENTS_BY_RANK[rank],) + grid.shape)
        return cls(grid=grid, values=np.ascontiguousarray(values), name=name, time=time)

    def to_array(self) -> np.ndarray:
        """Return the values in natural shape (scalar, vector or tensor)."""
        return self.values.reshape((3,) * self.rank + self.grid.shape)


def ensure_finite(*arrays: np.ndarray, what: str = "field") -> None:
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise InvalidFieldError(f"{what} contains non-finite values")


def grid_of(array: np.ndarray) -> PeriodicGrid:
    n = array.shape[-1]
    if array.ndim < 3 or array.shape[-3:] != (n, n, n):
        raise ArgumentError(f"array of shape {array.shape} is not a field on a cubic grid")
    return PeriodicGrid(n)


class DerivativeOperators:
    """
    Differential operators built on a single-direction derivative.

    Subclasses provide `derivative`; everything else is assembled from it.
    """

    backend: Backend

    def __init__(self, grid: PeriodicGrid):
        self.grid = grid

    def derivative(self, f: np.ndarray, direction: int) -> np.ndarray:
        raise NotImplementedError

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Append a derivative index: out[..., j, :, :, :] = d_j f[...]."""
        return np.stack([self.derivative(f, d) for d in range(3)], axis=-4)

    def div(self, f: np.ndarray) -> np.ndarray:
        """Contract the trailing component index: sum_j d_j f[..., j]."""
        return sum(self.derivative(f[..., d, :, :, :], d) for d in range(3))

    def curl(self, f: np.ndarray) -> np.ndarray:
        """Curl over the trailing component index: out[..., p] = e_pqr d_q f[..., r]."""
        d = self.derivative
        return np.stack(
            [
                d(f[..., 2, :, :, :], 1) - d(f[..., 1, :, :, :], 2),
                d(f[..., 0, :, :, :], 2) - d(f[..., 2, :, :, :], 0),
                d(f[..., 1, :, :, :], 0) - d(f[..., 0, :, :, :], 1),
            ],
            axis=-4,
        )

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def leray(self, v: np.ndarray) -> np.ndarray:
        raise UnsupportedBackendError(f"Leray projection is not available on the {self.backend} backend")


class FiniteDifferenceOperators(DerivativeOperators):
    """Second-order central differences."""

    backend = Backend.FD2

    def derivative(self, f: np.ndarray, direction: int) -> np.ndarray:
        axis = SPATIAL_AXIS[direction]
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * self.grid.h)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        out = np.zeros_like(f)
        for axis in SPATIAL_AXIS:
            out += np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)
        return out / self.grid.h ** 2


class SpectralOperators(DerivativeOperators):
    """
    Fourier pseudo-spectral operators using real-to-complex transforms.

    Odd derivatives drop the unsigned Nyquist mode, which keeps every first
    derivative real and exactly skew-adjoint on the grid.
    """

    backend = Backend.SPECTRAL

    def __init__(self, grid: PeriodicGrid, workers: int = 1):
        super().__init__(grid)
        self.workers = workers
        n = grid.n

        # integer wavenumbers per direction (x1, x2, x3); x1 is the halved rfft axis
        m_full = np.fft.fftfreq(n, d=1.0 / n)
        m_half = np.fft.rfftfreq(n, d=1.0 / n)
        m_axes = (m_half[None, None, :], m_full[None, :, None], m_full[:, None, None])

        self.k = tuple(2.0 * np.pi * m for m in m_axes)
        self.k_squared = self.k[0] ** 2 + self.k[1] ** 2 + self.k[2] ** 2

        kd = []
        for m in m_axes:
            md = m.copy()
            if n % 2 == 0:
                md[np.abs(md) == n // 2] = 0.0
            kd.append(2.0 * np.pi * md)
        self.kd = tuple(kd)
        self.ik = tuple(1j * k for k in self.kd)
        kd_squared = self.kd[0] ** 2 + self.kd[1] ** 2 + self.kd[2] ** 2
        self.kd_squared = kd_squared
        self._kd_squared_safe = np.where(kd_squared > 0.0, kd_squared, 1.0)

        # 2/3 rule on integer wavenumbers
        cutoff = n / 3.0
        self.dealias_mask = (
            (np.abs(m_axes[0]) < cutoff) & (np.abs(m_axes[1]) < cutoff) & (np.abs(m_axes[2]) < cutoff)
        )

    def forward(self, f: np.ndarray) -> np.ndarray:
        return scipy.fft.rfftn(f, axes=(-3, -2, -1), workers=self.workers)

    def backward(self, f_hat: np.ndarray) -> np.ndarray:
        return scipy.fft.irfftn(f_hat, s=self.grid.shape, axes=(-3, -2, -1), workers=self.workers)

    def derivative(self, f: np.ndarray, direction: int) -> np.ndarray:
        return self.backward(self.ik[direction] * self.forward(f))

    def grad(self, f: np.ndarray) -> np.ndarray:
        f_hat = self.forward(f)
        return np.stack([self.backward(self.ik[d] * f_hat) for d in range(3)], axis=-4)

    def div(self, f: np.ndarray) -> np.ndarray:
        f_hat = self.forward(f)
        return self.backward(sum(self.ik[d] * f_hat[..., d, :, :, :] for d in range(3)))

    def curl(self, f: np.ndarray) -> np.ndarray:
        f_hat = self.forward(f)
        ik = self.ik
        c = [f_hat[..., r, :, :, :] for r in range(3)]
        out_hat = np.stack(
            [
                ik[1] * c[2] - ik[2] * c[1],
                ik[2] * c[0] - ik[0] * c[2],
                ik[0] * c[1] - ik[1] * c[0],
            ],
            axis=-4,
        )
        return self.backward(out_hat)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.backward(-self.k_squared * self.forward(f))

    def leray(self, v: np.ndarray) -> np.ndarray:
        """Project the trailing vector index onto divergence-free fields; the mean is kept."""
        v_hat = self.forward(v)
        k_dot_v = sum(self.kd[d] * v_hat[..., d, :, :, :] for d in range(3)) / self._kd_squared_safe
        out_hat = np.stack([v_hat[..., d, :, :, :] - self.kd[d] * k_dot_v for d in range(3)], axis=-4)
        return self.backward(out_hat)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.backward(self.dealias_mask * self.forward(f))

    def vector_potential(self, b: np.ndarray) -> np.ndarray:
        """Divergence-free, zero-mean chi with curl chi = b (b divergence-free and mean-free)."""
        b_hat = self.forward(b)
        ik = self.ik
        c = [b_hat[..., r, :, :, :] for r in range(3)]
        chi_hat = np.stack(
            [
                ik[1] * c[2] - ik[2] * c[1],
                ik[2] * c[0] - ik[0] * c[2],
                ik[0] * c[1] - ik[1] * c[0],
            ],
            axis=-4,
        ) / self._kd_squared_safe
        return self.backward(chi_hat)

    def inverse_laplacian(self, s: np.ndarray) -> np.ndarray:
        """
        Zero-mean p with -Laplacian(p) = s, using the same wavenumbers as `div`.

        Modes with no odd-derivative wavenumber (the mean and the pure Nyquist
        modes) are set to zero, so grad p cancels the non-solenoidal part of a
        rate exactly as `leray` removes it.
        """
        s_hat = np.where(self.kd_squared > 0.0, self.forward(s) / self._kd_squared_safe, 0.0)
        return self.backward(s_hat)


@cached(cache=LRUCache(maxsize=16))
def operators_for(n: int, backend: Backend = Backend.SPECTRAL, workers: int = 1) -> DerivativeOperators:
    """Return (and memoize) the operator set for an n^3 grid."""
    grid = PeriodicGrid(n)
    if backend is Backend.SPECTRAL:
        return SpectralOperators(grid, workers=workers)
    if backend is Backend.FD2:
        return FiniteDifferenceOperators(grid)
    raise UnsupportedBackendError(f"unknown backend {backend}")


def get_operators(array: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> DerivativeOperators:
    return operators_for(grid_of(array).n, Backend(backend), get_workers())


def _checked(array: np.ndarray, rank: int, what: str) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != rank + 3 or array.shape[:rank] != (3,) * rank:
        raise ArgumentError(f"{what} must have shape {(3,) * rank + ('n', 'n', 'n')}, got {array.shape}")
    ensure_finite(array, what=what)
    return array


def grad_scalar(f: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """Gradient of a scalar field; component i is d_i f."""
    f = _checked(f, 0, "scalar field")
    return get_operators(f, backend).grad(f)


def curl_rowwise(T: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """Row-wise curl of a tensor field: out_ip = e_pqr d_q T_ir."""
    T = _checked(T, 2, "tensor field")
    return get_operators(T, backend).curl(T)


def curl_vector(v: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    v = _checked(v, 1, "vector field")
    return get_operators(v, backend).curl(v)


def div_vector(v: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    v = _checked(v, 1, "vector field")
    return get_operators(v, backend).div(v)


def div_tensor_rowwise(T: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """Row-wise divergence: component i is d_j T_ij."""
    T = _checked(T, 2, "tensor field")
    return get_operators(T, backend).div(T)


def leray_project(v: np.ndarray, backend: Backend | str = Backend.SPECTRAL) -> np.ndarray:
    """Divergence-free part of v (spectral backend only)."""
    backend = Backend(backend)
    if backend is not Backend.SPECTRAL:
        raise UnsupportedBackendError(f"Leray projection requires the spectral backend, got {backend}")
    v = np.asarray(v, dtype=np.float64)
    if v.ndim < 4 or v.shape[-4] != 3:
        raise ArgumentError(f"Leray projection needs a trailing vector index, got shape {v.shape}")
    ensure_finite(v, what="vector field")
    return get_operators(v, backend).leray(v)
