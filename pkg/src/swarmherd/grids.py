"""Uniform periodic grids, quadrature, circular convolution and spectral calculus.

All fields live on a regular M x M lattice covering [-pi, pi)^2 with step
h = 2*pi/M; index [i, j] addresses the node (-pi + i*h, -pi + j*h).
Differential operators multiply Fourier coefficients by the integer
wavenumbers of the torus, which is exact for band-limited fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .torus import PI, TWO_PI

# Spectral advection can undershoot zero by ringing; densities tolerate
# dips down to -RINGING_TOL times their peak and fail beyond that.
RINGING_TOL = 1e-8


@dataclass(frozen=True)
class GridSpec:
    """M x M uniform lattice on the periodic square."""

    m: int

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("grid needs at least 4 cells per side")

    @property
    def h(self) -> float:
        return TWO_PI / self.m

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def axis(self) -> np.ndarray:
        return -PI + np.arange(self.m) * self.h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (M, M, 2)."""
        x1, x2 = np.meshgrid(self.axis(), self.axis(), indexing="ij")
        return np.stack([x1, x2], axis=-1)


class SpectralWorkspace:
    """Integer wavenumbers and normalized transforms for one grid size.

    Coefficients follow the convention c_m = (1/M^2) * fft2(values), i.e.
    values = sum_m c_m exp(j m.x) on the nodes; coefficients of real
    fields are Hermitian-symmetric.
    """

    def __init__(self, m: int):
        self.m = m
        k = np.fft.fftfreq(m) * m
        self.k1 = k[:, None]
        self.k2 = k[None, :]
        self.ksq = self.k1 * self.k1 + self.k2 * self.k2
        inv = np.zeros_like(self.ksq)
        nonzero = self.ksq > 0
        inv[nonzero] = 1.0 / self.ksq[nonzero]
        self.inv_ksq = inv

    def coeffs(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values) / (self.m * self.m)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(coeffs)) * (self.m * self.m)


@lru_cache(maxsize=None)
def workspace(m: int) -> SpectralWorkspace:
    return SpectralWorkspace(m)


@dataclass
class ScalarField:
    """Signed scalar samples on a grid (errors, potentials, divergences)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.m, self.grid.m)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} != grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


@dataclass
class DensityField(ScalarField):
    """Nonnegative scalar field (mass per unit area)."""

    def __post_init__(self):
        super().__post_init__()
        peak = float(self.values.max())
        floor = -RINGING_TOL * peak if peak > 0 else 0.0
        if float(self.values.min()) < floor:
            raise ValueError(
                f"density minimum {self.values.min():.3e} below ringing floor {floor:.3e}"
            )


@dataclass
class VectorField:
    """Two-component field (velocities, fluxes), values shape (M, M, 2)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.m, self.grid.m, 2)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} != grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def component(self, c: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., c])


def mass(field: ScalarField) -> float:
    """Total integral h^2 * sum(values); Riemann = trapezoid on a periodic grid."""
    return float(field.values.sum() * field.grid.cell_area)


def mean_value(field: ScalarField) -> float:
    return float(field.values.mean())


def l2_norm(field) -> float:
    """Grid L2 norm sqrt(h^2 * sum(values^2)); accepts scalar or vector fields."""
    return float(np.sqrt(np.sum(field.values**2) * field.grid.cell_area))


def gradient(field: ScalarField) -> VectorField:
    ws = workspace(field.grid.m)
    fhat = np.fft.fft2(field.values)
    g1 = np.real(np.fft.ifft2(1j * ws.k1 * fhat))
    g2 = np.real(np.fft.ifft2(1j * ws.k2 * fhat))
    return VectorField(field.grid, np.stack([g1, g2], axis=-1))


def divergence(field: VectorField) -> ScalarField:
    ws = workspace(field.grid.m)
    d1 = 1j * ws.k1 * np.fft.fft2(field.values[..., 0])
    d2 = 1j * ws.k2 * np.fft.fft2(field.values[..., 1])
    return ScalarField(field.grid, np.real(np.fft.ifft2(d1 + d2)))


def laplacian(field: ScalarField) -> ScalarField:
    ws = workspace(field.grid.m)
    lhat = -ws.ksq * np.fft.fft2(field.values)
    return ScalarField(field.grid, np.real(np.fft.ifft2(lhat)))


def curl(field: VectorField) -> ScalarField:
    """Scalar curl d(v2)/dx1 - d(v1)/dx2 of a planar field."""
    ws = workspace(field.grid.m)
    c = 1j * ws.k1 * np.fft.fft2(field.values[..., 1])
    c -= 1j * ws.k2 * np.fft.fft2(field.values[..., 0])
    return ScalarField(field.grid, np.real(np.fft.ifft2(c)))


def circular_convolve(kernel_samples: np.ndarray, rho: ScalarField) -> VectorField:
    """FFT circular convolution of a two-component kernel with a density.

    ``kernel_samples`` must come from :func:`swarmherd.kernel.sample_on_grid`
    on the same grid (entry [i, j] = kernel at the displacement of node
    (i, j) from node (0, 0)); the h^2 factor is the quadrature weight, so
    the result matches the direct double-sum evaluation of the convolution
    integral.
    """
    m = rho.grid.m
    kernel_samples = np.asarray(kernel_samples, dtype=float)
    if kernel_samples.shape != (m, m, 2):
        raise ValueError(
            f"kernel samples shape {kernel_samples.shape} does not match grid "
            f"({m}, {m}, 2)"
        )
    rhat = np.fft.fft2(rho.values)
    h2 = rho.grid.cell_area
    out = np.empty((m, m, 2))
    for c in range(2):
        khat = np.fft.fft2(kernel_samples[..., c])
        out[..., c] = np.real(np.fft.ifft2(khat * rhat)) * h2
    return VectorField(rho.grid, out)


def poisson_solve(rhs: ScalarField, gain: float) -> tuple[ScalarField, float]:
    """Solve the control potential problem on the torus.

    Returns ``phi`` with Fourier coefficients gain * c_m / |m|^2 (zero-mode
    coefficient set to zero), which satisfies
    ``laplacian(phi) = -gain * (rhs - mean(rhs))`` to spectral accuracy.
    The mean of ``rhs`` is always projected out -- the periodic problem is
    solvable only for zero-mean sources -- and its magnitude is returned so
    callers can assert it is numerical noise.
    """
    if not gain > 0:
        raise ValueError("gain must be positive")
    ws = workspace(rhs.grid.m)
    chat = np.fft.fft2(rhs.values)
    removed_mean = float(np.real(chat[0, 0]) / (rhs.grid.m**2))
    phihat = gain * chat * ws.inv_ksq
    phi = np.real(np.fft.ifft2(phihat))
    return ScalarField(rhs.grid, phi), removed_mean


def _axis_destinations(freq: int, m_old: int, m_new: int) -> list[tuple[int, float]]:
    """Where one axis frequency goes when resampling, with splitting weights."""
    if m_new < m_old:
        if m_new % 2 == 0:
            half = m_new // 2
            if abs(freq) > half:
                return []
            if abs(freq) == half:
                # +half is not representable on an even grid; fold onto -half
                return [(-half, 1.0)]
            return [(freq, 1.0)]
        if abs(freq) > (m_new - 1) // 2:
            return []
        return [(freq, 1.0)]
    if m_old % 2 == 0 and freq == -(m_old // 2):
        # the unpaired highest mode of an even grid splits symmetrically
        return [(-(m_old // 2), 0.5), (m_old // 2, 0.5)]
    return [(freq, 1.0)]


def resample(field: ScalarField, m_new: int) -> ScalarField:
    """Trigonometric interpolation of a field onto another grid size.

    Zero-pads (or truncates) the Fourier coefficients; the mean, and hence
    the mass, is preserved exactly.
    """
    m_old = field.grid.m
    new_grid = GridSpec(m_new)
    if m_new == m_old:
        return ScalarField(new_grid, field.values.copy())
    ws_old = workspace(m_old)
    c_old = ws_old.coeffs(field.values)
    freqs_old = (np.fft.fftfreq(m_old) * m_old).astype(int)
    index_new = {f: i for i, f in enumerate((np.fft.fftfreq(m_new) * m_new).astype(int))}
    c_new = np.zeros((m_new, m_new), dtype=complex)
    for i, f1 in enumerate(freqs_old):
        dest1 = _axis_destinations(f1, m_old, m_new)
        if not dest1:
            continue
        for j, f2 in enumerate(freqs_old):
            dest2 = _axis_destinations(f2, m_old, m_new)
            for g1, w1 in dest1:
                for g2, w2 in dest2:
                    c_new[index_new[g1], index_new[g2]] += w1 * w2 * c_old[i, j]
    values = workspace(m_new).synthesize(c_new)
    return ScalarField(new_grid, values)
