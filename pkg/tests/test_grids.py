import numpy as np
import pytest

from swarmherd import (
    DensityField,
    GridSpec,
    KernelParams,
    ScalarField,
    SpectralWorkspace,
    VectorField,
    circular_convolve,
    divergence,
    gradient,
    l2_norm,
    laplacian,
    mass,
    poisson_solve,
    resample,
    sample_on_grid,
)
from swarmherd.kernel import kernel_periodic
from swarmherd.torus import wrap

PI = np.pi


def band_limited(grid: GridSpec, rng, kmax=None) -> np.ndarray:
    """Random real field supported on |m_i| <= kmax (default M/4)."""
    m = grid.m
    kmax = kmax if kmax is not None else m // 4
    coeffs = np.zeros((m, m), dtype=complex)
    freqs = (np.fft.fftfreq(m) * m).astype(int)
    for i, f1 in enumerate(freqs):
        for j, f2 in enumerate(freqs):
            if abs(f1) <= kmax and abs(f2) <= kmax:
                coeffs[i, j] = rng.standard_normal() + 1j * rng.standard_normal()
    vals = np.real(np.fft.ifft2(coeffs)) * m * m
    return vals


# ---------------------------------------------------------------------------
# grid and mass
# ---------------------------------------------------------------------------


def test_grid_step_times_cells_is_period():
    for m in (16, 25, 64):
        g = GridSpec(m)
        assert g.h * m == pytest.approx(2 * PI, rel=1e-15)
        assert g.axis()[0] == -PI
        assert g.axis().shape == (m,)


def test_mass_of_normalized_uniform_is_one():
    g = GridSpec(32)
    f = DensityField(g, np.full((32, 32), 1.0 / (4 * PI**2)))
    assert mass(f) == pytest.approx(1.0, rel=1e-14)


def test_mass_of_zero_field():
    g = GridSpec(16)
    assert mass(DensityField(g, np.zeros((16, 16)))) == 0.0


def test_density_rejects_negative_beyond_ringing():
    g = GridSpec(16)
    vals = np.full((16, 16), 1.0)
    vals[0, 0] = -1e-4
    with pytest.raises(ValueError):
        DensityField(g, vals)
    vals[0, 0] = -1e-9  # within the spectral ringing allowance
    DensityField(g, vals)


def test_field_shape_and_finite_validation():
    g = GridSpec(16)
    with pytest.raises(ValueError):
        ScalarField(g, np.zeros((8, 8)))
    with pytest.raises(ValueError):
        ScalarField(g, np.full((16, 16), np.nan))
    with pytest.raises(ValueError):
        VectorField(g, np.zeros((16, 16)))


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


def test_gradient_single_mode():
    g = GridSpec(32)
    x1 = g.nodes()[..., 0]
    out = gradient(ScalarField(g, np.cos(x1)))
    np.testing.assert_allclose(out.values[..., 0], -np.sin(x1), atol=1e-12)
    np.testing.assert_allclose(out.values[..., 1], 0.0, atol=1e-12)


def test_laplacian_eigenfunctions():
    g = GridSpec(32)
    x1, x2 = g.nodes()[..., 0], g.nodes()[..., 1]
    f = ScalarField(g, np.cos(x1) + np.cos(2 * x2))
    out = laplacian(f)
    np.testing.assert_allclose(out.values, -np.cos(x1) - 4 * np.cos(2 * x2),
                               atol=1e-11)


def test_divergence_of_gradient_is_laplacian():
    g = GridSpec(32)
    rng = np.random.default_rng(5)
    f = ScalarField(g, band_limited(g, rng))
    lhs = divergence(gradient(f)).values
    rhs = laplacian(f).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())


def test_parseval_consistency():
    g = GridSpec(32)
    rng = np.random.default_rng(6)
    f = ScalarField(g, rng.standard_normal((32, 32)))
    ws = SpectralWorkspace(32)
    coef_norm_sq = 4 * PI**2 * np.sum(np.abs(ws.coeffs(f.values)) ** 2)
    assert l2_norm(f) ** 2 == pytest.approx(coef_norm_sq, rel=1e-10)


def test_coefficients_hermitian_for_real_fields():
    ws = SpectralWorkspace(16)
    rng = np.random.default_rng(8)
    c = ws.coeffs(rng.standard_normal((16, 16)))
    flipped = np.roll(np.conj(c[::-1, ::-1]), 1, axis=(0, 1))
    np.testing.assert_allclose(c, flipped, atol=1e-14)


# ---------------------------------------------------------------------------
# circular convolution
# ---------------------------------------------------------------------------


def direct_quadrature_convolution(samples: np.ndarray, rho: np.ndarray,
                                  h2: float) -> np.ndarray:
    """Independent oracle: double-sum quadrature of the convolution integral."""
    m = rho.shape[0]
    out = np.zeros((m, m, 2))
    for i1 in range(m):
        for i2 in range(m):
            acc = np.zeros(2)
            for j1 in range(m):
                for j2 in range(m):
                    acc += samples[(i1 - j1) % m, (i2 - j2) % m] * rho[j1, j2]
            out[i1, i2] = h2 * acc
    return out


def test_fft_convolution_matches_direct_quadrature():
    g = GridSpec(16)
    params = KernelParams(length=PI, images=2)
    samples = sample_on_grid(g, params)
    rng = np.random.default_rng(9)
    rho_vals = rng.uniform(0.1, 1.0, size=(16, 16))
    rho = DensityField(g, rho_vals)
    fft_result = circular_convolve(samples, rho).values
    direct = direct_quadrature_convolution(samples, rho_vals, g.cell_area)
    rel = np.abs(fft_result - direct).max() / np.abs(direct).max()
    assert rel < 1e-10


def test_odd_kernel_annihilates_uniform_density():
    g = GridSpec(64)
    samples = sample_on_grid(g, KernelParams(length=PI, images=2))
    rho = DensityField(g, np.full((64, 64), 1.0 / (4 * PI**2)))
    out = circular_convolve(samples, rho)
    np.testing.assert_allclose(out.values, 0.0, atol=1e-16)


def test_convolution_delta_identity():
    g = GridSpec(25)
    params = KernelParams(length=PI, images=2)
    samples = sample_on_grid(g, params)
    m_delta = 0.7
    rho_vals = np.zeros((25, 25))
    j = (3, 8)
    rho_vals[j] = m_delta / g.cell_area
    out = circular_convolve(samples, DensityField(g, rho_vals)).values
    expected = m_delta * np.roll(samples, shift=j, axis=(0, 1))
    np.testing.assert_allclose(out, expected, atol=1e-13)


def test_convolution_linear_in_density():
    g = GridSpec(16)
    samples = sample_on_grid(g, KernelParams(length=2.0, images=1))
    rng = np.random.default_rng(10)
    r1 = ScalarField(g, rng.standard_normal((16, 16)))
    r2 = ScalarField(g, rng.standard_normal((16, 16)))
    combo = ScalarField(g, 2.0 * r1.values - 0.5 * r2.values)
    lhs = circular_convolve(samples, combo).values
    rhs = 2.0 * circular_convolve(samples, r1).values \
        - 0.5 * circular_convolve(samples, r2).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_convolution_rejects_grid_mismatch():
    g = GridSpec(16)
    samples = sample_on_grid(GridSpec(25), KernelParams(length=PI))
    with pytest.raises(ValueError):
        circular_convolve(samples, DensityField(g, np.ones((16, 16))))


# ---------------------------------------------------------------------------
# Poisson solve
# ---------------------------------------------------------------------------


def test_poisson_single_mode():
    g = GridSpec(32)
    x1 = g.nodes()[..., 0]
    phi, removed = poisson_solve(ScalarField(g, np.cos(x1)), gain=1.0)
    np.testing.assert_allclose(phi.values, np.cos(x1), atol=1e-12)
    assert abs(removed) < 1e-14


def test_poisson_mode_two_with_gain():
    g = GridSpec(32)
    x1 = g.nodes()[..., 0]
    phi, _ = poisson_solve(ScalarField(g, np.cos(2 * x1)), gain=10.0)
    np.testing.assert_allclose(phi.values, (10.0 / 4.0) * np.cos(2 * x1), atol=1e-11)


def test_poisson_constant_source_gives_zero_potential():
    g = GridSpec(16)
    phi, removed = poisson_solve(ScalarField(g, np.full((16, 16), 3.7)), gain=2.0)
    np.testing.assert_allclose(phi.values, 0.0, atol=1e-13)
    assert removed == pytest.approx(3.7, rel=1e-12)


def test_poisson_laplacian_round_trip():
    g = GridSpec(32)
    rng = np.random.default_rng(12)
    e = rng.standard_normal((32, 32))
    gain = 7.0
    phi, _ = poisson_solve(ScalarField(g, e), gain)
    lhs = laplacian(phi).values
    rhs = -gain * (e - e.mean())
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-8


def test_poisson_requires_positive_gain():
    g = GridSpec(16)
    with pytest.raises(ValueError):
        poisson_solve(ScalarField(g, np.zeros((16, 16))), gain=0.0)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def test_resample_preserves_band_limited_fields():
    g25 = GridSpec(25)
    x = g25.nodes()
    vals = 1.0 + 0.5 * np.cos(x[..., 0]) + 0.25 * np.sin(2 * x[..., 1])
    fine = resample(ScalarField(g25, vals), 64)
    xf = GridSpec(64).nodes()
    expected = 1.0 + 0.5 * np.cos(xf[..., 0]) + 0.25 * np.sin(2 * xf[..., 1])
    np.testing.assert_allclose(fine.values, expected, atol=1e-12)


def test_resample_preserves_mass():
    g = GridSpec(25)
    rng = np.random.default_rng(14)
    f = ScalarField(g, rng.uniform(0.0, 1.0, size=(25, 25)))
    up = resample(f, 64)
    assert mass(up) == pytest.approx(mass(f), rel=1e-12)


def test_resample_round_trip_band_limited():
    g = GridSpec(16)
    rng = np.random.default_rng(15)
    f = ScalarField(g, band_limited(g, rng, kmax=4))
    back = resample(resample(f, 48), 16)
    np.testing.assert_allclose(back.values, f.values, atol=1e-11)
