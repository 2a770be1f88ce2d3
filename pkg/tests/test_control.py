import numpy as np
import pytest

from swarmherd import (
    DensityField,
    GridSpec,
    KdeParams,
    ScalarField,
    control_field,
    curl,
    divergence,
    estimate_density,
    herder_error,
    l2_norm,
    mass,
    sample_at_herders,
    speed_limit,
    wrap,
)
from swarmherd.grids import VectorField, mean_value

PI = np.pi


@pytest.fixture
def grid():
    return GridSpec(64)


def uniform_density(grid, total=0.28):
    return DensityField(grid, np.full((grid.m, grid.m), total / (4 * PI**2)))


# ---------------------------------------------------------------------------
# herder error
# ---------------------------------------------------------------------------


def test_error_zero_when_matched(grid):
    rho = uniform_density(grid)
    err = herder_error(rho, rho)
    np.testing.assert_array_equal(err.values, 0.0)


def test_error_antisymmetric_in_arguments(grid):
    rng = np.random.default_rng(0)
    a_vals = rng.uniform(0.5, 1.5, (grid.m, grid.m))
    a_vals *= 0.28 / (a_vals.sum() * grid.cell_area)
    b = uniform_density(grid)
    a = DensityField(grid, a_vals)
    np.testing.assert_allclose(
        herder_error(a, b).values, -herder_error(b, a).values, atol=1e-15
    )


def test_error_zero_mean_after_mass_matched_estimate(grid):
    rng = np.random.default_rng(1)
    agents = rng.uniform(-PI, PI, (60, 2))
    est = estimate_density(agents, KdeParams(bandwidth=0.4, mass=0.28), grid)
    err = herder_error(uniform_density(grid), est)
    assert abs(mean_value(err)) < 1e-6 * l2_norm(err)


def test_error_near_zero_for_lattice_at_large_bandwidth(grid):
    side = 10
    coords = -PI + (np.arange(side) + 0.5) * (2 * PI / side)
    x1, x2 = np.meshgrid(coords, coords, indexing="ij")
    agents = np.stack([x1.ravel(), x2.ravel()], axis=-1)
    est = estimate_density(agents, KdeParams(bandwidth=2.0, mass=0.28), grid)
    err = herder_error(uniform_density(grid), est)
    uniform_level = 0.28 / (4 * PI**2)
    assert np.abs(err.values).max() < 0.01 * uniform_level


def test_error_rejects_mass_mismatch(grid):
    a = uniform_density(grid, total=0.28)
    b = uniform_density(grid, total=0.30)
    with pytest.raises(ValueError, match="mass"):
        herder_error(a, b)


# ---------------------------------------------------------------------------
# control field
# ---------------------------------------------------------------------------


def test_zero_error_gives_zero_velocity(grid):
    rho = uniform_density(grid)
    sol = control_field(ScalarField(grid, np.zeros((grid.m, grid.m))), rho, 10.0)
    np.testing.assert_allclose(sol.velocity.values, 0.0, atol=1e-14)


def test_single_mode_solution(grid):
    # error cos(x1) against a uniform density: potential cos(x1), flux
    # (-sin(x1), 0), velocity scaled by the inverse density level
    m_h = 0.28
    rho = uniform_density(grid, m_h)
    x1 = grid.nodes()[..., 0]
    err = ScalarField(grid, np.cos(x1))
    sol = control_field(err, rho, gain=1.0)
    np.testing.assert_allclose(sol.potential.values, np.cos(x1), atol=1e-12)
    np.testing.assert_allclose(sol.flux.values[..., 0], -np.sin(x1), atol=1e-12)
    np.testing.assert_allclose(sol.flux.values[..., 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(
        sol.velocity.values[..., 0], -(4 * PI**2 / m_h) * np.sin(x1), rtol=1e-10
    )


def test_flux_divergence_matches_error(grid):
    rng = np.random.default_rng(2)
    agents = rng.uniform(-PI, PI, (50, 2))
    est = estimate_density(agents, KdeParams(bandwidth=0.5, mass=0.3), grid)
    err = herder_error(uniform_density(grid, 0.3), est)
    gain = 10.0
    sol = control_field(err, est, gain)
    target = -gain * (err.values - err.values.mean())
    np.testing.assert_allclose(divergence(sol.flux).values, target,
                               atol=1e-8 * np.abs(target).max())


def test_flux_is_curl_free(grid):
    rng = np.random.default_rng(3)
    agents = rng.uniform(-PI, PI, (50, 2))
    est = estimate_density(agents, KdeParams(bandwidth=0.5, mass=0.3), grid)
    err = herder_error(uniform_density(grid, 0.3), est)
    sol = control_field(err, est, 5.0)
    flux_scale = np.abs(sol.flux.values).max()
    assert np.abs(curl(sol.flux).values).max() < 1e-10 * max(flux_scale, 1e-300)


def test_gain_linearity(grid):
    rho = uniform_density(grid)
    x1 = grid.nodes()[..., 0]
    err = ScalarField(grid, 0.1 * np.cos(2 * x1))
    u1 = control_field(err, rho, 1.0).velocity.values
    u2 = control_field(err, rho, 2.0).velocity.values
    np.testing.assert_allclose(u2, 2 * u1, rtol=1e-12)


def test_rejects_nonpositive_density(grid):
    vals = np.full((grid.m, grid.m), 1.0)
    vals[0, 0] = 0.0
    rho = DensityField(grid, vals)
    err = ScalarField(grid, np.zeros((grid.m, grid.m)))
    with pytest.raises(ValueError):
        control_field(err, rho, 1.0)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sampling_on_nodes_returns_node_values(grid):
    rng = np.random.default_rng(4)
    field = VectorField(grid, rng.standard_normal((grid.m, grid.m, 2)))
    idx = [(0, 0), (5, 40), (63, 1)]
    pts = np.array([grid.nodes()[i] for i in idx])
    out = sample_at_herders(field, pts)
    for row, i in enumerate(idx):
        np.testing.assert_allclose(out[row], field.values[i], atol=1e-12)


def test_sampling_constant_field(grid):
    c = np.array([0.3, -1.2])
    field = VectorField(grid, np.tile(c, (grid.m, grid.m, 1)))
    rng = np.random.default_rng(5)
    pts = rng.uniform(-PI, PI, (40, 2))
    out = sample_at_herders(field, pts)
    np.testing.assert_allclose(out, np.tile(c, (40, 1)), atol=1e-12)


def test_sampling_midpoint_of_linear_patch(grid):
    # a field linear in x1 over one cell: midpoint value = node average
    vals = np.zeros((grid.m, grid.m, 2))
    vals[..., 0] = np.arange(grid.m)[:, None]  # linear in the x1 index
    field = VectorField(grid, vals)
    node = grid.nodes()[10, 10]
    mid = node + np.array([grid.h / 2, 0.0])
    out = sample_at_herders(field, mid[None, :])
    assert out[0, 0] == pytest.approx(10.5, rel=1e-12)


def test_sampling_periodic_across_seam(grid):
    rng = np.random.default_rng(6)
    field = VectorField(grid, rng.standard_normal((grid.m, grid.m, 2)))
    pts = rng.uniform(-PI, PI, (30, 2))
    a = sample_at_herders(field, pts)
    b = sample_at_herders(field, pts + 2 * PI * np.array([1.0, -1.0]))
    np.testing.assert_array_equal(a, b)


def test_spectral_sampling_matches_bilinear_on_smooth_field(grid):
    x = grid.nodes()
    vals = np.stack([np.sin(x[..., 0]), np.cos(x[..., 1])], axis=-1)
    field = VectorField(grid, vals)
    rng = np.random.default_rng(7)
    pts = rng.uniform(-PI, PI, (20, 2))
    spectral = sample_at_herders(field, pts, method="spectral")
    exact = np.stack([np.sin(pts[:, 0]), np.cos(pts[:, 1])], axis=-1)
    np.testing.assert_allclose(spectral, exact, atol=1e-10)
    bilinear = sample_at_herders(field, pts, method="bilinear")
    np.testing.assert_allclose(bilinear, exact, atol=5e-3)


def test_sampling_unknown_method(grid):
    field = VectorField(grid, np.zeros((grid.m, grid.m, 2)))
    with pytest.raises(ValueError):
        sample_at_herders(field, np.zeros((1, 2)), method="cubic")


# ---------------------------------------------------------------------------
# speed limit
# ---------------------------------------------------------------------------


def test_speed_limit_cases():
    v_max = 2.0
    cmds = np.array([
        [0.0, 0.0],
        [0.0, 4.0],   # twice the cap
        [0.6, 0.8],   # half the cap
    ])
    out = speed_limit(cmds, v_max)
    np.testing.assert_allclose(out[0], [0.0, 0.0])
    np.testing.assert_allclose(out[1], [0.0, 2.0], rtol=1e-12)
    np.testing.assert_allclose(out[2], [0.6, 0.8], rtol=1e-12)
    norms = np.linalg.norm(out, axis=1)
    assert np.all(norms <= v_max + 1e-12)


def test_speed_limit_preserves_direction():
    rng = np.random.default_rng(8)
    cmds = rng.standard_normal((50, 2)) * 5
    out = speed_limit(cmds, 1.0)
    cross = cmds[:, 0] * out[:, 1] - cmds[:, 1] * out[:, 0]
    np.testing.assert_allclose(cross, 0.0, atol=1e-12)
    assert np.all(np.einsum("ij,ij->i", cmds, out) >= 0)


def test_speed_limit_validation():
    with pytest.raises(ValueError):
        speed_limit(np.zeros((1, 2)), 0.0)
