"""Closed-loop herder control: density error, potential solve, sampling.

The macroscopic control law asks for a flux whose divergence is -gain
times the herder density error; closing the system with a curl-free flux
turns this into a Poisson problem for a scalar potential. The herder
velocity is the flux divided by the (strictly positive) estimated density,
sampled at the individual herder positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import (
    DensityField,
    ScalarField,
    VectorField,
    gradient,
    l2_norm,
    mass,
    poisson_solve,
    workspace,
)
from .torus import TWO_PI, PI, wrap

# Herder density estimates are strictly positive by construction; the floor
# only guards the division against float underflow in near-empty regions.
DENSITY_FLOOR = 1e-12

MASS_MATCH_TOL = 1e-3


def herder_error(rho_bar_h: DensityField, rho_h_est: DensityField) -> ScalarField:
    """Pointwise difference between desired and estimated herder density.

    Both fields must carry the same mass (the control law moves mass
    around, it cannot create it), so the error is zero-mean up to rounding.
    """
    if rho_bar_h.grid.m != rho_h_est.grid.m:
        raise ValueError("desired and estimated densities live on different grids")
    m_ref = mass(rho_bar_h)
    m_est = mass(rho_h_est)
    scale = max(abs(m_ref), abs(m_est), 1e-300)
    if abs(m_ref - m_est) > MASS_MATCH_TOL * scale:
        raise ValueError(
            f"mass mismatch {m_ref:.6g} vs {m_est:.6g}: control assumes "
            "mass-matched densities"
        )
    return ScalarField(rho_bar_h.grid, rho_bar_h.values - rho_h_est.values)


@dataclass
class ControlSolution:
    """Potential, curl-free flux, and velocity for one control tick."""

    potential: ScalarField
    flux: VectorField
    velocity: VectorField
    removed_mean: float


def control_field(error: ScalarField, rho_h_est: DensityField,
                  gain: float, floor: float = DENSITY_FLOOR) -> ControlSolution:
    """Macroscopic herder velocity field for a given density error.

    Solves the potential problem, takes ``flux = grad(potential)`` -- so
    that div(flux) = -gain * (error - mean) and curl(flux) = 0 identically
    -- and divides by the estimated density.
    """
    if not gain > 0:
        raise ValueError("control gain must be positive")
    if rho_h_est.grid.m != error.grid.m:
        raise ValueError("error and density grids differ")
    if rho_h_est.values.min() <= 0:
        raise ValueError("control velocity needs a strictly positive density estimate")
    potential, removed_mean = poisson_solve(error, gain)
    flux = gradient(potential)
    denom = np.maximum(rho_h_est.values, floor)
    velocity = VectorField(error.grid, flux.values / denom[..., None])
    return ControlSolution(
        potential=potential, flux=flux, velocity=velocity, removed_mean=removed_mean
    )


def _bilinear(values: np.ndarray, pts: np.ndarray, m: int) -> np.ndarray:
    s = (pts + PI) * (m / TWO_PI)
    i0 = np.floor(s).astype(np.int64)
    frac = s - i0
    i0 %= m
    i1 = (i0 + 1) % m
    fx = frac[:, 0]
    fy = frac[:, 1]
    return (
        values[i0[:, 0], i0[:, 1]] * (1 - fx) * (1 - fy)
        + values[i1[:, 0], i0[:, 1]] * fx * (1 - fy)
        + values[i0[:, 0], i1[:, 1]] * (1 - fx) * fy
        + values[i1[:, 0], i1[:, 1]] * fx * fy
    )


def _spectral_sample(values: np.ndarray, pts: np.ndarray, m: int) -> np.ndarray:
    ws = workspace(m)
    coeffs = ws.coeffs(values)
    k = np.fft.fftfreq(m) * m
    # coefficients are phased relative to the first node at (-pi, -pi)
    e1 = np.exp(1j * (pts[:, 0:1] + PI) * k[None, :])
    e2 = np.exp(1j * (pts[:, 1:2] + PI) * k[None, :])
    return np.real(np.einsum("nk,kl,nl->n", e1, coeffs, e2))


def sample_at_herders(field: VectorField, positions: np.ndarray,
                      method: str = "bilinear") -> np.ndarray:
    """Evaluate a grid velocity field at agent positions.

    ``bilinear`` interpolates on the periodic lattice (exact at the nodes);
    ``spectral`` evaluates the trigonometric interpolant, which is more
    accurate for smooth fields but costs O(M^2) per point. Positions are
    wrapped first, so sampling is exactly periodic.
    """
    pts = np.atleast_2d(wrap(positions))
    m = field.grid.m
    if method == "bilinear":
        sampler = _bilinear
    elif method == "spectral":
        sampler = _spectral_sample
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    out = np.empty((pts.shape[0], 2))
    for c in range(2):
        out[:, c] = sampler(field.values[..., c], pts, m)
    return out


def speed_limit(commands: np.ndarray, v_max: float) -> np.ndarray:
    """Rescale commands with norm above v_max onto the v_max sphere."""
    if not v_max > 0:
        raise ValueError("speed limit must be positive")
    cmds = np.atleast_2d(np.asarray(commands, dtype=float))
    norms = np.sqrt(np.sum(cmds * cmds, axis=-1))
    factor = np.where(norms > v_max, v_max / np.where(norms > 0, norms, 1.0), 1.0)
    return cmds * factor[:, None]


def closed_loop_error_norm(error: ScalarField) -> float:
    """Grid L2 norm of the herder error, the quantity that decays at -gain."""
    return l2_norm(error)
