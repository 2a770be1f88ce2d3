"""Desired densities, numerical deconvolution, and herder-mass feasibility.

The pipeline: pick the desired target density (a von Mises bump matching a
circular goal region), derive the drift field that holds it in equilibrium,
deconvolve that field against the interaction kernel to get the herder
density that produces it, and shift the result to be nonnegative. The mass
of the shifted density is the smallest herder mass for which the problem is
solvable, and fixes the herder head count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grids import (
    DensityField,
    GridSpec,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    mass,
    resample,
)
from .kernel import KernelParams, sample_on_grid
from .torus import wrap

# Least-squares deconvolutions with a relative residual above this are
# reported as ill-posedness warnings.
RESIDUAL_WARN = 0.05


class InfeasibleError(RuntimeError):
    """The required herder mass reaches or exceeds the total available mass."""

    def __init__(self, min_mass: float):
        super().__init__(
            f"minimal herder mass {min_mass:.4f} >= 1: no herder count can "
            "realize the desired target density"
        )
        self.min_mass = min_mass


@dataclass(frozen=True, eq=False)
class GoalRegion:
    """Circular containment region: center point and radius (radians)."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", wrap(np.asarray(self.center, dtype=float)))
        if self.center.shape != (2,):
            raise ValueError("goal center must be a 2-vector")
        if not 0 < self.radius < np.pi:
            raise ValueError("goal radius must lie in (0, pi)")


@dataclass(frozen=True, eq=False)
class VonMisesSpec:
    """Periodic bump density: Z * exp(k1*cos(x1-mu) + k2*cos(x2-nu)).

    ``cross_term`` adds the unit-weight reshaping term
    cos(x1-mu)*cos(x1-nu) + sin(x2-mu)*sin(x2-nu) to the exponent; the
    separable form is the default since it matches a centered circular
    goal. Z is fixed by quadrature so the density integrates to ``mass``.
    """

    concentration: tuple[float, float]
    mean: np.ndarray
    mass: float = 1.0
    cross_term: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mean", wrap(np.asarray(self.mean, dtype=float)))
        if self.mean.shape != (2,):
            raise ValueError("mean must be a 2-vector")
        k1, k2 = self.concentration
        if not (k1 > 0 and k2 > 0):
            raise ValueError("concentrations must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def from_goal(cls, goal: GoalRegion, total_mass: float = 1.0,
                  cross_term: bool = False) -> "VonMisesSpec":
        """Concentration 3/r puts nearly all mass inside the goal circle."""
        k = 3.0 / goal.radius
        return cls(concentration=(k, k), mean=goal.center, mass=total_mass,
                   cross_term=cross_term)


def von_mises_density(spec: VonMisesSpec, grid: GridSpec,
                      goal: GoalRegion | None = None) -> DensityField:
    """Sample the bump density on the grid, normalized to spec.mass.

    If ``goal`` is given, the spec must encode it (mean at the center,
    concentration 3/radius).
    """
    if goal is not None:
        k = 3.0 / goal.radius
        if not (np.allclose(spec.mean, goal.center)
                and np.allclose(spec.concentration, (k, k))):
            raise ValueError("spec is not consistent with the goal region")
    mu, nu = spec.mean
    k1, k2 = spec.concentration
    x1 = grid.axis()[:, None]
    x2 = grid.axis()[None, :]
    expo = k1 * np.cos(x1 - mu) + k2 * np.cos(x2 - nu)
    if spec.cross_term:
        # unit-weight reshaping term; both means enter each coordinate
        expo = expo + np.cos(x1 - mu) * np.cos(x1 - nu) + np.sin(x2 - mu) * np.sin(x2 - nu)
    values = np.exp(expo - expo.max())
    values *= spec.mass / (values.sum() * grid.cell_area)
    return DensityField(grid, values)


def desired_velocity_field(rho_bar_t: DensityField, diffusion: float) -> VectorField:
    """Drift field D * grad(rho)/rho that keeps ``rho_bar_t`` in equilibrium."""
    low = rho_bar_t.values.min()
    if low <= 0:
        bad = int(np.count_nonzero(rho_bar_t.values <= 0))
        raise ValueError(
            f"desired velocity needs a strictly positive density; "
            f"{bad} grid nodes are <= 0 (min {low:.3e})"
        )
    g = gradient(rho_bar_t)
    return VectorField(rho_bar_t.grid, diffusion * g.values / rho_bar_t.values[..., None])


@dataclass
class DeconvolutionOperator:
    """Dense quadrature form of kernel convolution, assembled row-by-row.

    Row c*M^2 + i of ``matrix`` holds h^2 * K_c at the wrapped displacement
    between node i and every node j, so ``matrix @ rho.ravel()`` equals the
    circular convolution of the kernel with rho stacked component-first.
    The pseudo-inverse is applied through a cached SVD.
    """

    grid: GridSpec
    kernel: KernelParams
    matrix: np.ndarray
    _svd: tuple | None = field(default=None, repr=False)

    @classmethod
    def build(cls, grid: GridSpec, kernel: KernelParams) -> "DeconvolutionOperator":
        samples = sample_on_grid(grid, kernel)
        m = grid.m
        idx = np.arange(m * m)
        i1 = idx // m
        i2 = idx % m
        d1 = (i1[:, None] - i1[None, :]) % m
        d2 = (i2[:, None] - i2[None, :]) % m
        h2 = grid.cell_area
        rows = [h2 * samples[d1, d2, c] for c in range(2)]
        return cls(grid=grid, kernel=kernel, matrix=np.vstack(rows))

    def svd(self):
        if self._svd is None:
            self._svd = np.linalg.svd(self.matrix, full_matrices=False)
        return self._svd

    def apply(self, rho: ScalarField) -> VectorField:
        out = self.matrix @ rho.values.ravel()
        m = self.grid.m
        return VectorField(self.grid, out.reshape(2, m, m).transpose(1, 2, 0))


@dataclass
class DeconvolutionResult:
    """Minimum-norm least-squares preimage of a velocity field."""

    field: ScalarField
    residual: float  # relative, ||F h - v|| / ||v||


def deconvolve(v_bar: VectorField, op: DeconvolutionOperator,
               rcond: float = 1e-8) -> DeconvolutionResult:
    """Least-squares inversion of the convolution for a velocity field.

    The kernel is odd, so constants are in the null space and the preimage
    is defined only up to an additive offset; the minimum-norm solution is
    returned. Singular values below ``rcond`` times the largest are
    truncated. A large relative residual means the field is not realizable
    as a kernel convolution and is reported as a warning.
    """
    if v_bar.grid.m != op.grid.m:
        raise ValueError("velocity field and operator grids differ")
    b = np.concatenate([v_bar.values[..., 0].ravel(), v_bar.values[..., 1].ravel()])
    u, s, vt = op.svd()
    keep = s > rcond * s[0]
    coeffs = (u[:, keep].T @ b) / s[keep]
    x = vt[keep].T @ coeffs
    b_norm = np.linalg.norm(b)
    residual = float(np.linalg.norm(op.matrix @ x - b) / b_norm) if b_norm > 0 else 0.0
    if residual > RESIDUAL_WARN:
        warnings.warn(
            f"deconvolution residual {residual:.2%} exceeds {RESIDUAL_WARN:.0%}: "
            "velocity field is poorly realizable by this kernel",
            stacklevel=2,
        )
    m = op.grid.m
    return DeconvolutionResult(ScalarField(op.grid, x.reshape(m, m)), residual)


@dataclass
class FeasibilityResult:
    """Nonnegative herder density and the minimum mass that realizes it."""

    rho_bar_h: DensityField
    deconvolved: ScalarField
    offset: float
    min_mass: float


def minimal_herder_mass(h: ScalarField) -> FeasibilityResult:
    """Shift the deconvolved profile to be nonnegative with minimum zero.

    The shift lives in the kernel's null space, so any constant added to
    the profile produces the same drift field; the smallest admissible
    choice pins the minimum to zero and minimizes the integral.
    """
    offset = -float(h.values.min())
    rho = DensityField(h.grid, h.values + offset)
    return FeasibilityResult(
        rho_bar_h=rho, deconvolved=h, offset=offset, min_mass=mass(rho)
    )


def herder_count(n_targets: int, min_mass: float) -> int:
    """Smallest integer herder count with mass fraction >= min_mass.

    Solves n_h / (n_h + n_t) >= min_mass, i.e. n_h = n_t * m / (1 - m),
    rounded up; values within 1e-6 of an integer snap to it first so that
    exact ratios do not ceil one head too far.
    """
    if min_mass < 0:
        raise ValueError("minimal mass cannot be negative")
    if min_mass >= 1.0:
        raise InfeasibleError(min_mass)
    if n_targets <= 0:
        raise ValueError("need a positive number of targets")
    exact = n_targets * min_mass / (1.0 - min_mass)
    nearest = round(exact)
    if abs(exact - nearest) < 1e-6 * max(1.0, abs(exact)):
        return int(nearest)
    return int(math.ceil(exact))


@dataclass
class StabilityReport:
    """Log-density curvature field and the guaranteed decay rate it yields."""

    curvature: ScalarField  # div(grad(rho)/rho)
    sup_norm: float
    rate: float  # D * (2 - sup_norm)
    certified: bool  # the exponential bound only holds for sup_norm < 2


def stability_margin(rho_bar_t: DensityField, diffusion: float) -> StabilityReport:
    """Sufficient-condition check for target-density convergence.

    Computes G = div(grad(rho)/rho) spectrally; when its sup norm is below
    2 the squared target error decays at least at rate D*(2 - |G|_inf).
    Above 2 the condition is inconclusive and ``certified`` is False.
    """
    if rho_bar_t.values.min() <= 0:
        raise ValueError("stability margin needs a strictly positive density")
    g = gradient(rho_bar_t)
    ratio = VectorField(rho_bar_t.grid, g.values / rho_bar_t.values[..., None])
    curvature = divergence(ratio)
    sup = float(np.abs(curvature.values).max())
    return StabilityReport(
        curvature=curvature,
        sup_norm=sup,
        rate=diffusion * (2.0 - sup),
        certified=sup < 2.0,
    )


def feasibility_map(
    k_values: np.ndarray,
    d_values: np.ndarray,
    kernel: KernelParams,
    grid: GridSpec,
    operator: DeconvolutionOperator | None = None,
    saturate: float = 1.0,
) -> np.ndarray:
    """Minimum herder mass over a (diffusion, concentration) sweep.

    Returns a matrix with one row per diffusion value and one column per
    concentration value, saturated at ``saturate`` for plotting; values at
    the saturation level mark the infeasible region.
    """
    k_values = np.asarray(k_values, dtype=float)
    d_values = np.asarray(d_values, dtype=float)
    if np.any(k_values <= 0) or np.any(d_values <= 0):
        raise ValueError("sweep ranges must be positive")
    op = operator if operator is not None else DeconvolutionOperator.build(grid, kernel)
    out = np.empty((d_values.size, k_values.size))
    for col, k in enumerate(k_values):
        spec = VonMisesSpec(concentration=(k, k), mean=np.zeros(2), mass=1.0)
        rho = von_mises_density(spec, grid)
        for row, d in enumerate(d_values):
            v_bar = desired_velocity_field(rho, d)
            feas = minimal_herder_mass(deconvolve(v_bar, op).field)
            out[row, col] = min(feas.min_mass, saturate)
    return out


@dataclass
class HerdingPlan:
    """Everything the closed loop needs, derived from goal and population."""

    goal: GoalRegion
    spec: VonMisesSpec
    n_targets: int
    n_herders: int
    target_mass: float
    herder_mass: float
    min_mass: float
    offset: float
    residual: float
    rho_bar_t: DensityField  # control grid, integrates to target_mass
    rho_bar_h: DensityField  # control grid, integrates to herder_mass
    feasibility: FeasibilityResult  # on the deconvolution grid
    desired_velocity: VectorField  # on the deconvolution grid
    stability: StabilityReport


def plan_herders(
    goal: GoalRegion,
    n_targets: int,
    diffusion: float,
    kernel: KernelParams,
    deconv_grid: GridSpec,
    control_grid: GridSpec,
    cross_term: bool = False,
    n_herders: int | None = None,
    concentration: float | None = None,
    operator: DeconvolutionOperator | None = None,
) -> HerdingPlan:
    """Run the full feasibility pipeline and scale the reference densities.

    The drift field of the desired density does not depend on its
    normalization, so the minimal mass is computed first and the target /
    herder masses follow from the head counts; ``n_herders`` overrides the
    computed count (the reference herder density is rescaled accordingly).
    """
    if concentration is None:
        spec_unit = VonMisesSpec.from_goal(goal, 1.0, cross_term)
    else:
        spec_unit = VonMisesSpec(
            concentration=(concentration, concentration),
            mean=goal.center, mass=1.0, cross_term=cross_term,
        )
    rho_unit = von_mises_density(spec_unit, deconv_grid)
    v_bar = desired_velocity_field(rho_unit, diffusion)
    deconv = deconvolve(v_bar, operator if operator is not None
                        else DeconvolutionOperator.build(deconv_grid, kernel))
    feas = minimal_herder_mass(deconv.field)

    count = n_herders if n_herders is not None else herder_count(n_targets, feas.min_mass)
    if count < 0:
        raise ValueError("herder count cannot be negative")
    target_mass = n_targets / (n_targets + count)
    herder_mass = 1.0 - target_mass

    spec = VonMisesSpec(
        concentration=spec_unit.concentration, mean=spec_unit.mean,
        mass=target_mass, cross_term=cross_term,
    )
    rho_bar_t = von_mises_density(spec, control_grid)

    coarse = feas.rho_bar_h
    fine = resample(coarse, control_grid.m)
    values = np.clip(fine.values, 0.0, None)  # trig interpolation can ring below zero
    total = values.sum() * control_grid.cell_area
    if herder_mass > 0 and total > 0:
        values *= herder_mass / total
    rho_bar_h = DensityField(control_grid, values)

    return HerdingPlan(
        goal=goal,
        spec=spec,
        n_targets=n_targets,
        n_herders=count,
        target_mass=target_mass,
        herder_mass=herder_mass,
        min_mass=feas.min_mass,
        offset=feas.offset,
        residual=deconv.residual,
        rho_bar_t=rho_bar_t,
        rho_bar_h=rho_bar_h,
        feasibility=feas,
        desired_velocity=v_bar,
        stability=stability_margin(rho_bar_t, diffusion),
    )
