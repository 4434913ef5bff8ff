"""Path-integral solutions of the heat/Schrodinger Cauchy problem, plus the
anomaly experiment separating the action variation from the trace term.

Four evaluation routes for u(t, q):

* pde_solve: implicit-midpoint (Crank-Nicolson) finite differences, the
  reference oracle.  Damped mode solves du/dt = (1/2) Delta_C u - eta u,
  oscillatory mode solves du/dt = i ((1/2) Delta_C u + eta u), C = B^{-1}.
* feynman_mc: Feynman-Kac Monte Carlo over discretized Wiener paths
  (damped weight exp(-sum eta dt) only).
* exact_gaussian_propagator: closed-form Gaussian integral for quadratic eta
  and Gaussian-times-polynomial initial data; no sampling error.
* oscillatory_check: direct quadrature of the oscillatory time-sliced kernel
  at n_steps <= 3 via a 45-degree contour rotation that makes the integrand
  absolutely convergent.

anomaly_experiment samples paths, evaluates the two summands of the weighted
measure's logarithmic derivative (action variation and Jacobian trace) for
several Lagrangians, and checks the determinant-trace duality plus the
pushforward non-invariance of the weighted measure via the density ODE.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import nquad
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .action import DiscreteAction, Lagrangian, WLogDerivativeMode
from .fields import TransformationFamily
from .flows import (
    family_generator,
    family_velocity,
    jacobian_log_det,
    trace_integral_along_flow,
)
from .lattice import TimeLattice, cm_gram, path_from_flat
from .measures import (
    Estimate,
    GaussianMeasure,
    QuadratureKind,
    QuadratureSpec,
    _mc_columns,
    log_derivative_along_field,
    sample,
    wiener_measure,
)

Array = np.ndarray


class PropagatorMethod(str, Enum):
    PDE = "pde"
    MC_EUCLIDEAN = "mc_euclidean"
    EXACT_GAUSSIAN = "exact_gaussian"
    OSCILLATORY_QUADRATURE = "oscillatory_quadrature"


@dataclass(frozen=True)
class GaussianInitialData:
    """f0(x) = exp(-(1/2) x^T quad x + lin^T x + const) * (poly0 + poly1^T x + x^T poly2 x).

    quad must be symmetric positive definite; poly2 symmetric.  The quadratic
    polynomial factor is a plain form, not halved.
    """

    quad: Array
    lin: Array
    const: float = 0.0
    poly0: float = 1.0
    poly1: Optional[Array] = None
    poly2: Optional[Array] = None

    def __post_init__(self) -> None:
        quad = np.asarray(self.quad, dtype=float)
        lin = np.asarray(self.lin, dtype=float).reshape(-1)
        d = lin.size
        if quad.shape != (d, d):
            raise ValueError("quad and lin disagree on dimension")
        if not np.allclose(quad, quad.T):
            raise ValueError("quad must be symmetric")
        np.linalg.cholesky(quad)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        p1 = np.zeros(d) if self.poly1 is None else np.asarray(self.poly1, dtype=float).reshape(d)
        p2 = np.zeros((d, d)) if self.poly2 is None else np.asarray(self.poly2, dtype=float)
        if p2.shape != (d, d) or not np.allclose(p2, p2.T):
            raise ValueError("poly2 must be a symmetric (d, d) matrix")
        object.__setattr__(self, "poly1", p1)
        object.__setattr__(self, "poly2", p2)

    @property
    def dim_q(self) -> int:
        return self.lin.size

    def evaluate(self, x: Array) -> Array:
        """Batched evaluation; accepts complex positions (analytic continuation)."""
        x = np.atleast_2d(np.asarray(x))
        expo = -0.5 * np.einsum("ij,ij->i", x, x @ self.quad) + x @ self.lin + self.const
        poly = self.poly0 + x @ self.poly1 + np.einsum("ij,ij->i", x, x @ self.poly2)
        return np.exp(expo) * poly


@dataclass(frozen=True)
class InitialCondition:
    """Initial data for the Cauchy problem.

    evaluator maps a batch of positions (possibly complex) to values.
    gaussian_data, when present, certifies the closed Gaussian-polynomial
    form required by exact_gaussian_propagator and oscillatory_check.
    """

    evaluator: Callable[[Array], Array]
    gaussian_data: Optional[GaussianInitialData] = None
    label: str = ""


def gaussian_bump(
    dim_q: int, amplitude: float = 1.0, center=0.0, sigma: float = 1.0
) -> InitialCondition:
    """Isotropic Gaussian bump a * exp(-|x - c|^2 / (2 sigma^2))."""
    if sigma <= 0 or amplitude <= 0:
        raise ValueError("amplitude and sigma must be positive")
    c = np.broadcast_to(np.asarray(center, dtype=float), (dim_q,)).copy()
    data = GaussianInitialData(
        quad=np.eye(dim_q) / sigma**2,
        lin=c / sigma**2,
        const=float(-c @ c / (2.0 * sigma**2) + np.log(amplitude)),
    )
    return InitialCondition(
        evaluator=data.evaluate,
        gaussian_data=data,
        label=f"gaussian_bump(a={amplitude}, sigma={sigma})",
    )


def constant_initial_condition(dim_q: int, value: float = 1.0) -> InitialCondition:
    def evaluator(x: Array) -> Array:
        x = np.atleast_2d(np.asarray(x))
        return np.full(x.shape[0], value, dtype=x.dtype if np.iscomplexobj(x) else float)

    return InitialCondition(evaluator=evaluator, gaussian_data=None, label=f"constant({value})")


@dataclass(frozen=True)
class SchrodingerProblem:
    """Cauchy problem data: Lagrangian split, initial condition, final time.

    The potential-like part eta and the kinetic matrix come from the
    Lagrangian; dim_q of 1 or 2 is supported by the PDE oracle.
    """

    dim_q: int
    lagrangian: Lagrangian
    f0: InitialCondition
    t_final: float
    label: str = ""

    def __post_init__(self) -> None:
        if self.dim_q not in (1, 2):
            raise ValueError("dim_q must be 1 or 2")
        if self.lagrangian.dim_q != self.dim_q:
            raise ValueError("Lagrangian dimension does not match dim_q")
        if self.t_final <= 0:
            raise ValueError("t_final must be positive")

    @property
    def kinetic_matrix(self) -> Array:
        return self.lagrangian.kinetic_matrix

    def eta_values(self, positions: Array) -> Array:
        """eta at rest (zero velocity argument), batched."""
        positions = np.atleast_2d(positions)
        zeros = np.zeros_like(positions)
        return np.asarray(self.lagrangian.eta(positions, zeros))


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform box [-extent, extent]^dim_q with an odd point count per axis."""

    dim_q: int
    extent: float
    n_points: int

    def __post_init__(self) -> None:
        if self.dim_q not in (1, 2):
            raise ValueError("dim_q must be 1 or 2")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError("n_points must be an odd integer >= 3")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / (self.n_points - 1)

    @property
    def axis(self) -> Array:
        return np.linspace(-self.extent, self.extent, self.n_points)

    def points(self) -> Array:
        """All grid points as a (n_points^dim_q, dim_q) array, row-major in axes."""
        if self.dim_q == 1:
            return self.axis.reshape(-1, 1)
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)


@dataclass(frozen=True)
class PropagatorResult:
    """Grid solution carrying its method tag and the boundary-mass diagnostic."""

    values: Array
    method: PropagatorMethod
    error_estimate: float
    wall_time: float
    seed: int = 0


def _second_difference(n_interior: int, h: float) -> sp.spmatrix:
    main = np.full(n_interior, -2.0)
    off = np.ones(n_interior - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _first_difference(n_interior: int, h: float) -> sp.spmatrix:
    off = np.ones(n_interior - 1)
    return sp.diags([-off, off], [-1, 1], format="csr") / (2.0 * h)


def _spatial_operator(
    p: SchrodingerProblem, grid: SpaceGrid, mode: WLogDerivativeMode
) -> tuple[sp.spmatrix, Array]:
    """Generator of the semigroup on interior points, plus the interior mesh."""
    c_matrix = np.linalg.inv(p.kinetic_matrix)
    n_int = grid.n_points - 2
    interior_axis = grid.axis[1:-1]
    d2 = _second_difference(n_int, grid.spacing)
    if p.dim_q == 1:
        lap = 0.5 * c_matrix[0, 0] * d2
        points = interior_axis.reshape(-1, 1)
    else:
        d1 = _first_difference(n_int, grid.spacing)
        eye = sp.identity(n_int, format="csr")
        lap = 0.5 * (
            c_matrix[0, 0] * sp.kron(d2, eye)
            + c_matrix[1, 1] * sp.kron(eye, d2)
            + 2.0 * c_matrix[0, 1] * sp.kron(d1, d1)
        )
        xx, yy = np.meshgrid(interior_axis, interior_axis, indexing="ij")
        points = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)
    eta_diag = sp.diags(p.eta_values(points))
    if mode is WLogDerivativeMode.EUCLIDEAN:
        op = lap - eta_diag
    else:
        op = 1j * (lap + eta_diag)
    return op.tocsc(), points


def _boundary_mass_fraction(values: Array, dim_q: int) -> float:
    mag = np.abs(values)
    total = float(mag.sum())
    if total == 0.0:
        return 0.0
    if dim_q == 1:
        ring = float(mag[1] + mag[-2])
    else:
        inner = mag[1:-1, 1:-1]
        ring = float(inner[0, :].sum() + inner[-1, :].sum() + inner[1:-1, 0].sum() + inner[1:-1, -1].sum())
    return ring / total


def pde_solve(
    p: SchrodingerProblem, grid: SpaceGrid, lattice: TimeLattice, mode: WLogDerivativeMode
) -> PropagatorResult:
    """Implicit-midpoint finite-difference reference solution on the grid.

    Zero boundary values at the box edge; the returned error_estimate is the
    fraction of |u| mass sitting on the interior ring next to the boundary at
    the final time, and a warning fires when it exceeds 1e-6 (grid too small).
    Oscillatory mode supports dim_q = 1 only.
    """
    start = time.perf_counter()
    if grid.dim_q != p.dim_q or lattice.dim_q != p.dim_q:
        raise ValueError("problem, grid, and lattice disagree on spatial dimension")
    if not np.isclose(lattice.t_final, p.t_final):
        raise ValueError("lattice horizon does not match the problem's t_final")
    if mode is WLogDerivativeMode.REAL_TIME and p.dim_q != 1:
        raise ValueError("oscillatory-mode PDE solves support dim_q = 1 only")
    if p.lagrangian.velocity_coupled:
        raise ValueError("velocity-coupled eta has no PDE form here")

    op, points = _spatial_operator(p, grid, mode)
    u = np.asarray(p.f0.evaluator(points))
    if mode is WLogDerivativeMode.REAL_TIME:
        u = u.astype(complex)
    else:
        u = u.astype(float)
    eye = sp.identity(op.shape[0], format="csc")
    half = 0.5 * lattice.dt
    forward = (eye + half * op).tocsr()
    backward = splu((eye - half * op).tocsc())
    for _ in range(lattice.n_steps):
        u = backward.solve(forward @ u)

    n = grid.n_points
    if p.dim_q == 1:
        full = np.zeros(n, dtype=u.dtype)
        full[1:-1] = u
    else:
        full = np.zeros((n, n), dtype=u.dtype)
        full[1:-1, 1:-1] = u.reshape(n - 2, n - 2)
    fraction = _boundary_mass_fraction(full, p.dim_q)
    if fraction > 1e-6:
        warnings.warn(
            f"boundary mass fraction {fraction:.3e} exceeds 1e-6; grid extent likely too small",
            stacklevel=2,
        )
    return PropagatorResult(
        values=full,
        method=PropagatorMethod.PDE,
        error_estimate=fraction,
        wall_time=time.perf_counter() - start,
        seed=0,
    )


def feynman_mc(
    p: SchrodingerProblem, q_point, lattice: TimeLattice, mc: QuadratureSpec
) -> Estimate:
    """Feynman-Kac Monte Carlo value of u(t_final, q_point), damped weight.

    Samples discretized Wiener paths psi under the kinetic-weighted Gaussian
    measure and averages exp(-sum_j eta(psi_{j-1}+q, dpsi_j/dt) dt) *
    f0(psi_n + q).  Deterministic for fixed (seed, workers).
    """
    if lattice.dim_q != p.dim_q:
        raise ValueError("lattice and problem disagree on spatial dimension")
    if not np.isclose(lattice.t_final, p.t_final):
        raise ValueError("lattice horizon does not match the problem's t_final")
    if mc.kind is not QuadratureKind.MONTE_CARLO:
        raise ValueError("feynman_mc requires a Monte Carlo quadrature spec")
    q_point = np.asarray(q_point, dtype=float).reshape(p.dim_q)
    m = wiener_measure(lattice, p.kinetic_matrix)
    n, d, dt = lattice.n_steps, lattice.dim_q, lattice.dt

    def rows(x: Array) -> Array:
        paths = x.reshape(-1, n, d)
        rows_count = paths.shape[0]
        left = np.concatenate([np.zeros((rows_count, 1, d)), paths[:, :-1, :]], axis=1)
        vel = np.diff(paths, axis=1, prepend=np.zeros((rows_count, 1, d))) / dt
        eta_rows = np.asarray(
            p.lagrangian.eta(left.reshape(-1, d) + q_point, vel.reshape(-1, d)), dtype=float
        ).reshape(rows_count, n)
        weight = np.exp(-dt * eta_rows.sum(axis=1))
        f0_vals = np.asarray(p.f0.evaluator(paths[:, -1, :] + q_point))
        if np.iscomplexobj(f0_vals):
            raise ValueError("feynman_mc evaluates the damped regime; f0 must be real-valued")
        return (weight * f0_vals).reshape(-1, 1)

    means, ses = _mc_columns(m, mc, rows, 1)
    return Estimate(float(means[0]), float(ses[0]))


def exact_gaussian_propagator(p: SchrodingerProblem, q_point, lattice: TimeLattice) -> complex:
    """Closed-form damped-regime value for quadratic eta and Gaussian f0.

    The weight exp(-A(psi)) times the Gaussian path density is itself an
    unnormalized Gaussian in the stacked path vector, so the integral reduces
    to triangular-factorization log-determinants and one linear solve; a
    quadratic polynomial factor on f0 is folded in through the first two
    moments of the completed-square Gaussian.  No sampling error.
    """
    qe = p.lagrangian.quadratic_eta
    if qe is None:
        raise ValueError("exact_gaussian_propagator requires a certified quadratic eta")
    data = p.f0.gaussian_data
    if data is None:
        raise ValueError("exact_gaussian_propagator requires Gaussian-polynomial initial data")
    if lattice.dim_q != p.dim_q:
        raise ValueError("lattice and problem disagree on spatial dimension")
    if not np.isclose(lattice.t_final, p.t_final):
        raise ValueError("lattice horizon does not match the problem's t_final")
    q_point = np.asarray(q_point, dtype=float).reshape(p.dim_q)

    n, d, dt = lattice.n_steps, lattice.dim_q, lattice.dt
    gram = cm_gram(lattice, p.kinetic_matrix).matrix
    big = gram.copy()
    rhs = np.zeros(n * d)
    m_mat, g_vec, c_val = qe.matrix, qe.linear, qe.constant
    lin_slot = -dt * (m_mat @ q_point + g_vec)
    for j in range(n - 1):
        sl = slice(j * d, (j + 1) * d)
        big[sl, sl] += dt * m_mat
        rhs[sl] = lin_slot
    last = slice((n - 1) * d, n * d)
    big[last, last] += data.quad
    rhs[last] += data.lin - data.quad @ q_point
    const = (
        -n * dt * (0.5 * q_point @ m_mat @ q_point + g_vec @ q_point + c_val)
        - 0.5 * q_point @ data.quad @ q_point
        + data.lin @ q_point
        + data.const
    )

    chol_gram = np.linalg.cholesky(gram)
    chol_big = np.linalg.cholesky(big)
    log_det_ratio = 2.0 * (
        np.sum(np.log(np.diag(chol_gram))) - np.sum(np.log(np.diag(chol_big)))
    )
    factor = cho_factor(big, lower=True)
    mu = cho_solve(factor, rhs)
    value = np.exp(0.5 * log_det_ratio + const + 0.5 * rhs @ mu)

    mean_last = mu[last] + q_point
    poly_expect = data.poly0 + data.poly1 @ mean_last + mean_last @ data.poly2 @ mean_last
    if np.any(data.poly2):
        cols = np.zeros((n * d, d))
        cols[last, :] = np.eye(d)
        cov_last = cho_solve(factor, cols)[last, :]
        poly_expect += float(np.sum(data.poly2 * cov_last))
    return complex(value * poly_expect)


def free_evolution_closed_form(
    amplitude: float,
    center: float,
    sigma: float,
    kinetic_scalar: float,
    t_final: float,
    q: float,
    mode: WLogDerivativeMode,
) -> complex:
    """eta = 0 evolution of a one-dimensional Gaussian bump, both modes.

    Convolution with the (possibly Fresnel) kernel of variance t/b: the bump
    a exp(-(x-c)^2 / (2 sigma^2)) evolves to
    a sqrt(sigma^2 / (sigma^2 + v)) exp(-(q-c)^2 / (2 (sigma^2 + v))) where
    v = t/b in the damped mode and v = i t/b in the oscillatory mode.
    """
    v = t_final / kinetic_scalar
    spread = sigma**2 + (1j * v if mode is WLogDerivativeMode.REAL_TIME else v)
    return complex(
        amplitude * np.sqrt(sigma**2 / spread) * np.exp(-((q - center) ** 2) / (2.0 * spread))
    )


_MAX_OSCILLATORY_STEPS = 3


def oscillatory_check(p: SchrodingerProblem, q_point, lattice: TimeLattice) -> complex:
    """Direct quadrature of the oscillatory time-sliced kernel, n_steps <= 3.

    Integrates over the contour x_j = e^{i pi/4} u_j, u real: the Fresnel
    prefactor becomes real, the kinetic phase becomes a genuine Gaussian
    damping exp(-sum b (du)^2 / (2 dt)), and eta plus f0 are continued
    analytically to the rotated points.  Jordan-arc contributions vanish for
    the Gaussian data required here, so the rotated integral equals the
    original one.  Adaptive quadrature on real and imaginary parts.
    """
    if lattice.n_steps > _MAX_OSCILLATORY_STEPS:
        raise ValueError(f"oscillatory lattice too large; n_steps <= {_MAX_OSCILLATORY_STEPS}")
    if p.dim_q != 1 or lattice.dim_q != 1:
        raise ValueError("oscillatory_check supports dim_q = 1 only")
    if p.f0.gaussian_data is None:
        raise ValueError("oscillatory_check requires Gaussian initial data for damping")
    if p.lagrangian.velocity_coupled:
        raise ValueError("velocity-coupled eta is not supported in the sliced kernel")
    if not np.isclose(lattice.t_final, p.t_final):
        raise ValueError("lattice horizon does not match the problem's t_final")

    n, dt = lattice.n_steps, lattice.dt
    b = float(p.kinetic_matrix[0, 0])
    q0 = float(np.asarray(q_point, dtype=float).reshape(()))
    rot = np.exp(1j * np.pi / 4.0)
    prefactor = (b / (2.0 * np.pi * dt)) ** (n / 2.0)

    def integrand(*u: float) -> complex:
        pts = np.concatenate([[0.0], np.asarray(u)])
        kinetic = b * np.sum(np.diff(pts) ** 2) / (2.0 * dt)
        eta_args = (rot * pts[:-1] + q0).reshape(-1, 1)
        eta_vals = np.asarray(p.lagrangian.eta(eta_args, np.zeros_like(eta_args)))
        phase = np.exp(1j * dt * np.sum(eta_vals))
        f0_val = np.asarray(p.f0.evaluator(np.array([[rot * pts[-1] + q0]])))[0]
        return prefactor * np.exp(-kinetic) * phase * f0_val

    half_width = 12.0 * np.sqrt(lattice.t_final / b) + 8.0 + abs(q0)
    ranges = [(-half_width, half_width)] * n
    opts = {"epsabs": 1e-12, "epsrel": 1e-10}
    real_part, _ = nquad(lambda *u: integrand(*u).real, ranges, opts=[opts] * n)
    imag_part, _ = nquad(lambda *u: integrand(*u).imag, ranges, opts=[opts] * n)
    return complex(real_part, imag_part)


@dataclass(frozen=True)
class AnomalySummandRow:
    """Per-(Lagrangian, path) values of the two logarithmic-derivative summands."""

    lagrangian_label: str
    path_index: int
    eta_term: complex
    trace_term: float


@dataclass(frozen=True)
class AnomalyDualityRow:
    """Determinant column versus trace integral along the flow at one (path, alpha)."""

    path_index: int
    alpha: float
    log_det: float
    trace_integral: float
    gap: float


@dataclass(frozen=True)
class AnomalyAssertion:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AnomalyReport:
    """Output of anomaly_experiment; assertions carry the machine-checked claims."""

    family_label: str
    mode: WLogDerivativeMode
    seed: int
    n_paths: int
    summand_rows: tuple[AnomalySummandRow, ...]
    duality_rows: tuple[AnomalyDualityRow, ...]
    density_deviation: dict[str, float]
    assertions: tuple[AnomalyAssertion, ...]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def _weighted_density_curve(
    m: GaussianMeasure,
    family: TransformationFamily,
    action: DiscreteAction,
    mode: WLogDerivativeMode,
    alpha_max: float,
    n_grid: int,
    probe: Array,
) -> Array:
    """RK4 for the weighted measure's density ODE along the probe trajectory.

    The growth rate adds the mode-scaled action variation to the Gaussian
    logarithmic derivative (vector plus trace).  In the damped mode the
    result is the Radon-Nikodym density of the transformed weighted measure;
    values are complex in the oscillatory mode.
    """
    h = family_generator(family)
    lattice = action.lattice

    def rate(alpha: float) -> complex:
        y = family.apply(alpha, probe)
        gauss = log_derivative_along_field(m, h, y).total
        path = path_from_flat(lattice, y)
        direction = path_from_flat(lattice, h.eval_at(y))
        return gauss + mode.factor * action.eta_variation(path, direction)

    step = alpha_max / n_grid
    dtype = complex if mode is WLogDerivativeMode.REAL_TIME else float
    values = np.empty(n_grid + 1, dtype=dtype)
    values[0] = 1.0
    rate_lo = rate(0.0)
    for i in range(n_grid):
        g = values[i]
        rate_mid = rate((i + 0.5) * step)
        rate_hi = rate((i + 1.0) * step)
        k1 = rate_lo * g
        k2 = rate_mid * (g + 0.5 * step * k1)
        k3 = rate_mid * (g + 0.5 * step * k2)
        k4 = rate_hi * (g + step * k3)
        values[i + 1] = g + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rate_lo = rate_hi
    return values


def anomaly_experiment(
    family: TransformationFamily,
    lagrangians: Sequence[Lagrangian],
    lattice: TimeLattice,
    n_paths: int,
    seed: int,
    mode: WLogDerivativeMode = WLogDerivativeMode.EUCLIDEAN,
    invariant_flags: Optional[Sequence[bool]] = None,
    expect_nonzero_trace: bool = True,
    alpha_max: float = 0.25,
    n_alpha: int = 5,
    eta_zero_tol: float = 1e-10,
    duality_tol: float = 1e-6,
    duality_grid: int = 256,
    density_grid: int = 64,
    density_floor: float = 1e-3,
    strict: bool = True,
) -> AnomalyReport:
    """Separate the action-variation and trace summands across Lagrangians.

    For each Lagrangian and each path sampled from the kinetic-weighted
    Gaussian measure, records the two summands of the weighted measure's
    logarithmic derivative along the family, both oriented along the flow
    velocity V = dS/dalpha (so the scaling family reports trace
    n_steps * dim_q).  On an alpha grid it records log det dS/dx against the
    trace integral along the flow.  Assertions:

    * trace columns bitwise identical across Lagrangians;
    * for Lagrangians flagged invariant, |eta term| <= eta_zero_tol, while
      the trace column is nonzero when expect_nonzero_trace (and zero
      otherwise, the no-anomaly control);
    * |log_det - trace integral| <= duality_tol at every (path, alpha);
    * the weighted measure's density along the flow deviates from 1 by more
      than density_floor at alpha_max when expect_nonzero_trace (pushforward
      non-invariance).

    strict raises AssertionError on the first failed claim; strict=False
    returns the report with failures recorded for the caller to surface.
    """
    if len(lagrangians) < 2:
        raise ValueError("anomaly_experiment compares at least two Lagrangians")
    if invariant_flags is None:
        invariant_flags = [False] * len(lagrangians)
    if len(invariant_flags) != len(lagrangians):
        raise ValueError("invariant_flags must align with lagrangians")
    if family.dim != lattice.dim:
        raise ValueError("family must act on stacked path coordinates")
    kinetic = lagrangians[0].kinetic_matrix
    for lag in lagrangians[1:]:
        if not np.array_equal(lag.kinetic_matrix, kinetic):
            raise ValueError("all Lagrangians in one scan must share the kinetic matrix")

    m = wiener_measure(lattice, kinetic)
    paths_flat = sample(m, n_paths, seed)
    velocity = family_velocity(family)
    actions = [DiscreteAction(lag, lattice) for lag in lagrangians]

    summand_rows: list[AnomalySummandRow] = []
    labels = []
    for lag, action in zip(lagrangians, actions):
        label = lag.label or f"lagrangian{len(labels)}"
        labels.append(label)
        for idx in range(n_paths):
            path = path_from_flat(lattice, paths_flat[idx])
            piece = action.w_log_derivative_field(mode, velocity, path)
            summand_rows.append(
                AnomalySummandRow(
                    lagrangian_label=label,
                    path_index=idx,
                    eta_term=piece.eta_term,
                    trace_term=piece.trace_term,
                )
            )

    alphas = np.linspace(0.0, alpha_max, n_alpha + 1)[1:]
    duality_rows: list[AnomalyDualityRow] = []
    for idx in range(n_paths):
        x = paths_flat[idx]
        for alpha in alphas:
            log_det = jacobian_log_det(family, float(alpha), x)
            trace_int = trace_integral_along_flow(family, float(alpha), x, n_grid=duality_grid)
            duality_rows.append(
                AnomalyDualityRow(
                    path_index=idx,
                    alpha=float(alpha),
                    log_det=log_det,
                    trace_integral=trace_int,
                    gap=abs(log_det - trace_int),
                )
            )

    density_deviation: dict[str, float] = {}
    probe = paths_flat[0]
    for label, action in zip(labels, actions):
        curve = _weighted_density_curve(m, family, action, mode, alpha_max, density_grid, probe)
        density_deviation[label] = float(abs(curve[-1] - 1.0))

    assertions: list[AnomalyAssertion] = []

    base_traces = [r.trace_term for r in summand_rows if r.lagrangian_label == labels[0]]
    trace_identical = all(
        [r.trace_term for r in summand_rows if r.lagrangian_label == label] == base_traces
        for label in labels[1:]
    )
    assertions.append(
        AnomalyAssertion(
            name="trace_identical_across_lagrangians",
            passed=trace_identical,
            detail="trace column bitwise equal for every Lagrangian"
            if trace_identical
            else "trace columns differ between Lagrangians",
        )
    )

    max_trace = max(abs(t) for t in base_traces)
    for label, flag in zip(labels, invariant_flags):
        if not flag:
            continue
        max_eta = max(
            abs(r.eta_term) for r in summand_rows if r.lagrangian_label == label
        )
        assertions.append(
            AnomalyAssertion(
                name=f"eta_term_vanishes[{label}]",
                passed=max_eta <= eta_zero_tol,
                detail=f"max |eta term| = {max_eta:.3e} (tol {eta_zero_tol:.1e})",
            )
        )
    if expect_nonzero_trace:
        assertions.append(
            AnomalyAssertion(
                name="trace_term_nonzero",
                passed=max_trace > 1e-8,
                detail=f"max |trace term| = {max_trace:.3e}",
            )
        )
    else:
        assertions.append(
            AnomalyAssertion(
                name="trace_term_zero_control",
                passed=max_trace <= eta_zero_tol,
                detail=f"max |trace term| = {max_trace:.3e} (control family)",
            )
        )

    max_gap = max(r.gap for r in duality_rows)
    assertions.append(
        AnomalyAssertion(
            name="determinant_trace_duality",
            passed=max_gap <= duality_tol,
            detail=f"max |log_det - trace integral| = {max_gap:.3e} (tol {duality_tol:.1e})",
        )
    )

    if expect_nonzero_trace:
        min_dev = min(density_deviation.values())
        assertions.append(
            AnomalyAssertion(
                name="weighted_density_noninvariant",
                passed=min_dev > density_floor,
                detail=f"min |g(alpha_max) - 1| = {min_dev:.3e} (floor {density_floor:.1e})",
            )
        )

    report = AnomalyReport(
        family_label=family.label or "family",
        mode=mode,
        seed=seed,
        n_paths=n_paths,
        summand_rows=tuple(summand_rows),
        duality_rows=tuple(duality_rows),
        density_deviation=density_deviation,
        assertions=tuple(assertions),
    )
    if strict:
        for a in report.assertions:
            if not a.passed:
                raise AssertionError(f"anomaly experiment failed {a.name}: {a.detail}")
    return report
