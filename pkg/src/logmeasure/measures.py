"""Gaussian measures and their logarithmic derivatives.

The logarithmic derivative along a vector k follows the subtraction
convention for the shift family S(t)(x) = x - t k, which for a Gaussian with
precision P and mean m gives

    beta(k, x) = -(x - m)^T P k = grad log p(x) . k.

Differentiating along a vector field h adds the divergence of h:

    beta_h(x) = beta(h(x), x) + trace h'(x),

and the integration-by-parts identity E[phi' . h] + E[phi * beta_h] = 0 is the
primary consistency check (ibp_residual).

Precision is the primary parameterization; covariance is derived on demand.
Monte Carlo work is split across `workers` deterministic RNG streams derived
from SeedSequence(seed).spawn(workers), so results are bitwise reproducible
for a fixed (seed, workers) pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_triangular

from .fields import TestFunction, VectorField
from .lattice import TimeLattice, cm_gram

_LOG_2PI = float(np.log(2.0 * np.pi))
_MAX_GH_DIM = 6
_CHUNK_ROWS = 131072


class QuadratureKind(str, Enum):
    MONTE_CARLO = "monte_carlo"
    GAUSS_HERMITE = "gauss_hermite"


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate: MC sample count or Gauss-Hermite nodes per axis.

    For kind = gauss_hermite, ``n_samples`` is the node count per dimension
    (exact for polynomials of degree <= 2 * n_samples - 1); the tensor rule is
    guarded to dim <= 6.
    """

    kind: QuadratureKind
    n_samples: int
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", QuadratureKind(self.kind))
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.workers <= 0:
            raise ValueError("workers must be positive")


@dataclass(frozen=True)
class Estimate:
    """A real number with its standard error (None for deterministic rules)."""

    value: float
    std_error: Optional[float] = None


@dataclass(frozen=True)
class FieldLogDerivative:
    """beta_h(x) split into its frozen-vector part and the divergence part."""

    vector_term: float
    trace_term: float
    total: float


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian measure on R^dim given by mean and SPD precision matrix."""

    dim: int
    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        prec = np.array(self.precision, dtype=float)
        if mean.shape != (self.dim,):
            raise ValueError(f"mean must have shape ({self.dim},), got {mean.shape}")
        if prec.shape != (self.dim, self.dim):
            raise ValueError("precision must be a square matrix matching dim")
        scale = max(1.0, float(np.abs(prec).max()))
        if not np.allclose(prec, prec.T, rtol=0.0, atol=1e-12 * scale):
            raise ValueError("precision matrix is not symmetric")
        prec = 0.5 * (prec + prec.T)
        try:
            chol = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise ValueError("precision matrix is not positive definite") from exc
        for arr in (mean, prec, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", prec)
        object.__setattr__(self, "_chol_lower", chol)

    @property
    def chol_lower(self) -> np.ndarray:
        """Lower-triangular L with precision = L L^T."""
        return self._chol_lower

    @property
    def log_norm_const(self) -> float:
        """log of the normalization Z = (2 pi)^{d/2} det(P)^{-1/2}."""
        half_logdet = float(np.sum(np.log(np.diag(self._chol_lower))))
        return 0.5 * self.dim * _LOG_2PI - half_logdet

    def covariance(self) -> np.ndarray:
        ident = np.eye(self.dim)
        y = solve_triangular(self._chol_lower, ident, lower=True)
        return y.T @ y

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        """Log density, vectorized over rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        delta = x - self.mean
        quad = np.einsum("ij,ij->i", delta @ self.precision, delta)
        out = -0.5 * quad - self.log_norm_const
        return out if out.size > 1 else float(out[0])


def standard_normal(dim: int) -> GaussianMeasure:
    return GaussianMeasure(dim, np.zeros(dim), np.eye(dim))


def wiener_measure(
    lattice: TimeLattice, kinetic_matrix: np.ndarray | None = None
) -> GaussianMeasure:
    """Discretized Wiener measure: mean zero, precision = Cameron-Martin Gram.

    With a kinetic weighting B the energy of the sampled measure is exactly
    sum_j 0.5 (dpsi_j/dt)^T B (dpsi_j/dt) dt.
    """
    gram = cm_gram(lattice, kinetic_matrix)
    return GaussianMeasure(lattice.dim, np.zeros(lattice.dim), gram.matrix)


# ---------------------------------------------------------------------------
# sampling and quadrature engines


def _worker_rngs(seed: int, workers: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(workers)]


def _worker_shares(n: int, workers: int) -> list[int]:
    base, rem = divmod(n, workers)
    return [base + (1 if w < rem else 0) for w in range(workers)]


def _transform(m: GaussianMeasure, z: np.ndarray) -> np.ndarray:
    # x = mean + L^{-T} z has covariance (L L^T)^{-1} = P^{-1}
    return m.mean + solve_triangular(m.chol_lower, z.T, lower=True, trans="T").T


def sample(m: GaussianMeasure, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """Draw n iid samples; deterministic for fixed (seed, workers)."""
    if n <= 0:
        raise ValueError("n must be positive")
    out = np.empty((n, m.dim))
    pos = 0
    for rng, share in zip(_worker_rngs(seed, workers), _worker_shares(n, workers)):
        done = 0
        while done < share:
            take = min(_CHUNK_ROWS, share - done)
            out[pos : pos + take] = _transform(m, rng.standard_normal((take, m.dim)))
            pos += take
            done += take
    return out


def _mc_columns(
    m: GaussianMeasure, q: QuadratureSpec, row_fn: Callable[[np.ndarray], np.ndarray], n_cols: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stream MC chunks through row_fn; return per-column means and standard errors.

    row_fn maps a sample batch (c, dim) to (c, n_cols).
    """
    total = 0
    acc = np.zeros(n_cols)
    acc_sq = np.zeros(n_cols)
    for rng, share in zip(_worker_rngs(q.seed, q.workers), _worker_shares(q.n_samples, q.workers)):
        done = 0
        while done < share:
            take = min(_CHUNK_ROWS, share - done)
            x = _transform(m, rng.standard_normal((take, m.dim)))
            cols = np.asarray(row_fn(x), dtype=float).reshape(take, n_cols)
            acc += cols.sum(axis=0)
            acc_sq += (cols * cols).sum(axis=0)
            total += take
            done += take
    means = acc / total
    var = np.maximum(acc_sq / total - means**2, 0.0)
    ses = np.sqrt(var / max(total - 1, 1))
    return means, ses


@lru_cache(maxsize=32)
def _hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.hermite.hermgauss(order)


def _gh_nodes(m: GaussianMeasure, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite nodes mapped onto the measure; weights sum to 1."""
    if m.dim > _MAX_GH_DIM:
        raise ValueError(
            f"gauss_hermite quadrature is guarded to dim <= {_MAX_GH_DIM}, got dim {m.dim}"
        )
    xi, w = _hermite_rule(order)
    grids = np.meshgrid(*([xi] * m.dim), indexing="ij")
    nodes_std = np.stack([g.reshape(-1) for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * m.dim), indexing="ij")
    weights = np.ones(nodes_std.shape[0])
    for g in wgrids:
        weights = weights * g.reshape(-1)
    weights = weights / np.pi ** (m.dim / 2.0)
    nodes = _transform(m, np.sqrt(2.0) * nodes_std)
    return nodes, weights


def _gh_columns(
    m: GaussianMeasure, q: QuadratureSpec, row_fn: Callable[[np.ndarray], np.ndarray], n_cols: int
) -> np.ndarray:
    nodes, weights = _gh_nodes(m, q.n_samples)
    cols = np.asarray(row_fn(nodes), dtype=float).reshape(len(weights), n_cols)
    return weights @ cols


def _integrate_columns(m, q, row_fn, n_cols):
    if q.kind is QuadratureKind.GAUSS_HERMITE:
        return _gh_columns(m, q, row_fn, n_cols), None
    means, ses = _mc_columns(m, q, row_fn, n_cols)
    return means, ses


def expectation(
    m: GaussianMeasure,
    f: Union[TestFunction, Callable[[np.ndarray], np.ndarray]],
    q: QuadratureSpec,
) -> Estimate:
    """Integrate a scalar observable against the measure.

    Gauss-Hermite is exact for polynomials of degree <= 2 * order - 1; Monte
    Carlo attaches a standard error.
    """
    fn = f.evaluator if isinstance(f, TestFunction) else f
    means, ses = _integrate_columns(m, q, lambda x: np.asarray(fn(x)).reshape(-1, 1), 1)
    return Estimate(float(means[0]), None if ses is None else float(ses[0]))


# ---------------------------------------------------------------------------
# logarithmic derivatives


def log_derivative_along_vector(m: GaussianMeasure, k: np.ndarray, x: np.ndarray) -> float:
    """beta(k, x) = -(x - mean)^T P k under the shift convention S(t)x = x - t k."""
    k = np.asarray(k, dtype=float).reshape(m.dim)
    x = np.asarray(x, dtype=float).reshape(m.dim)
    return float(-(x - m.mean) @ (m.precision @ k))


def _vector_log_derivative_batch(m: GaussianMeasure, kk: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Row-wise beta(k_i, x_i) for stacked vectors and points."""
    return -np.einsum("ij,ij->i", (xx - m.mean) @ m.precision, kk)


def log_derivative_along_field(
    m: GaussianMeasure, h: VectorField, x: np.ndarray
) -> FieldLogDerivative:
    """beta_h(x) = beta(h(x), x) + trace h'(x), with the summands kept apart.

    The difference between the field derivative and the derivative along the
    frozen vector k = h(x) is exactly the trace term.
    """
    if h.dim != m.dim:
        raise ValueError(f"field dimension {h.dim} does not match measure dimension {m.dim}")
    x = np.asarray(x, dtype=float).reshape(m.dim)
    vector_term = log_derivative_along_vector(m, h.eval_at(x), x)
    trace_term = h.divergence_at(x)
    return FieldLogDerivative(vector_term, trace_term, vector_term + trace_term)


def _field_log_derivative_rows(m: GaussianMeasure, h: VectorField, x: np.ndarray) -> np.ndarray:
    return _vector_log_derivative_batch(m, np.asarray(h.eval(x), dtype=float), x) + h.divergence_batch(x)


def ibp_residual(
    m: GaussianMeasure, phi: TestFunction, h: VectorField, q: QuadratureSpec
) -> Estimate:
    """Integration-by-parts residual E[phi' . h] + E[phi * beta_h]; zero in exact arithmetic.

    Monte Carlo evaluates the residual as a single per-sample column so the
    returned standard error is the standard error of the residual itself.
    """
    if h.dim != m.dim:
        raise ValueError(f"field dimension {h.dim} does not match measure dimension {m.dim}")

    def rows(x: np.ndarray) -> np.ndarray:
        grad_dot_h = np.einsum(
            "ij,ij->i", np.asarray(phi.gradient(x), dtype=float), np.asarray(h.eval(x), dtype=float)
        )
        phi_beta = np.asarray(phi.evaluator(x), dtype=float) * _field_log_derivative_rows(m, h, x)
        return (grad_dot_h + phi_beta).reshape(-1, 1)

    means, ses = _integrate_columns(m, q, rows, 1)
    return Estimate(float(means[0]), None if ses is None else float(ses[0]))
