"""Discretized actions and the action-weighted pseudo-measure's log derivative.

A Lagrangian here is split as L(q, v) = eta(q, v) + (1/2) v^T B v with B the
same symmetric positive definite kinetic matrix that builds the path measure.
The discretized action over a path psi on a time lattice uses left-endpoint
position sampling and forward-difference velocities:

    A(psi) = sum_j [ eta(psi_{j-1} + q0, dpsi_j / dt) + (1/2) |dpsi_j / dt|_B^2 ] dt

with psi_{-1} = 0 (paths are pinned at the origin) and q0 a fixed spatial
offset for propagator work.

The action-weighted pseudo-measure W has logarithmic derivatives composed of
three pieces: the Gaussian part (carried by the path measure itself), the
eta part of the first variation scaled by a mode factor (i for real time,
-1 for the damped/Euclidean weight), and the divergence trace for field
directions.  Only the eta part is scaled: the kinetic part of the variation
is exactly the Gaussian logarithmic derivative and is reported separately by
:mod:`logmeasure.measures`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .fields import VectorField
from .lattice import Path, TimeLattice, discrete_derivative

Array = np.ndarray


class WLogDerivativeMode(str, Enum):
    """Weight orientation: exp(iA) oscillatory or exp(-A) damped."""

    REAL_TIME = "real_time"
    EUCLIDEAN = "euclidean"

    @property
    def factor(self) -> complex:
        return 1j if self is WLogDerivativeMode.REAL_TIME else -1.0


@dataclass(frozen=True)
class QuadraticEta:
    """eta(q) = (1/2) q^T M q + g^T q + c, enabling closed-form propagators."""

    matrix: Array
    linear: Array
    constant: float = 0.0

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        g = np.asarray(self.linear, dtype=float).reshape(-1)
        if m.shape != (g.size, g.size):
            raise ValueError("quadratic matrix and linear term disagree on dimension")
        if not np.allclose(m, m.T):
            raise ValueError("quadratic matrix must be symmetric")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "linear", g)


@dataclass(frozen=True)
class Lagrangian:
    """L(q, v) = eta(q, v) + (1/2) v^T kinetic_matrix v.

    eta and its partial derivatives take batches: eta(Q, V) -> (n,),
    eta_d1(Q, V) -> (n, d) in q, eta_d2(Q, V) -> (n, d) in v.  Most builtins
    have eta independent of v; velocity_coupled marks the exceptions.
    quadratic_eta, when present, certifies eta(q) = (1/2) q^T M q + g^T q + c
    so Gaussian closed forms apply.
    """

    dim_q: int
    eta: Callable[[Array, Array], Array]
    eta_d1: Callable[[Array, Array], Array]
    eta_d2: Optional[Callable[[Array, Array], Array]] = None
    kinetic_matrix: Optional[Array] = None
    label: str = ""
    quadratic_eta: Optional[QuadraticEta] = None
    velocity_coupled: bool = False

    def __post_init__(self) -> None:
        if self.dim_q <= 0:
            raise ValueError("dim_q must be positive")
        b = self.kinetic_matrix
        if b is None:
            b = np.eye(self.dim_q)
        b = np.asarray(b, dtype=float)
        if b.shape != (self.dim_q, self.dim_q):
            raise ValueError("kinetic_matrix shape mismatch")
        if not np.allclose(b, b.T):
            raise ValueError("kinetic_matrix must be symmetric")
        try:
            np.linalg.cholesky(b)
        except np.linalg.LinAlgError as exc:
            raise ValueError("kinetic_matrix must be positive definite") from exc
        object.__setattr__(self, "kinetic_matrix", b)
        if self.velocity_coupled and self.eta_d2 is None:
            raise ValueError("velocity_coupled Lagrangians must supply eta_d2")

    def eta_velocity_gradient(self, Q: Array, V: Array) -> Array:
        if self.eta_d2 is None:
            return np.zeros_like(np.asarray(Q, dtype=float))
        return np.asarray(self.eta_d2(Q, V), dtype=float)


@dataclass(frozen=True)
class WFieldLogDerivative:
    """eta part (mode-scaled), divergence trace, and their sum."""

    eta_term: complex
    trace_term: float
    total: complex


@dataclass(frozen=True)
class DiscreteAction:
    """Left-endpoint discretization of the action of a Lagrangian on a lattice.

    q_offset shifts every sampled position: positions fed to eta are
    psi_{j-1} + q_offset.  Velocities are forward differences of psi alone.
    """

    lagrangian: Lagrangian
    lattice: TimeLattice
    q_offset: Array = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.lagrangian.dim_q != self.lattice.dim_q:
            raise ValueError("Lagrangian and lattice disagree on spatial dimension")
        q0 = self.q_offset
        if q0 is None:
            q0 = np.zeros(self.lattice.dim_q)
        q0 = np.asarray(q0, dtype=float).reshape(self.lattice.dim_q)
        object.__setattr__(self, "q_offset", q0)

    def _positions_velocities(self, path: Path) -> tuple[Array, Array]:
        if path.lattice != self.lattice:
            raise ValueError("path lattice does not match the action's lattice")
        left = np.vstack([np.zeros((1, self.lattice.dim_q)), path.values[:-1]])
        return left + self.q_offset, discrete_derivative(path)

    def action_value(self, path: Path) -> float:
        """A(psi): eta plus kinetic quadratic, summed with weight dt."""
        Q, V = self._positions_velocities(path)
        b = self.lagrangian.kinetic_matrix
        eta_rows = np.asarray(self.lagrangian.eta(Q, V), dtype=float)
        kinetic_rows = 0.5 * np.einsum("ij,ij->i", V, V @ b)
        return float(np.sum(eta_rows + kinetic_rows) * self.lattice.dt)

    def first_variation(self, path: Path, direction: Path) -> float:
        """d/ds A(psi + s k)|_0 for a lattice direction k, eta and kinetic parts."""
        Q, V = self._positions_velocities(path)
        kQ, kV = self._positions_velocities(direction)
        kQ = kQ - self.q_offset
        d1 = np.asarray(self.lagrangian.eta_d1(Q, V), dtype=float)
        d2 = self.lagrangian.eta_velocity_gradient(Q, V)
        b = self.lagrangian.kinetic_matrix
        rows = (
            np.einsum("ij,ij->i", d1, kQ)
            + np.einsum("ij,ij->i", d2 + V @ b, kV)
        )
        return float(np.sum(rows) * self.lattice.dt)

    def eta_variation(self, path: Path, direction: Path) -> float:
        """The eta-only part of the first variation (kinetic part excluded)."""
        Q, V = self._positions_velocities(path)
        kQ, kV = self._positions_velocities(direction)
        kQ = kQ - self.q_offset
        d1 = np.asarray(self.lagrangian.eta_d1(Q, V), dtype=float)
        rows = np.einsum("ij,ij->i", d1, kQ)
        if self.lagrangian.eta_d2 is not None:
            d2 = np.asarray(self.lagrangian.eta_d2(Q, V), dtype=float)
            rows = rows + np.einsum("ij,ij->i", d2, kV)
        return float(np.sum(rows) * self.lattice.dt)

    def w_log_derivative_vector(
        self, mode: WLogDerivativeMode, direction: Path, path: Path
    ) -> complex:
        """Weight part of the W log derivative along a constant lattice direction.

        Returns factor(mode) * (eta part of the first variation).  The
        Gaussian part of the full W log derivative lives in the path measure
        and is not included here.
        """
        return mode.factor * self.eta_variation(path, direction)

    def w_log_derivative_field(
        self, mode: WLogDerivativeMode, h: VectorField, path: Path
    ) -> WFieldLogDerivative:
        """W log derivative pieces along a lattice vector field h.

        eta_term is the mode-scaled eta variation in the direction h(psi);
        trace_term is div h(psi), entering with coefficient one regardless of
        mode.  total is their sum.  As with the vector version, the Gaussian
        part is carried by the path measure.
        """
        if h.dim != self.lattice.dim:
            raise ValueError("vector field dimension does not match the lattice")
        from .lattice import path_from_flat

        direction = path_from_flat(self.lattice, h.eval_at(path.flat))
        eta_term = mode.factor * self.eta_variation(path, direction)
        trace_term = float(h.divergence_at(path.flat))
        return WFieldLogDerivative(eta_term, trace_term, eta_term + trace_term)
