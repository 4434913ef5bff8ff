"""Error types that callers are expected to catch by name."""


class LatticeMismatchError(ValueError):
    """Two paths (or a path and an operator) live on different lattices."""


class SingularJacobianError(RuntimeError):
    """A transformation's spatial Jacobian is singular or has no valid log-determinant."""
