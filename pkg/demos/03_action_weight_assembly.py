"""Discrete actions and the log-derivative of an action-weighted measure.

The time-sliced action splits into a kinetic part, which is the
Cameron-Martin energy of the path, and a potential part summed over the
left endpoints of each slice.  Weighting the Gaussian path measure by
exp(-S) produces a pseudo-measure whose log-derivative assembles from
two computable pieces: the Gaussian one and a weight correction.  Their
sum reproduces minus the first variation of the action, which is the
identity checked at the end.
"""

import numpy as np

from logmeasure import (
    DiscreteAction,
    Path,
    WLogDerivativeMode,
    cm_inner,
    free_lagrangian,
    harmonic_lagrangian,
    log_derivative_along_vector,
    make_lattice,
    wiener_measure,
)

lat = make_lattice(8, 1.0, 1)
rng = np.random.default_rng(0)
path = Path(lat, rng.normal(size=(8, 1)))
direction = Path(lat, rng.normal(size=(8, 1)))

# For the free Lagrangian the action is pure kinetic energy, half the
# Cameron-Martin norm of the path.
free = DiscreteAction(free_lagrangian(1), lat)
print("free action:", free.action_value(path))
print("half CM norm:", 0.5 * cm_inner(path, path))

# A harmonic potential adds the summed eta term.  The first variation
# agrees with a centered finite difference of the action.
harmonic = DiscreteAction(harmonic_lagrangian(1), lat)
eps = 1e-5
fd = (harmonic.action_value(path + eps * direction)
      - harmonic.action_value(path - eps * direction)) / (2 * eps)
print("harmonic first variation:", harmonic.first_variation(path, direction))
print("finite difference:       ", fd)

# Weight correction in damped (euclidean) and oscillatory (real time)
# modes.  For the free action it vanishes identically.
EUCLID = WLogDerivativeMode.EUCLIDEAN
REAL = WLogDerivativeMode.REAL_TIME
print("free weight term:", free.w_log_derivative_vector(EUCLID, direction, path))
print("harmonic weight term (euclidean):", harmonic.w_log_derivative_vector(EUCLID, direction, path))
print("harmonic weight term (real time):", harmonic.w_log_derivative_vector(REAL, direction, path))

# Assembly: Gaussian log-derivative plus weight term equals minus the
# first variation of the full action.
m = wiener_measure(lat)
gauss = log_derivative_along_vector(m, direction.flat, path.flat)
weight = harmonic.w_log_derivative_vector(EUCLID, direction, path)
print("gauss + weight:        ", gauss + weight)
print("minus first variation: ", -harmonic.first_variation(path, direction))
