"""logmeasure: differentiation of Gaussian path measures and weighted path integrals.

The package is organized in dependency order: time lattices and Cameron-Martin
Gram matrices (lattice), test functions and transformation families (fields),
Gaussian measures with logarithmic derivatives and quadrature (measures),
flows with pushforward derivatives and density ODEs (flows), discretized
actions and the weighted measure's logarithmic derivative (action), and the
path-integral solvers plus the anomaly experiment (feynman).  library holds
named builtins; cli is the batch experiment runner.
"""

from .action import (
    DiscreteAction,
    Lagrangian,
    QuadraticEta,
    WFieldLogDerivative,
    WLogDerivativeMode,
)
from .errors import LatticeMismatchError, SingularJacobianError
from .fields import (
    DensityCurve,
    TestFunction,
    TransformationFamily,
    VectorField,
    gradient_check,
    negated,
)
from .feynman import (
    AnomalyReport,
    GaussianInitialData,
    InitialCondition,
    PropagatorMethod,
    PropagatorResult,
    SchrodingerProblem,
    SpaceGrid,
    anomaly_experiment,
    constant_initial_condition,
    exact_gaussian_propagator,
    feynman_mc,
    free_evolution_closed_form,
    gaussian_bump,
    oscillatory_check,
    pde_solve,
)
from .flows import (
    Proposition1Result,
    family_generator,
    family_velocity,
    generator,
    jacobian_log_det,
    proposition1_check,
    pushforward_derivative,
    solve_density_ode,
    trace_integral_along_flow,
)
from .lattice import (
    CameronMartinGram,
    Path,
    TimeLattice,
    cm_gram,
    cm_inner,
    difference_matrix,
    discrete_derivative,
    make_lattice,
    path_from_flat,
)
from .library import (
    free_lagrangian,
    harmonic_lagrangian,
    list_builtins_data,
    make_family,
    make_lagrangian,
    pointwise_family,
    polynomial_pairs,
    quartic_lagrangian,
    rotation_family,
    scaling_family,
    shear_family,
    sine_flow_family,
    translation_family,
)
from .measures import (
    Estimate,
    FieldLogDerivative,
    GaussianMeasure,
    QuadratureKind,
    QuadratureSpec,
    expectation,
    ibp_residual,
    log_derivative_along_field,
    log_derivative_along_vector,
    sample,
    standard_normal,
    wiener_measure,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport",
    "CameronMartinGram",
    "DensityCurve",
    "DiscreteAction",
    "Estimate",
    "FieldLogDerivative",
    "GaussianInitialData",
    "GaussianMeasure",
    "InitialCondition",
    "Lagrangian",
    "LatticeMismatchError",
    "Path",
    "PropagatorMethod",
    "PropagatorResult",
    "Proposition1Result",
    "QuadraticEta",
    "QuadratureKind",
    "QuadratureSpec",
    "SchrodingerProblem",
    "SingularJacobianError",
    "SpaceGrid",
    "TestFunction",
    "TimeLattice",
    "TransformationFamily",
    "VectorField",
    "WFieldLogDerivative",
    "WLogDerivativeMode",
    "anomaly_experiment",
    "cm_gram",
    "cm_inner",
    "constant_initial_condition",
    "difference_matrix",
    "discrete_derivative",
    "exact_gaussian_propagator",
    "expectation",
    "family_generator",
    "family_velocity",
    "feynman_mc",
    "free_evolution_closed_form",
    "free_lagrangian",
    "gaussian_bump",
    "generator",
    "gradient_check",
    "harmonic_lagrangian",
    "ibp_residual",
    "jacobian_log_det",
    "list_builtins_data",
    "log_derivative_along_field",
    "log_derivative_along_vector",
    "make_family",
    "make_lagrangian",
    "make_lattice",
    "negated",
    "oscillatory_check",
    "path_from_flat",
    "pde_solve",
    "pointwise_family",
    "polynomial_pairs",
    "proposition1_check",
    "pushforward_derivative",
    "quartic_lagrangian",
    "rotation_family",
    "sample",
    "scaling_family",
    "shear_family",
    "sine_flow_family",
    "solve_density_ode",
    "standard_normal",
    "trace_integral_along_flow",
    "translation_family",
    "wiener_measure",
]
