"""The divergence term of a flow does not care about the action.

Differentiating an action-weighted path pseudo-measure along a scaling
flow produces two contributions per path: one built from the potential
(it vanishes when the potential is scale-free) and a trace term from the
Jacobian of the flow.  The experiment below runs the same flow against
free, harmonic and quartic actions and shows that the trace term is the
same exact number for all of them, here n_steps * dim_q = 16.  What the
action does control is the transported weighted density, which is far
from invariant even when the potential term vanishes.
"""

from logmeasure import (
    anomaly_experiment,
    free_lagrangian,
    harmonic_lagrangian,
    make_lattice,
    quartic_lagrangian,
    scaling_family,
)

lat = make_lattice(16, 1.0, 1)
report = anomaly_experiment(
    family=scaling_family(lat.dim),
    lagrangians=[free_lagrangian(1), harmonic_lagrangian(1), quartic_lagrangian(1, coupling=0.5)],
    lattice=lat,
    n_paths=8,
    seed=17,
    invariant_flags=[True, False, False],
)

print("family:", report.family_label, " paths:", report.n_paths)

by_label = {}
for row in report.summand_rows:
    by_label.setdefault(row.lagrangian_label, []).append(row)
for label, rows in by_label.items():
    etas = sorted({abs(r.eta_term) for r in rows})
    traces = sorted({r.trace_term for r in rows})
    print(f"  {label:<22} trace term {traces}  |eta| range [{etas[0]:.3e}, {etas[-1]:.3e}]")

worst_gap = max(abs(r.gap) for r in report.duality_rows)
print("worst determinant-trace gap:", worst_gap)

print("weighted density deviation at alpha_max:")
for label, dev in report.density_deviation.items():
    print(f"  {label:<22} {dev:.3f}")

for check in report.assertions:
    mark = "ok" if check.passed else "FAILED"
    print(f"  [{mark}] {check.name}")
