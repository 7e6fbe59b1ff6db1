"""Run every bound-level audit against one noisy trajectory.

The report re-derives each step of the convergence argument from the
recorded states: the three-point identity, the per-step descent
inequality, the cross-term cancellation, the admissible contraction
margin beta, and the induction step that would promote the per-step
bound to a rate. Checks that fail are reported as findings, not errors;
on this run the unscaled noise floor leaves no admissible beta, and the
induction inequality fails at every grid cell, which is exactly what the
audit exists to surface.
"""

from bregiter import from_dict, run, build_audit_report

cfg = from_dict({
    "geometry": {"kind": "squared-euclidean", "dim": 2},
    "operator": {"kind": "affine-colinear", "params": {"gamma": 0.5, "target": [2.0, -1.0]}},
    "schedule": {"kind": "accelerated"},
    "perturbation": {"mode": "random", "delta0": 1e-3, "kappa": 0.1, "injection": "unscaled"},
    "s0": [0.0, 0.0],
    "iterations": 2000,
    "seed": 7,
    "retain_states": True,
})

trace = run(cfg)
report = build_audit_report(trace, cfg)

for check in report.checks:
    status = "pass" if check.passed else "FINDING"
    print("%-22s %-8s worst violation %.3e  (%s)"
          % (check.name, status, check.worst_violation, check.note))

ia = report.induction
print("induction grid: %d of %d cells violate the claimed inequality"
      % (ia.n_violations, ia.n_total))
print("admissible beta_max on this run: %.6f" % report.beta_max)
