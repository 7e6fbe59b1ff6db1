"""Iterating with state feedback versus unrolling a fixed-depth circuit.

iterations_to_epsilon counts actual averaged steps until the divergence
drops below eps. unrolled_depth answers the feedforward question: how
deep a composition of the raw map reaches the same accuracy from the
same start, with no intermediate measurement. Tightening eps by 100x
costs the feedback loop about 10x more steps (the 1/t^2 law) but the
feedforward stack only a constant number of extra layers (geometric
decay per layer).
"""

from bregiter import from_dict, compare_feedback_feedforward

cfg = from_dict({
    "geometry": {"kind": "squared-euclidean", "dim": 2},
    "operator": {"kind": "affine-colinear", "params": {"gamma": 0.5, "target": [2.0, -1.0]}},
    "schedule": {"kind": "accelerated"},
    "perturbation": {"mode": "zero"},
    "s0": [0.0, 0.0],
    "iterations": 100,
    "seed": 1,
    "retain_states": False,
})

rows = []
for eps in (1e-2, 1e-4, 1e-6):
    c = compare_feedback_feedforward(cfg, eps)
    rows.append((eps, c.t_feedback, c.d_feedforward))
    print("eps = %.0e   feedback steps %6d   feedforward depth %3d"
          % (eps, c.t_feedback, c.d_feedforward))

(_, t4, _), (_, t6, _) = rows[1], rows[2]
print("step ratio 1e-4 -> 1e-6: %.3f (the square-root law predicts 10)" % (t6 / t4))
print("depth grows by %d layers over the same tightening" % (rows[2][2] - rows[1][2]))
