"""Update operators driving the averaged iteration.

Every operator maps a state to a state via ``apply(s, t)``; the iteration
index matters only when a context sequence is attached (entries are cycled
by t).  Fixed points come from closed forms where one exists (affine kinds,
gradient step, small Bellman problems by policy enumeration) and from plain
iteration of ``apply`` otherwise.  Contraction factors are always measured
by pair sampling in a given geometry, never assumed from declared
parameters, because the divergence in which the engine runs need not be the
norm in which an operator is naturally contractive.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .geometry import Geometry, NegativeEntropy, SquaredEuclidean


class FixedPointError(RuntimeError):
    """Iterative fixed-point search failed to converge; carries the residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class Operator:
    kind = "base"

    def __init__(self, dim: int, context_y=None):
        self.dim = int(dim)
        if context_y is not None:
            context_y = [np.asarray(y, dtype=float) for y in context_y]
            if not context_y:
                raise ValueError("context_y must be a non-empty sequence when given")
        self.context_y = context_y

    def context(self, t: int):
        """Context value for step t, cycling the attached sequence; None if absent."""
        if self.context_y is None:
            return None
        return self.context_y[t % len(self.context_y)]

    def apply(self, s: np.ndarray, t: int = 0) -> np.ndarray:
        raise NotImplementedError

    def _default_geometry(self) -> Geometry:
        return SquaredEuclidean(self.dim)

    def _iteration_start(self) -> np.ndarray:
        return np.zeros(self.dim)

    def fixed_point(self, geometry: Geometry | None = None, tol: float = 1e-14,
                    max_iter: int = 10**6) -> np.ndarray:
        """Iterative fallback: repeat apply until the divergence step is <= tol."""
        g = geometry if geometry is not None else self._default_geometry()
        s = self._iteration_start()
        residual = math.inf
        for _ in range(max_iter):
            nxt = self.apply(s, 0)
            residual = g.divergence(nxt, s)
            s = nxt
            if residual <= tol:
                return s
        raise FixedPointError(
            f"{self.kind} fixed point did not converge in {max_iter} iterations "
            f"(last divergence step {residual:g})",
            residual,
        )


class AffineColinear(Operator):
    """T(s) = gamma * s + (1 - gamma) * target; fixed point is target itself."""

    kind = "affine-colinear"

    def __init__(self, gamma: float, target, context_y=None):
        target = np.asarray(target, dtype=float)
        if target.ndim != 1:
            raise ValueError("target must be a 1-d vector")
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        super().__init__(target.size, context_y)
        self.gamma = float(gamma)
        self.target = target

    def apply(self, s, t=0):
        s = np.asarray(s, dtype=float)
        return self.gamma * s + (1.0 - self.gamma) * self.target

    def fixed_point(self, geometry=None, tol=1e-14, max_iter=10**6):
        return self.target.copy()


class AffineRotation(Operator):
    """T(s) = gamma * R(theta) (s - target) + target in the plane."""

    kind = "affine-rotation"

    def __init__(self, gamma: float, theta: float, target, context_y=None):
        target = np.asarray(target, dtype=float)
        if target.shape != (2,):
            raise ValueError("affine-rotation is planar: target must have dimension 2")
        if not 0 <= gamma < 1:
            raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
        super().__init__(2, context_y)
        self.gamma = float(gamma)
        self.theta = float(theta)
        c, sn = math.cos(self.theta), math.sin(self.theta)
        self.rot = np.array([[c, -sn], [sn, c]])
        self.target = target

    def apply(self, s, t=0):
        s = np.asarray(s, dtype=float)
        return self.gamma * (self.rot @ (s - self.target)) + self.target

    def fixed_point(self, geometry=None, tol=1e-14, max_iter=10**6):
        return self.target.copy()


class GradientStep(Operator):
    """T(s) = s - step * (A s - b) for symmetric positive definite A.

    The fixed point solves A s = b regardless of the step size; whether
    iterating T alone converges depends on step < 2 / lambda_max(A).
    """

    kind = "gradient-step"

    def __init__(self, a, b, step: float, context_y=None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if b.ndim != 1:
            raise ValueError("b must be a 1-d vector")
        if a.shape != (b.size, b.size):
            raise ValueError(f"A must have shape ({b.size}, {b.size}), got {a.shape}")
        scale = max(1.0, float(np.abs(a).max()))
        if float(np.abs(a - a.T).max()) > 1e-12 * scale:
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(a)[0] <= 0:
            raise ValueError("A must be positive definite")
        if not step > 0:
            raise ValueError(f"step must be > 0, got {step}")
        super().__init__(b.size, context_y)
        self.a = a
        self.b = b
        self.step = float(step)

    def apply(self, s, t=0):
        s = np.asarray(s, dtype=float)
        return s - self.step * (self.a @ s - self.b)

    def fixed_point(self, geometry=None, tol=1e-14, max_iter=10**6):
        return np.linalg.solve(self.a, self.b)


class ExpGradientStep(Operator):
    """Multiplicative update toward a target distribution q on the simplex.

    T(p) is proportional to p * exp(-step * grad KL(p || q)) renormalized,
    then clamped back to the rho-interior.  At p = q the exponent is constant
    across entries and dies in the normalization, so q is exactly the fixed
    point.
    """

    kind = "exp-gradient-step"

    def __init__(self, q, step: float, rho: float = 1e-6, context_y=None):
        q = np.asarray(q, dtype=float)
        if q.ndim != 1:
            raise ValueError("q must be a 1-d vector")
        if not step > 0:
            raise ValueError(f"step must be > 0, got {step}")
        rho = float(rho)
        # construction reuses the domain checks of the matching geometry
        geom = NegativeEntropy(q.size, rho)
        geom.check_point(q, "q")
        super().__init__(q.size, context_y)
        self.q = q
        self.step = float(step)
        self.rho = rho

    def apply(self, p, t=0):
        p = np.asarray(p, dtype=float)
        gkl = np.log(p) - np.log(self.q) + 1.0
        w = p * np.exp(-self.step * gkl)
        w = w / w.sum()
        w = np.clip(w, self.rho, None)
        return w / w.sum()

    def fixed_point(self, geometry=None, tol=1e-14, max_iter=10**6):
        return self.q.copy()

    def _default_geometry(self):
        return NegativeEntropy(self.dim, self.rho)

    def _iteration_start(self):
        return np.full(self.dim, 1.0 / self.dim)


class Bellman(Operator):
    """Optimality backup of a finite MDP with dense tables.

    transitions has shape (S, A, S) with each (s, a) row a distribution;
    rewards has shape (S, A); discount lies in [0, 1).  An attached context
    sequence perturbs rewards additively (off by default).  Fixed points use
    policy enumeration when there are at most 8 deterministic policies and
    plain backup iteration otherwise.
    """

    kind = "bellman"

    ENUMERATION_LIMIT = 8

    def __init__(self, transitions, rewards, discount: float, context_y=None):
        p = np.asarray(transitions, dtype=float)
        r = np.asarray(rewards, dtype=float)
        if r.ndim != 2:
            raise ValueError("rewards must have shape (n_states, n_actions)")
        n_states, n_actions = r.shape
        if p.shape != (n_states, n_actions, n_states):
            raise ValueError(
                f"transitions must have shape ({n_states}, {n_actions}, {n_states}), got {p.shape}"
            )
        if np.any(p < 0):
            raise ValueError("transition probabilities must be nonnegative")
        row_sums = p.sum(axis=2)
        if float(np.abs(row_sums - 1.0).max()) > 1e-9:
            raise ValueError("each transitions[s, a] must sum to 1 within 1e-9")
        if not 0 <= discount < 1:
            raise ValueError(f"discount must lie in [0, 1), got {discount}")
        super().__init__(n_states, context_y)
        self.transitions = p
        self.rewards = r
        self.discount = float(discount)
        self.n_states = n_states
        self.n_actions = n_actions

    def apply(self, v, t=0):
        r = self.rewards
        y = self.context(t)
        if y is not None:
            r = r + y
        q = r + self.discount * np.tensordot(self.transitions, v, axes=([2], [0]))
        return q.max(axis=1)

    def fixed_point(self, geometry=None, tol=1e-14, max_iter=10**6):
        if self.n_actions ** self.n_states > self.ENUMERATION_LIMIT:
            return super().fixed_point(geometry, tol, max_iter)
        eye = np.eye(self.n_states)
        best = np.full(self.n_states, -np.inf)
        for policy in itertools.product(range(self.n_actions), repeat=self.n_states):
            idx = np.arange(self.n_states)
            p_pi = self.transitions[idx, policy, :]
            r_pi = self.rewards[idx, policy]
            v_pi = np.linalg.solve(eye - self.discount * p_pi, r_pi)
            best = np.maximum(best, v_pi)
        return best


def make_operator(kind: str, params: dict, context_y=None) -> Operator:
    """Build an operator from its config form."""
    params = dict(params)

    def take(required, optional=()):
        missing = [k for k in required if k not in params]
        if missing:
            raise ValueError(f"operator kind {kind!r} requires params {missing}")
        extra = set(params) - set(required) - set(optional)
        if extra:
            raise ValueError(f"unknown operator params for kind {kind!r}: {sorted(extra)}")

    if kind == AffineColinear.kind:
        take(["gamma", "target"])
        return AffineColinear(params["gamma"], params["target"], context_y)
    if kind == AffineRotation.kind:
        take(["gamma", "theta", "target"])
        return AffineRotation(params["gamma"], params["theta"], params["target"], context_y)
    if kind == GradientStep.kind:
        take(["a", "b", "step"])
        return GradientStep(params["a"], params["b"], params["step"], context_y)
    if kind == ExpGradientStep.kind:
        take(["q", "step"], optional=["rho"])
        return ExpGradientStep(params["q"], params["step"], params.get("rho", 1e-6), context_y)
    if kind == Bellman.kind:
        take(["transitions", "rewards", "discount"])
        return Bellman(params["transitions"], params["rewards"], params["discount"], context_y)
    raise ValueError(
        f"unknown operator kind {kind!r}; known: "
        f"{[AffineColinear.kind, AffineRotation.kind, GradientStep.kind, ExpGradientStep.kind, Bellman.kind]}"
    )


def estimate_contraction(op: Operator, g: Geometry, n_pairs: int = 256,
                         rng_seed: int = 0, skip_tol: float = 1e-14) -> float:
    """Empirical divergence contraction factor over sampled pairs.

    Returns max D(T s, T s') / D(s, s') over n_pairs pairs drawn from the
    geometry's sampler; pairs closer than skip_tol are skipped as degenerate.
    Deterministic for a fixed seed.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    used = 0
    for _ in range(n_pairs):
        s1 = g.sample_point(rng)
        s2 = g.sample_point(rng)
        base = g.divergence(s1, s2)
        if base < skip_tol:
            continue
        worst = max(worst, g.divergence(op.apply(s1, 0), op.apply(s2, 0)) / base)
        used += 1
    if used == 0:
        raise ValueError("all sampled pairs were degenerate; cannot estimate contraction")
    return worst


def unrolled_depth(op: Operator, g: Geometry, e0: float, eps: float,
                   n_pairs: int = 256, rng_seed: int = 0,
                   gamma_hat: float | None = None) -> int:
    """Feedforward depth guaranteeing divergence <= eps from a start at e0.

    Composing T depth times shrinks the divergence by at least gamma_hat each
    layer, so depth = ceil(ln(e0/eps) / ln(1/gamma_hat)); zero if eps >= e0.
    Raises if the measured factor is not a contraction.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if e0 < 0:
        raise ValueError(f"e0 must be >= 0, got {e0}")
    if eps >= e0:
        return 0
    gh = gamma_hat if gamma_hat is not None else estimate_contraction(op, g, n_pairs, rng_seed)
    if gh >= 1:
        raise ValueError(
            f"measured contraction factor {gh:g} >= 1: not a divergence contraction, "
            "no unrolled depth guarantees eps"
        )
    return math.ceil(math.log(e0 / eps) / math.log(1.0 / gh))
