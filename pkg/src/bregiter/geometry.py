"""Bregman geometries over finite-dimensional vector domains.

A geometry bundles a strictly convex potential phi with its gradient map,
the inverse (mirror) map, and the induced divergence

    D(s, s') = phi(s) - phi(s') - <grad phi(s'), s - s'>.

Three kinds are provided: squared Euclidean (phi = ||s||^2 / 2), a general
quadratic form (phi = s'As / 2 with A symmetric positive definite), and
negative entropy restricted to the rho-interior of the probability simplex.
Strong-convexity and smoothness constants are declared at construction and
certified by sampling (see ``certify_constants``), not derived symbolically.
"""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """A point violated a geometry's domain; the message names the constraint."""


def _as_vector(s, dim: int, name: str = "point") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise DomainError(f"{name} must be a 1-d vector, got shape {s.shape}")
    if s.size != dim:
        raise DomainError(f"{name} has dimension {s.size}, geometry expects {dim}")
    if not np.all(np.isfinite(s)):
        raise DomainError(f"{name} contains non-finite entries")
    return s


class Geometry:
    """Base class; concrete geometries implement the four maps below."""

    kind = "base"

    def __init__(self, dim: int, mu: float, L: float):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if not mu > 0:
            raise ValueError(f"mu must be > 0, got {mu}")
        if L < mu:
            raise ValueError(f"L must be >= mu, got L={L}, mu={mu}")
        self.dim = dim
        self.mu = float(mu)
        self.L = float(L)

    def check_point(self, s, name: str = "point") -> np.ndarray:
        """Validate s against the domain and return it as a float array."""
        return _as_vector(s, self.dim, name)

    def divergence(self, s, s_ref) -> float:
        raise NotImplementedError

    def grad(self, s) -> np.ndarray:
        raise NotImplementedError

    def mirror(self, dual) -> np.ndarray:
        raise NotImplementedError

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def project(self, s) -> np.ndarray:
        """Repair floating-point drift; raise DomainError if s is truly outside."""
        return self.check_point(s)

    def __repr__(self):  # pragma: no cover - debug aid
        return f"{type(self).__name__}(dim={self.dim}, mu={self.mu}, L={self.L})"


class SquaredEuclidean(Geometry):
    """phi(s) = ||s||^2 / 2 on all of R^dim; mu = L = 1."""

    kind = "squared-euclidean"

    def __init__(self, dim: int):
        super().__init__(dim, 1.0, 1.0)

    def divergence(self, s, s_ref) -> float:
        d = self.check_point(s) - self.check_point(s_ref, "s_ref")
        return 0.5 * float(np.dot(d, d))

    def grad(self, s) -> np.ndarray:
        return self.check_point(s).copy()

    def mirror(self, dual) -> np.ndarray:
        return _as_vector(dual, self.dim, "dual").copy()

    def sample_point(self, rng) -> np.ndarray:
        return rng.standard_normal(self.dim)


class Quadratic(Geometry):
    """phi(s) = s'As / 2 for user-supplied symmetric positive definite A.

    mu and L are the extreme eigenvalues of A, computed once at construction.
    Singular or asymmetric A is rejected up front.
    """

    kind = "quadratic"

    def __init__(self, dim: int, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (dim, dim):
            raise ValueError(f"A must have shape ({dim}, {dim}), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("A contains non-finite entries")
        scale = max(1.0, float(np.abs(a).max()))
        if float(np.abs(a - a.T).max()) > 1e-12 * scale:
            raise ValueError("A must be symmetric")
        eig = np.linalg.eigvalsh(a)
        if eig[0] <= 0:
            raise ValueError(f"A must be positive definite (min eigenvalue {eig[0]:g})")
        super().__init__(dim, eig[0], eig[-1])
        self.a = a.copy()
        self.a.setflags(write=False)

    def divergence(self, s, s_ref) -> float:
        d = self.check_point(s) - self.check_point(s_ref, "s_ref")
        return 0.5 * float(d @ self.a @ d)

    def grad(self, s) -> np.ndarray:
        return self.a @ self.check_point(s)

    def mirror(self, dual) -> np.ndarray:
        return np.linalg.solve(self.a, _as_vector(dual, self.dim, "dual"))

    def sample_point(self, rng) -> np.ndarray:
        return rng.standard_normal(self.dim)


class NegativeEntropy(Geometry):
    """phi(p) = sum p_i log p_i on the rho-interior of the simplex.

    Domain: entries >= rho, coordinates summing to 1 within 1e-12.  On that
    set phi is 1-strongly convex (Pinsker) and (1/rho)-smooth, so mu = 1 and
    L = 1/rho.  The mirror map normalizes onto the simplex, which fixes the
    additive gauge freedom of the dual coordinates.
    """

    kind = "negative-entropy"

    SUM_TOL = 1e-12

    def __init__(self, dim: int, rho: float = 1e-6):
        rho = float(rho)
        if not 0 < rho:
            raise ValueError(f"rho must be > 0, got {rho}")
        if rho * dim >= 1:
            raise ValueError(f"rho-interior is empty: rho*dim = {rho * dim:g} >= 1")
        super().__init__(dim, 1.0, 1.0 / rho)
        self.rho = rho

    def check_point(self, s, name: str = "point") -> np.ndarray:
        s = _as_vector(s, self.dim, name)
        if float(s.min()) < self.rho * (1 - 1e-9):
            raise DomainError(
                f"{name} leaves the rho-interior: min entry {s.min():g} < rho = {self.rho:g}"
            )
        if abs(float(s.sum()) - 1.0) > self.SUM_TOL:
            raise DomainError(f"{name} must sum to 1 within {self.SUM_TOL:g}, got {s.sum()!r}")
        return s

    def divergence(self, s, s_ref) -> float:
        s = self.check_point(s)
        r = self.check_point(s_ref, "s_ref")
        return float(np.sum(s * (np.log(s) - np.log(r))))

    def grad(self, s) -> np.ndarray:
        return 1.0 + np.log(self.check_point(s))

    def mirror(self, dual) -> np.ndarray:
        dual = _as_vector(dual, self.dim, "dual")
        w = np.exp(dual - dual.max())
        return w / w.sum()

    def sample_point(self, rng) -> np.ndarray:
        # Dirichlet draw squeezed to keep a 2*rho margin off the boundary.
        p = rng.dirichlet(np.ones(self.dim))
        return p * (1.0 - 2.0 * self.rho * self.dim) + 2.0 * self.rho

    def project(self, s) -> np.ndarray:
        s = _as_vector(s, self.dim)
        if float(s.min()) < self.rho * (1 - 1e-6) or abs(float(s.sum()) - 1.0) > 1e-9:
            raise DomainError(
                "simplex drift exceeds repairable tolerance: "
                f"min entry {s.min():g}, sum {s.sum()!r}"
            )
        s = np.clip(s, self.rho, None)
        return s / s.sum()


_KINDS = {
    SquaredEuclidean.kind: SquaredEuclidean,
    Quadratic.kind: Quadratic,
    NegativeEntropy.kind: NegativeEntropy,
}


def make_geometry(kind: str, dim: int, params: dict | None = None) -> Geometry:
    """Build a geometry from its config form (kind, dim, kind-specific params)."""
    params = dict(params or {})
    if kind == SquaredEuclidean.kind:
        extra = set(params)
    elif kind == Quadratic.kind:
        if "a" not in params:
            raise ValueError("quadratic geometry requires params.a")
        extra = set(params) - {"a"}
    elif kind == NegativeEntropy.kind:
        extra = set(params) - {"rho"}
    else:
        raise ValueError(f"unknown geometry kind {kind!r}; known: {sorted(_KINDS)}")
    if extra:
        raise ValueError(f"unknown geometry params for kind {kind!r}: {sorted(extra)}")
    if kind == SquaredEuclidean.kind:
        return SquaredEuclidean(dim)
    if kind == Quadratic.kind:
        return Quadratic(dim, params["a"])
    return NegativeEntropy(dim, params.get("rho", 1e-6))


def three_point_residual(g: Geometry, u, v, w) -> float:
    """Relative residual of the three-point identity at (u, v, w).

    D(u, w) = D(v, w) + <grad(v) - grad(w), u - v> + D(u, v) holds exactly in
    real arithmetic for any Bregman divergence; the returned value is
    |lhs - rhs| / max(1, |lhs|) and measures floating-point defect only.
    """
    u = g.check_point(u, "u")
    v = g.check_point(v, "v")
    w = g.check_point(w, "w")
    lhs = g.divergence(u, w)
    rhs = g.divergence(v, w) + float(np.dot(g.grad(v) - g.grad(w), u - v)) + g.divergence(u, v)
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def certify_constants(g: Geometry, n_pairs: int = 1000, seed: int = 0) -> dict:
    """Sampled certificates for the declared (mu, L) and the map contracts.

    Returns worst-case margins over n_pairs random pairs: nonnegativity of the
    divergence, mu-strong convexity and L-smoothness against ||s - s'||^2 / 2,
    relative mirror-inversion error, and the three-point residual.  Margins are
    signed so that negative values are violations.
    """
    rng = np.random.default_rng(seed)
    worst = {
        "divergence_min": np.inf,
        "strong_convexity_margin": np.inf,
        "smoothness_margin": np.inf,
        "mirror_inversion_rel": 0.0,
        "three_point_residual": 0.0,
    }
    for _ in range(n_pairs):
        s = g.sample_point(rng)
        r = g.sample_point(rng)
        d = s - r
        sq = 0.5 * float(np.dot(d, d))
        div = g.divergence(s, r)
        worst["divergence_min"] = min(worst["divergence_min"], div)
        worst["strong_convexity_margin"] = min(worst["strong_convexity_margin"], div - g.mu * sq)
        worst["smoothness_margin"] = min(worst["smoothness_margin"], g.L * sq - div)
        back = g.mirror(g.grad(s))
        worst["mirror_inversion_rel"] = max(
            worst["mirror_inversion_rel"],
            float(np.abs(back - s).max()) / max(1.0, float(np.abs(s).max())),
        )
        t = g.sample_point(rng)
        worst["three_point_residual"] = max(worst["three_point_residual"], three_point_residual(g, s, r, t))
    return worst
