"""Averaged iteration engine.

One step of the loop is

    s_{t+1} = (1 - alpha_t) s_t + alpha_t T(s_t, t) + eta_t

with alpha_t drawn from a step schedule and eta_t from a perturbation model.
Runs record a divergence ledger e_t = D(s_t, s_star) together with the
rescaled series a_t = e_t (t+1)^2, the step sizes, update displacements and
perturbation sizes; optionally the full states.  Everything is deterministic
given the config seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .geometry import DomainError
from .operators import estimate_contraction

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig

log = logging.getLogger(__name__)

#: Sentinel returned by iterations_to_epsilon when the cap is hit first.
CENSORED = -1

SCHEDULE_KINDS = ("accelerated", "constant", "polynomial")


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule alpha_t; every kind keeps alpha in (0, 1].

    accelerated: alpha_t = 2 / (t + 2)
    constant:    alpha_t = c with c in (0, 1]
    polynomial:  alpha_t = c / (t + 1)^p with c in (0, 1], p >= 0
    """

    kind: str
    c: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind in ("constant", "polynomial"):
            if not 0 < self.c <= 1:
                raise ValueError(f"schedule c must lie in (0, 1], got {self.c}")
        if self.kind == "polynomial" and self.p < 0:
            raise ValueError(f"schedule p must be >= 0, got {self.p}")

    def alpha(self, t: int) -> float:
        if self.kind == "accelerated":
            return 2.0 / (t + 2)
        if self.kind == "constant":
            return self.c
        return self.c / (t + 1) ** self.p


def make_schedule(kind: str, params: dict | None = None) -> Schedule:
    params = dict(params or {})
    if kind == "accelerated":
        if params:
            raise ValueError(f"accelerated schedule takes no params, got {sorted(params)}")
        return Schedule(kind)
    if kind == "constant":
        extra = set(params) - {"c"}
        if extra:
            raise ValueError(f"unknown schedule params: {sorted(extra)}")
        if "c" not in params:
            raise ValueError("constant schedule requires params.c")
        return Schedule(kind, c=params["c"])
    if kind == "polynomial":
        extra = set(params) - {"c", "p"}
        if extra:
            raise ValueError(f"unknown schedule params: {sorted(extra)}")
        return Schedule(kind, c=params.get("c", 1.0), p=params.get("p", 1.0))
    raise ValueError(f"unknown schedule kind {kind!r}; known: {SCHEDULE_KINDS}")


class EngineError(RuntimeError):
    """Run failure at a specific iteration; carries the offending state."""

    def __init__(self, message: str, t: int, state: np.ndarray):
        super().__init__(message)
        self.t = t
        self.state = np.asarray(state, dtype=float)


@dataclass
class Trace:
    """Recorded run of length iterations + 1 (row 0 is the start state).

    Rows 0..T-1 describe steps actually taken; the final row records the
    terminal state's diagnostics (its alpha is schedule.alpha(T), its
    displacement is measured but unused, its eta_div is 0).
    """

    t: np.ndarray
    e: np.ndarray
    a: np.ndarray
    alpha: np.ndarray
    delta_norm_sq: np.ndarray
    eta_div: np.ndarray
    states: np.ndarray | None = None
    etas: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def iterations(self) -> int:
        return self.t.size - 1


def _require_finite(s: np.ndarray, t: int, what: str):
    if not np.all(np.isfinite(s)):
        raise EngineError(f"non-finite {what} at iteration {t}", t, s)


def run(cfg: RunConfig) -> Trace:
    """Execute the averaged iteration described by cfg and return its trace."""
    g = cfg.geometry
    op = cfg.operator
    sched = cfg.schedule
    pm = cfg.perturbation
    T = cfg.iterations

    s0_arr = np.asarray(cfg.s0, dtype=float)
    try:
        s_star = op.fixed_point(geometry=g, tol=cfg.tolerances["fixed_point"])
        g.check_point(s_star, "fixed point")
        gamma_hat = estimate_contraction(
            op, g, n_pairs=cfg.contraction_pairs, rng_seed=cfg.seed + 1,
            skip_tol=cfg.tolerances["degenerate_pair"],
        )
    except DomainError as exc:
        raise EngineError(
            f"operator is incompatible with the geometry's domain: {exc}", -1, s0_arr
        ) from exc
    warnings: list[str] = []
    if gamma_hat + pm.kappa >= 1:
        warnings.append(
            f"gamma_hat + kappa = {gamma_hat:.6g} + {pm.kappa:.6g} >= 1: "
            "the contraction hypothesis fails for this instance and the "
            "accelerated bounds are vacuous"
        )
        log.warning(warnings[-1])

    s = g.project(g.check_point(s0_arr, "s0"))
    rng = np.random.default_rng(cfg.seed)
    noisy = not pm.is_zero

    e = np.empty(T + 1)
    a = np.empty(T + 1)
    alpha = np.empty(T + 1)
    delta_sq = np.empty(T + 1)
    eta_div = np.zeros(T + 1)
    states = np.empty((T + 1, g.dim)) if cfg.retain_states else None
    etas = np.zeros((T, g.dim)) if cfg.retain_states else None
    zero = np.zeros(g.dim)

    for t in range(T):
        e_t = g.divergence(s, s_star)
        al = sched.alpha(t)
        ts = op.apply(s, t)
        delta = ts - s
        e[t] = e_t
        a[t] = e_t * (t + 1) ** 2
        alpha[t] = al
        delta_sq[t] = float(np.dot(delta, delta))
        if states is not None:
            states[t] = s

        s_next = (1.0 - al) * s + al * ts
        if noisy:
            eta = pm.sample(g, s, s_star, e_t, al, rng)
            if np.any(eta):
                eta_div[t] = g.divergence(eta, zero)
            if etas is not None:
                etas[t] = eta
            s_next = s_next + eta
        _require_finite(s_next, t, "state")
        try:
            s = g.project(s_next)
        except DomainError as exc:
            raise EngineError(f"domain escape at iteration {t}: {exc}", t, s_next) from exc

    e[T] = g.divergence(s, s_star)
    a[T] = e[T] * (T + 1) ** 2
    alpha[T] = sched.alpha(T)
    final_delta = op.apply(s, T) - s
    delta_sq[T] = float(np.dot(final_delta, final_delta))
    if states is not None:
        states[T] = s

    return Trace(
        t=np.arange(T + 1),
        e=e,
        a=a,
        alpha=alpha,
        delta_norm_sq=delta_sq,
        eta_div=eta_div,
        states=states,
        etas=etas,
        meta={
            "config_digest": cfg.digest,
            "seed": cfg.seed,
            "gamma_hat": gamma_hat,
            "s_star": s_star.tolist(),
            "warnings": warnings,
        },
    )


def iterations_to_epsilon(cfg: RunConfig, eps: float, cap: int = 10**7) -> int:
    """Smallest t with D(s_t, s_star) <= eps, run incrementally without a trace.

    Requires a noise-free config (feedback time is a property of the clean
    iteration).  Returns CENSORED (-1) if the cap is reached first; callers
    must treat that as a censored observation, not a convergence time.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not cfg.perturbation.is_zero:
        raise ValueError("iterations_to_epsilon requires a noise-free config")

    g = cfg.geometry
    op = cfg.operator
    sched = cfg.schedule
    s0_arr = np.asarray(cfg.s0, dtype=float)
    try:
        s_star = op.fixed_point(geometry=g, tol=cfg.tolerances["fixed_point"])
        g.check_point(s_star, "fixed point")
    except DomainError as exc:
        raise EngineError(
            f"operator is incompatible with the geometry's domain: {exc}", -1, s0_arr
        ) from exc
    s = g.project(g.check_point(s0_arr, "s0"))

    if g.divergence(s, s_star) <= eps:
        return 0
    for t in range(cap):
        al = sched.alpha(t)
        try:
            s = g.project((1.0 - al) * s + al * op.apply(s, t))
        except DomainError as exc:
            raise EngineError(f"domain escape at iteration {t}: {exc}", t, s) from exc
        d = g.divergence(s, s_star)
        if not math.isfinite(d):
            raise EngineError(f"non-finite divergence at iteration {t + 1}", t + 1, s)
        if d <= eps:
            return t + 1
        if (t + 1) % 100_000 == 0:
            log.debug("iterations_to_epsilon: t=%d e=%.3e (target %.3e)", t + 1, d, eps)
    return CENSORED
