"""Numerical audits of the convergence argument along recorded runs.

Each audit replays one inequality of the accelerated descent analysis with
measured constants and reports the worst violation over a trace.  Nothing
here assumes an inequality holds: a violation is a finding about the
argument, not an error in the run.  The checks cover, in order, the descent
inequality for the averaged half-step, the cross-term bound coupling the
perturbation to the distance, the contraction recursion that a positive
rate beta must satisfy, the induction step that would turn that recursion
into a 1/(t+1)^2 bound, and the forward-iterated envelope it implies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from . import engine as _engine
from .geometry import Geometry, three_point_residual
from .operators import Operator, estimate_contraction, unrolled_depth

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig
    from .engine import Trace


class StatesRequiredError(ValueError):
    """The audit needs retained states (and perturbations) in the trace."""


@dataclass(frozen=True)
class BoundConstants:
    """Measured constants feeding the audited inequalities.

    c_sc, K and C0 have fixed recipes (c_sc = mu, K = sqrt(2/mu),
    C0 = 2 L^2 K^2 / c_sc); they may be passed explicitly, e.g. when
    rehydrating from JSON, but a stored C0 inconsistent with its recipe by
    more than 1e-12 relative is rejected.  M is the empirical worst ratio
    ||T(s_t) - s_t||^2 / e_t and beta an admissible contraction rate; both
    default to NaN until measured.
    """

    gamma_hat: float
    kappa: float
    delta0: float
    mu: float
    L: float
    c_sc: float = float("nan")
    K: float = float("nan")
    C0: float = float("nan")
    M: float = float("nan")
    beta: float = float("nan")

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.L < self.mu:
            raise ValueError(f"L must be >= mu, got L={self.L}, mu={self.mu}")
        if math.isnan(self.c_sc):
            object.__setattr__(self, "c_sc", self.mu)
        if math.isnan(self.K):
            object.__setattr__(self, "K", math.sqrt(2.0 / self.mu))
        recomputed = 2.0 * self.L**2 * self.K**2 / self.c_sc
        if math.isnan(self.C0):
            object.__setattr__(self, "C0", recomputed)
        elif abs(self.C0 - recomputed) > 1e-12 * max(1.0, abs(recomputed)):
            raise ValueError(
                f"stored C0 = {self.C0!r} disagrees with recomputed {recomputed!r}"
            )

    def theta(self, alpha_t: float) -> float:
        """Per-step contraction factor 1 - alpha_t (1 - gamma_hat)."""
        return 1.0 - alpha_t * (1.0 - self.gamma_hat)

    def noise_term(self, t: int) -> float:
        """Additive noise contribution 2 (1 + C0) delta0 / (t + 2) of the recursion."""
        return 2.0 * (1.0 + self.C0) * self.delta0 / (t + 2)

    def to_json_dict(self) -> dict:
        return {
            "gamma_hat": float(self.gamma_hat), "kappa": float(self.kappa),
            "delta0": float(self.delta0), "mu": float(self.mu), "L": float(self.L),
            "c_sc": float(self.c_sc), "K": float(self.K), "C0": float(self.C0),
            "M": None if math.isnan(self.M) else float(self.M),
            "beta": None if math.isnan(self.beta) else float(self.beta),
        }


@dataclass(frozen=True)
class CheckRecord:
    """Outcome of one inequality check over a trace."""

    name: str
    worst_violation: float
    worst_t: int
    tol: float
    passed: bool
    vacuous: bool = False
    note: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "worst_violation": float(self.worst_violation),
            "worst_t": int(self.worst_t),
            "tol": float(self.tol),
            "passed": bool(self.passed),
            "vacuous": bool(self.vacuous),
            "note": self.note,
        }


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log e_t against log(t+1) over a window."""

    slope: float
    r2: float
    t_lo: int
    t_hi: int
    n_points: int
    truncated: bool
    power_law: bool

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope, "r2": self.r2, "t_lo": self.t_lo, "t_hi": self.t_hi,
            "n_points": self.n_points, "truncated": self.truncated,
            "power_law": self.power_law,
        }


@dataclass(frozen=True)
class InductionAudit:
    """Truth table of the claimed induction-step inequality on a (beta, t) grid.

    The inequality (t+2)(t+2-2 beta)/(t+1)^2 <= 1 - 2 beta/(t+2) is evaluated
    verbatim; holds[i, j] records whether it is true at (beta_grid[i],
    t_grid[j]).  This is a claim audit, not a gate: the table is reported as
    found.
    """

    beta_grid: np.ndarray
    t_grid: np.ndarray
    holds: np.ndarray
    n_violations: int
    n_total: int

    def to_json_dict(self) -> dict:
        return {
            "beta_grid": [float(b) for b in self.beta_grid],
            "t_min": int(self.t_grid.min()),
            "t_max": int(self.t_grid.max()),
            "n_violations": self.n_violations,
            "n_total": self.n_total,
            "violations_per_beta": [int(n) for n in (~self.holds).sum(axis=1)],
        }


@dataclass
class AuditReport:
    """All checks for one run plus the fitted constants."""

    checks: list[CheckRecord]
    constants: BoundConstants
    beta_max: float
    M: float
    induction: InductionAudit
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "checks": [c.to_json_dict() for c in self.checks],
            "constants": self.constants.to_json_dict(),
            "fitted": {
                "beta_max": None if not math.isfinite(self.beta_max) else float(self.beta_max),
                "M": None if not math.isfinite(self.M) else float(self.M),
            },
            "induction": self.induction.to_json_dict(),
            "meta": self.meta,
        }


def measure_constants(trace: Trace, cfg: RunConfig) -> BoundConstants:
    """Assemble BoundConstants for a recorded run of cfg."""
    return BoundConstants(
        gamma_hat=float(trace.meta["gamma_hat"]),
        kappa=cfg.perturbation.kappa,
        delta0=cfg.perturbation.delta0,
        mu=cfg.geometry.mu,
        L=cfg.geometry.L,
        M=empirical_delta_ratio(trace),
    )


def empirical_delta_ratio(trace: Trace, floor: float = 1e-14) -> float:
    """Empirical M: worst ratio ||T(s_t) - s_t||^2 / e_t over steps with e_t > floor."""
    e = trace.e[:-1]
    d = trace.delta_norm_sq[:-1]
    mask = e > floor
    if not np.any(mask):
        return float("nan")
    return float(np.max(d[mask] / e[mask]))


def fit_rate(trace: Trace, window: tuple[int, int] | None = None,
             r2_threshold: float = 0.99, min_points: int = 10) -> RateFit:
    """Fit log e_t = slope * log(t+1) + b over the window [t_lo, t_hi].

    A default window of [T/10, T] is used when none is given.  Rows with
    e_t <= 0 cannot enter the log fit; the first such row truncates the
    window (reported via ``truncated``).  Fewer than min_points usable rows
    is an error, not a silent fit.
    """
    e = np.asarray(trace.e if hasattr(trace, "e") else trace, dtype=float)
    T = e.size - 1
    if window is None:
        t_lo, t_hi = max(1, T // 10), T
    else:
        t_lo, t_hi = int(window[0]), int(window[1])
    if not 0 <= t_lo < t_hi <= T:
        raise ValueError(f"window must satisfy 0 <= t_lo < t_hi <= {T}, got [{t_lo}, {t_hi}]")

    truncated = False
    seg = e[t_lo : t_hi + 1]
    bad = np.nonzero(seg <= 0)[0]
    if bad.size:
        t_hi = t_lo + int(bad[0]) - 1
        truncated = True
    n = t_hi - t_lo + 1
    if n < min_points:
        raise ValueError(
            f"rate window [{t_lo}, {t_hi}] has {max(n, 0)} usable points, need {min_points}"
        )
    tt = np.arange(t_lo, t_hi + 1, dtype=float)
    x = np.log(tt + 1.0)
    y = np.log(e[t_lo : t_hi + 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        slope=float(slope), r2=float(r2), t_lo=t_lo, t_hi=t_hi, n_points=n,
        truncated=truncated, power_law=bool(r2 >= r2_threshold),
    )


def _require_states(trace: Trace, what: str):
    if trace.states is None:
        raise StatesRequiredError(
            f"{what} audit needs retained states; rerun with retain_states enabled"
        )


def audit_descent(trace: Trace, g: Geometry, op: Operator, bc: BoundConstants,
                  tol: float = 1e-10) -> CheckRecord:
    """Check the half-step descent bound at every recorded step.

    With x_t = s_t + alpha_t (T(s_t) - s_t), the claim is
    D(x_t, s_star) <= theta_t e_t + (L/2) alpha_t^2 ||Delta_t||^2.
    Violations are max(lhs - rhs, 0); the worst one is reported.
    """
    _require_states(trace, "descent")
    s_star = np.asarray(trace.meta["s_star"], dtype=float)
    worst, worst_t = -math.inf, -1
    for t in range(trace.iterations):
        s = trace.states[t]
        al = float(trace.alpha[t])
        ts = op.apply(s, t)
        delta = ts - s
        x = (1.0 - al) * s + al * ts
        lhs = g.divergence(x, s_star)
        rhs = bc.theta(al) * float(trace.e[t]) + 0.5 * bc.L * al * al * float(np.dot(delta, delta))
        v = lhs - rhs
        if v > worst:
            worst, worst_t = v, t
    violation = max(worst, 0.0)
    return CheckRecord(
        name="descent", worst_violation=violation, worst_t=worst_t, tol=tol,
        passed=violation <= tol,
    )


def audit_cross_term(trace: Trace, g: Geometry, bc: BoundConstants,
                     tol: float = 1e-10) -> CheckRecord:
    """Check the perturbation cross-term bound at every noisy step.

    The coupling R_t = |<grad(x_t) - grad(s_star), eta_t>| is claimed to obey
    R_t <= D(x_t, s_star)/2 + C0 D(eta_t, 0).  Steps with eta_t = 0 satisfy
    it trivially and are skipped; a fully noise-free trace yields a vacuous
    pass, flagged as such.
    """
    _require_states(trace, "cross-term")
    if trace.etas is None:
        raise StatesRequiredError(
            "cross-term audit needs retained perturbations; rerun with retain_states enabled"
        )
    s_star = np.asarray(trace.meta["s_star"], dtype=float)
    grad_star = g.grad(s_star)
    zero = np.zeros(g.dim)
    worst, worst_t = -math.inf, -1
    n_noisy = 0
    for t in range(trace.iterations):
        eta = trace.etas[t]
        if not np.any(eta):
            continue
        n_noisy += 1
        x = trace.states[t + 1] - eta
        lhs = abs(float(np.dot(g.grad(x) - grad_star, eta)))
        rhs = 0.5 * g.divergence(x, s_star) + bc.C0 * g.divergence(eta, zero)
        v = lhs - rhs
        if v > worst:
            worst, worst_t = v, t
    if n_noisy == 0:
        return CheckRecord(
            name="cross-term", worst_violation=0.0, worst_t=-1, tol=tol, passed=True,
            vacuous=True, note="no nonzero perturbations in trace",
        )
    violation = max(worst, 0.0)
    return CheckRecord(
        name="cross-term", worst_violation=violation, worst_t=worst_t, tol=tol,
        passed=violation <= tol, note=f"{n_noisy} noisy steps",
    )


def audit_recursion(trace: Trace, bc: BoundConstants) -> tuple[float, CheckRecord]:
    """Largest beta >= 0 with e_{t+1} <= (1 - 2 beta/(t+2)) e_t + noise_t for all t.

    Each step with e_t > 0 bounds beta from above in closed form, so the
    answer is the minimum of those per-step bounds (clamped at 0).  Steps
    with e_t = 0 contribute a beta-independent feasibility condition; if one
    fails, no beta works and 0 is reported with passed=False.
    """
    e = trace.e
    best = math.inf
    binding_t = -1
    feasible = True
    infeasible_t = -1
    for t in range(trace.iterations):
        n_t = bc.noise_term(t)
        if e[t] > 0:
            b = (e[t] - e[t + 1] + n_t) * (t + 2) / (2.0 * e[t])
            if b < best:
                best, binding_t = b, t
        elif e[t + 1] > n_t:
            feasible = False
            infeasible_t = t
    if not feasible:
        rec = CheckRecord(
            name="recursion", worst_violation=float(e[infeasible_t + 1]), worst_t=infeasible_t,
            tol=0.0, passed=False,
            note="a zero-divergence step grows faster than the noise term; no beta >= 0 works",
        )
        return 0.0, rec
    beta_max = max(0.0, best) if binding_t >= 0 else math.inf
    rec = CheckRecord(
        name="recursion", worst_violation=0.0, worst_t=binding_t, tol=0.0,
        passed=beta_max > 0,
        note=f"beta_max = {beta_max!r}, binding at t = {binding_t}",
    )
    return beta_max, rec


def audit_induction_step(beta_grid=None, t_grid=None, tol: float = 1e-12) -> InductionAudit:
    """Evaluate the claimed induction-step inequality on a grid, verbatim.

    Checks (t+2)(t+2-2 beta)/(t+1)^2 <= 1 - 2 beta/(t+2) + tol cell by cell.
    Defaults: beta in {0.1, ..., 0.9}, t in {0, ..., 100}.
    """
    beta_grid = np.linspace(0.1, 0.9, 9) if beta_grid is None else np.asarray(beta_grid, dtype=float)
    t_grid = np.arange(0, 101) if t_grid is None else np.asarray(t_grid, dtype=int)
    holds = np.empty((beta_grid.size, t_grid.size), dtype=bool)
    for i, beta in enumerate(beta_grid):
        tt = t_grid.astype(float)
        lhs = (tt + 2) * (tt + 2 - 2 * beta) / (tt + 1) ** 2
        rhs = 1.0 - 2.0 * beta / (tt + 2)
        holds[i] = lhs <= rhs + tol
    n_total = int(holds.size)
    n_violations = int((~holds).sum())
    return InductionAudit(
        beta_grid=beta_grid, t_grid=t_grid, holds=holds,
        n_violations=n_violations, n_total=n_total,
    )


def gronwall_envelope(e0: float, bc: BoundConstants, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical envelopes for e_t implied by the recursion with rate beta.

    Returns (iterated, closed_form), both of length T+1: the recursion
    e_{t+1} = (1 - 2 beta/(t+2)) e_t + noise_t iterated forward exactly from
    e0, and the closed-form bound a0/(t+1)^2 + (2 (1+C0) delta0 / beta)/(t+1)
    with a0 = e0.  Requires beta > 0.
    """
    if not bc.beta > 0:  # also catches NaN
        raise ValueError(f"gronwall envelope needs beta > 0, got {bc.beta!r}")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    env = np.empty(T + 1)
    env[0] = e0
    for t in range(T):
        env[t + 1] = (1.0 - 2.0 * bc.beta / (t + 2)) * env[t] + bc.noise_term(t)
    tt = np.arange(T + 1, dtype=float)
    closed = e0 / (tt + 1) ** 2 + (2.0 * (1.0 + bc.C0) * bc.delta0 / bc.beta) / (tt + 1)
    return env, closed


@dataclass(frozen=True)
class FeedComparison:
    """Feedback iterations versus feedforward depth to the same accuracy."""

    t_feedback: int
    d_feedforward: int
    gamma_hat: float
    e0: float

    @property
    def censored(self) -> bool:
        return self.t_feedback == _engine.CENSORED

    def to_json_dict(self) -> dict:
        return {
            "t_feedback": self.t_feedback, "d_feedforward": self.d_feedforward,
            "gamma_hat": self.gamma_hat, "e0": self.e0, "censored": self.censored,
        }


def compare_feedback_feedforward(cfg: RunConfig, eps: float, cap: int = 10**7) -> FeedComparison:
    """Iterations of the averaged loop vs unrolled operator depth to reach eps.

    Both start from cfg.s0.  The feedback count runs the loop incrementally;
    the feedforward depth composes the raw operator using the measured
    contraction factor.  With eps >= e0 both are 0.
    """
    g, op = cfg.geometry, cfg.operator
    s_star = op.fixed_point(geometry=g, tol=cfg.tolerances["fixed_point"])
    s0 = g.project(g.check_point(np.asarray(cfg.s0, dtype=float), "s0"))
    e0 = g.divergence(s0, s_star)
    gamma_hat = estimate_contraction(
        op, g, cfg.contraction_pairs, cfg.seed + 1,
        skip_tol=cfg.tolerances["degenerate_pair"],
    )
    t_fb = _engine.iterations_to_epsilon(cfg, eps, cap=cap)
    depth = 0 if eps >= e0 else unrolled_depth(op, g, e0, eps, gamma_hat=gamma_hat)
    return FeedComparison(t_feedback=t_fb, d_feedforward=depth, gamma_hat=gamma_hat, e0=e0)


def build_audit_report(trace: Trace, cfg: RunConfig, tol: float | None = None) -> AuditReport:
    """Run every audit that the trace supports and bundle the findings.

    State-dependent checks (three-point spot check, descent, cross-term)
    require retained states; traces without them get a report limited to the
    recursion, induction and envelope checks.
    """
    if tol is None:
        tol = cfg.tolerances.get("audit_violation", 1e-10)
    g, op = cfg.geometry, cfg.operator
    bc = measure_constants(trace, cfg)
    checks: list[CheckRecord] = []

    if trace.states is not None:
        checks.append(_audit_three_point(trace, g, tol=1e-9))
        checks.append(audit_descent(trace, g, op, bc, tol=tol))
        checks.append(audit_cross_term(trace, g, bc, tol=tol))

    beta_max, rec = audit_recursion(trace, bc)
    checks.append(rec)
    induction = audit_induction_step()

    bc = replace(bc, beta=beta_max if math.isfinite(beta_max) else float("nan"))
    if beta_max > 0 and math.isfinite(beta_max):
        env, _ = gronwall_envelope(float(trace.e[0]), bc, trace.iterations)
        gap = trace.e - env
        worst_t = int(np.argmax(gap))
        violation = max(float(gap[worst_t]), 0.0)
        checks.append(CheckRecord(
            name="envelope-domination", worst_violation=violation, worst_t=worst_t,
            tol=1e-12, passed=violation <= 1e-12,
            note=f"iterated recursion envelope with beta = {beta_max!r}",
        ))

    return AuditReport(
        checks=checks, constants=bc, beta_max=beta_max, M=bc.M, induction=induction,
        meta={
            "config_digest": trace.meta.get("config_digest"),
            "iterations": trace.iterations,
            "warnings": list(trace.meta.get("warnings", [])),
        },
    )


def _audit_three_point(trace: Trace, g: Geometry, tol: float, n_triples: int = 100,
                       seed: int = 0) -> CheckRecord:
    """Spot-check the three-point identity on triples of recorded states."""
    rng = np.random.default_rng(seed)
    n = trace.states.shape[0]
    worst, worst_t = 0.0, -1
    for _ in range(n_triples):
        i, j, k = rng.integers(0, n, size=3)
        r = three_point_residual(g, trace.states[i], trace.states[j], trace.states[k])
        if r > worst:
            worst, worst_t = r, int(i)
    return CheckRecord(
        name="three-point-identity", worst_violation=worst, worst_t=worst_t, tol=tol,
        passed=worst <= tol,
    )
