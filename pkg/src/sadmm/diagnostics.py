"""Metrics, reference optima and exact-expectation checks of the ACC-SADMM
convergence argument.

The checks here turn the analysis of the accelerated method into numeric
assertions:

* :func:`check_multiplier_identities` recomputes the auxiliary multiplier
  ``lam_hat = lam_tilde + beta (1 - theta1)/theta1 (A x - b)`` from a recorded
  run and verifies its update and continuity identities.
* :func:`check_one_step_inequality` evaluates both sides of the one-step
  inequality with the expectation over the sampled index computed exactly.
* :func:`check_aggregate_bound` enumerates every sampling path of a short
  run and evaluates both sides of the bound after `S` epochs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .solvers.acc import (acc_epoch_boundary, acc_inner_step, current_output,
                          init_acc_state)
from .solvers.baselines import solve_linearized_admm
from .solvers.common import ThetaSchedule
from .estimators import SeededSampler
from .trace import test_loss

__all__ = [
    "ReferenceError",
    "ReferenceOptimum",
    "compute_reference",
    "constraint_violation",
    "objective_gap",
    "test_loss",
    "lam_hat",
    "check_multiplier_identities",
    "acc_state_at",
    "check_one_step_inequality",
    "check_aggregate_bound",
    "rate_slope",
    "CheckResult",
    "DiagnosticReport",
    "MAX_PATHS",
]

MAX_PATHS = 10 ** 5


class ReferenceError(RuntimeError):
    """A reference solve did not reach the requested accuracy."""


@dataclass
class ReferenceOptimum:
    x1: np.ndarray
    x2: np.ndarray
    lam: np.ndarray
    f_star: float
    method: str
    residual: float
    iterations: int


def constraint_violation(problem, x1, x2):
    """``||A1 x1 + A2 x2 - b||``."""
    return float(np.linalg.norm(problem.residual(x1, x2)))


def objective_gap(problem, x1, x2, ref):
    """Reported objective minus ``F*``; may be slightly negative, never clamped."""
    f_star = ref.f_star if isinstance(ref, ReferenceOptimum) else float(ref)
    return problem.reported_objective(x1, x2) - f_star


def _is_identity_split(problem):
    return (problem.A1.scale == -1.0 and problem.f1.lipschitz == 0.0
            and not np.any(problem.b) and problem.A2.scale == 1.0)


def _fista(problem, max_iter, tol):
    """Restarted FISTA on ``min h1(x) + h2(x) + f2(x)`` for the identity split.

    Requires ``h2 == 0``; returns the primal point and ``lam = -grad f2``.
    """
    p = problem
    f2, h1 = p.f2, p.h1
    step = 1.0 / f2.lipschitz
    x = np.zeros(p.d2)
    z, t = x.copy(), 1.0
    for it in range(1, max_iter + 1):
        x_new = h1.prox(z - step * f2.gradient(z), step)
        if float(np.dot(z - x_new, x_new - x)) > 0.0:  # gradient-based restart
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = np.linalg.norm(x_new - x) / (1.0 + np.linalg.norm(x_new))
        x, t = x_new, t_new
        if change <= tol:
            return x, -f2.gradient(x), it, True
    return x, -f2.gradient(x), max_iter, False


def compute_reference(problem, budget=100000, method="ladmm", beta=1.0, tol=1e-14,
                      max_residual=1e-9):
    """High-accuracy solution used as ``x*``, ``lam*`` and ``F*``.

    Parameters
    ----------
    budget : int
        Iteration cap; each iteration costs one full gradient (one epoch
        equivalent). At least 1000.
    method : {"ladmm", "fista"}
        ``"ladmm"`` runs deterministic linearized ADMM. ``"fista"`` solves
        the eliminated problem ``min mu||x||_1 + f2(x)`` directly and is
        only available for the identity split.

    Raises
    ------
    ReferenceError
        If the constraint residual exceeds `max_residual` or the solver hit
        the budget before its stopping test.
    """
    if budget < 1000:
        raise ValueError("reference budget must be at least 1000 iterations")
    if method == "ladmm":
        x1, x2, lam, it, ok = solve_linearized_admm(problem, beta=beta, max_iter=budget, tol=tol)
    elif method == "fista":
        if not _is_identity_split(problem) or problem.h2.value(np.ones(problem.d2)) != 0.0:
            raise ValueError("fista reference needs the identity split with h2 = 0")
        x2, lam, it, ok = _fista(problem, budget, tol)
        x1 = problem.A2(x2)
    else:
        raise ValueError(f"unknown reference method {method!r}")
    res = constraint_violation(problem, x1, x2)
    if not ok or res > max_residual:
        raise ReferenceError(
            f"{method} reference not converged (residual {res:.2e}, {it} iterations); "
            "increase the budget")
    return ReferenceOptimum(x1=x1, x2=x2, lam=lam, f_star=problem.reported_objective(x1, x2),
                            method=method, residual=res, iterations=it)


# ---------------------------------------------------------------------------
# multiplier identities

def lam_hat(lam_tilde, ax, b, beta, theta1):
    """``lam_tilde + beta (1 - theta1)/theta1 (A x - b)``."""
    return lam_tilde + (beta * (1.0 - theta1) / theta1) * (ax - b)


def _rel(diff, ref):
    return float(np.linalg.norm(diff) / (1.0 + np.linalg.norm(ref)))


def check_multiplier_identities(records, problem, beta, tol=1e-9):
    """Maximum relative deviations of the three multiplier identities.

    Parameters
    ----------
    records : list of dict
        Per-step and per-boundary records from a run with
        ``record_identities=True``.

    Returns
    -------
    dict
        ``{"update": dev, "difference": dev, "continuity": dev, "passed": bool}``
        where deviations are ``||lhs - rhs|| / (1 + ||lam_hat||)``.
    """
    if not records:
        raise ValueError("no identity records; rerun with record_identities=True")
    b = problem.b
    dev = {"update": 0.0, "difference": 0.0, "continuity": 0.0}
    for r in records:
        th1 = r["theta1"]
        if r["kind"] == "step":
            th2 = r["theta2"]
            hat_k = lam_hat(r["lam_tilde"], r["ax"], b, beta, th1)
            hat_next = lam_hat(r["lam_tilde_next"], r["ax_next"], b, beta, th1)
            direct = r["lam"] + (beta / th1) * (r["ax_next"] - b)
            dev["update"] = max(dev["update"], _rel(hat_next - direct, hat_next))
            diff = (beta / th1) * ((r["ax_next"] - b) - (1.0 - th1 - th2) * (r["ax"] - b)
                                   - th2 * (r["b_tilde"] - b))
            dev["difference"] = max(dev["difference"], _rel(hat_next - hat_k - diff, hat_next))
        elif r["kind"] == "boundary":
            end = lam_hat(r["lam_tilde_end"], r["ax"], b, beta, th1)
            start = lam_hat(r["lam_tilde_start"], r["ax"], b, beta, r["theta1_next"])
            dev["continuity"] = max(dev["continuity"], _rel(start - end, end))
        else:
            raise ValueError(f"unknown record kind {r['kind']!r}")
    dev["passed"] = all(v <= tol for v in dev.values())
    return dev


# ---------------------------------------------------------------------------
# one-step and aggregate inequalities

def acc_state_at(problem, opts, s, k, seed=0):
    """State at epoch `s`, inner index `k` after a sampled run from zero."""
    schedule = ThetaSchedule(m=opts.epoch_length(problem.n), c=opts.c, tau=opts.tau)
    sampler = SeededSampler(seed, opts.stream_id)
    state = init_acc_state(problem)
    for e in range(s + 1):
        if e > 0:
            state = acc_epoch_boundary(problem, state, schedule, opts)
        for _ in range(schedule.m if e < s else k):
            state = acc_inner_step(problem, state, schedule, opts, sampler)
    return state, schedule


def _lag(problem, x1, x2, lam_star, f_star):
    return problem.objective(x1, x2) - f_star + float(np.dot(lam_star, problem.residual(x1, x2)))


def _g3_sq(problem, v, L1, beta, theta1):
    return ((L1 + beta * problem.norm_a1 / theta1) * float(v @ v)
            - (beta / theta1) * float(np.sum(problem.A1(v) ** 2)))


def check_one_step_inequality(problem, state, schedule, opts, x1_star, x2_star, lam_star):
    """Both sides of the one-step inequality at `state`, exact in expectation.

    ``lhs = E L(x^{k+1}) - theta2 L(x_tilde) - (1 - theta1 - theta2) L(x^k)``
    with ``L(x) = F(x) - F(x*) + <lam*, A x - b>``; ``rhs`` collects the
    multiplier and weighted-distance telescoping terms. The expectation is
    taken by enumerating all `n` single-sample draws.
    """
    if opts.batch_size != 1:
        raise ValueError("exact expectation needs batch size 1")
    p, beta = problem, opts.beta
    n = p.n
    if n > 10 ** 4:
        raise ValueError("exact expectation limited to n <= 10^4")
    th1, th2 = schedule(state.s)
    L1, L2 = opts.lipschitz(p)
    w4 = (1.0 + 1.0 / th2) * L2 + beta * p.norm_a2 / th1
    f_star = p.objective(x1_star, x2_star)
    mom = 1.0 - th1 - th2
    c1 = mom * state.x1 + th2 * state.xt1 + th1 * x1_star
    c2 = mom * state.x2 + th2 * state.xt2 + th1 * x2_star

    hat_k = lam_hat(state.lam_tilde, p.constraint(state.x1, state.x2), p.b, beta, th1)
    e_lag = e_hat = e_n1 = e_n2 = 0.0
    for i in range(n):
        nxt = acc_inner_step(p, state, schedule, opts, indices=np.array([i]))
        e_lag += _lag(p, nxt.x1, nxt.x2, lam_star, f_star)
        hat = lam_hat(nxt.lam_tilde, p.constraint(nxt.x1, nxt.x2), p.b, beta, th1)
        e_hat += float(np.sum((hat - lam_star) ** 2))
        e_n1 += _g3_sq(p, nxt.x1 - c1, L1, beta, th1)
        e_n2 += w4 * float(np.sum((nxt.x2 - c2) ** 2))
    e_lag, e_hat, e_n1, e_n2 = e_lag / n, e_hat / n, e_n1 / n, e_n2 / n

    lhs = (e_lag - th2 * _lag(p, state.xt1, state.xt2, lam_star, f_star)
           - mom * _lag(p, state.x1, state.x2, lam_star, f_star))
    rhs = (th1 / (2.0 * beta) * (float(np.sum((hat_k - lam_star) ** 2)) - e_hat)
           + 0.5 * (_g3_sq(p, state.y1 - c1, L1, beta, th1) - e_n1)
           + 0.5 * (w4 * float(np.sum((state.y2 - c2) ** 2)) - e_n2))
    return lhs, rhs


def check_aggregate_bound(problem, opts, epochs, x1_star, x2_star, lam_star, max_paths=MAX_PATHS,
                   x1_0=None, x2_0=None, lam_tilde_0=None):
    """Aggregate bound after `epochs` epochs, with every sampling path enumerated.

    Returns a dict with ``lhs``/``rhs`` for the bound as derived (output
    weight ``W = (m-1)(theta1+theta2)+1`` and penalty-weighted distance
    norms), ``lhs_printed``/``rhs_printed`` for the variant with ``m`` in
    place of ``W`` and the penalty dropped from the norms, the number of
    paths and the largest deviation of the closed form of the final
    auxiliary multiplier. The run starts from ``(x1_0, x2_0, lam_tilde_0)``,
    zeros by default.
    """
    if opts.batch_size != 1:
        raise ValueError("path enumeration needs batch size 1")
    p, beta = problem, opts.beta
    schedule = ThetaSchedule(m=opts.epoch_length(p.n), c=opts.c, tau=opts.tau)
    m, n = schedule.m, p.n
    paths = n ** (m * epochs)
    if paths > max_paths:
        raise ValueError(f"{paths} paths exceed the enumeration cap {max_paths}")
    L1, L2 = opts.lipschitz(p)
    th10, th2 = schedule(0)
    the = schedule.theta1(epochs - 1)
    W = (m - 1) * (the + th2) + 1.0
    alpha = 1.0 + 1.0 / th2
    f_star = p.objective(x1_star, x2_star)

    start = init_acc_state(p, x1_0, x2_0, lam_tilde_0)
    r0 = p.residual(start.x1, start.x2)
    shift = start.lam_tilde - (beta * (m - 1) * th2 / th10) * r0 - lam_star

    acc = {"norm": 0.0, "lag": 0.0, "hat_dev": 0.0}

    def leaf(state):
        o1, o2 = current_output(state, schedule)
        r = p.residual(o1, o2)
        v = (beta * W / the) * r + shift
        acc["norm"] += float(v @ v)
        acc["lag"] += _lag(p, o1, o2, lam_star, f_star)
        hat = lam_hat(state.lam_tilde, p.constraint(state.x1, state.x2), p.b, beta, the)
        acc["hat_dev"] = max(acc["hat_dev"], _rel(hat - lam_star - v, hat))
        acc["printed"] = acc.get("printed", 0.0) + float(
            np.sum(((beta * m / the) * r + shift) ** 2))

    def walk(state):
        if state.k == m:
            if state.s == epochs - 1:
                leaf(state)
                return
            state = acc_epoch_boundary(p, state, schedule, opts)
        for i in range(n):
            walk(acc_inner_step(p, state, schedule, opts, indices=np.array([i])))

    walk(start)
    e_norm, e_lag, e_printed = acc["norm"] / paths, acc["lag"] / paths, acc["printed"] / paths

    lag0 = _lag(p, start.x1, start.x2, lam_star, f_star)
    c3 = (1.0 - th10 + (m - 1) * th2) / th10
    hat0 = lam_hat(start.lam_tilde, p.constraint(start.x1, start.x2), p.b, beta, th10)
    d1, d2 = start.x1 - x1_star, start.x2 - x2_star
    a1d = float(np.sum(p.A1(d1) ** 2))
    dual0 = float(np.sum((hat0 - lam_star) ** 2)) / (2.0 * beta)

    def rhs_with(pen):
        n1 = (th10 * L1 + pen * p.norm_a1) * float(d1 @ d1) - pen * a1d
        n2 = (alpha * th10 * L2 + pen * p.norm_a2) * float(d2 @ d2)
        return c3 * lag0 + dual0 + 0.5 * n1 + 0.5 * n2

    return {
        "lhs": e_norm / (2.0 * beta) + (W / the) * e_lag,
        "rhs": rhs_with(beta),
        "lhs_printed": e_printed / (2.0 * beta) + (m / the) * e_lag,
        "rhs_printed": rhs_with(1.0),
        "paths": paths,
        "multiplier_closed_form_dev": acc["hat_dev"],
    }


# ---------------------------------------------------------------------------
# rates

def rate_slope(S, values):
    """Least-squares slope of ``log(value)`` against ``log(S)``.

    Nonpositive values are treated as converged and excluded with a warning.
    """
    S = np.asarray(S, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if S.shape != v.shape:
        raise ValueError("S and values differ in length")
    if S.size < 4:
        raise ValueError("rate fit needs at least 4 points")
    if np.any(S <= 0):
        raise ValueError("epoch counts must be positive")
    keep = v > 0
    if not np.all(keep):
        warnings.warn(f"excluded {int(np.sum(~keep))} nonpositive values from the rate fit",
                      stacklevel=2)
    if np.sum(keep) < 2:
        raise ValueError("fewer than two positive values left for the rate fit")
    slope, _ = np.polyfit(np.log(S[keep]), np.log(v[keep]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# reports

@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class DiagnosticReport:
    checks: list = field(default_factory=list)

    def add(self, name, value, threshold, passed, detail=""):
        self.checks.append(CheckResult(name, float(value), float(threshold), bool(passed), detail))

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_text(self):
        width = max((len(c.name) for c in self.checks), default=0)
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  "
                 f"value={c.value:.3e}  threshold={c.threshold:.1e}"
                 + (f"  ({c.detail})" if c.detail else "") for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_json(self):
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]},
                          indent=2)
