"""Accelerated stochastic ADMM with variance reduction (ACC-SADMM).

Each epoch runs `m` inner steps that combine an SVRG gradient estimate with
a damped Nesterov extrapolation; the multiplier carries a compensation term
that keeps ``A x`` close to its value at the epoch snapshot. The penalty
seen by the primal updates is ``beta / theta1_s`` and grows linearly in the
epoch index. The reported point is a weighted average of the last epoch's
iterates (non-ergodic).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
import numpy as np

from ..estimators import (SeededSampler, SvrgSnapshot, make_snapshot, sample_minibatch,
                          svrg_gradient)
from ..trace import TraceRecorder
from .common import Solution, ThetaSchedule, check_iterate

__all__ = [
    "AccState",
    "init_acc_state",
    "acc_inner_step",
    "acc_epoch_boundary",
    "acc_output",
    "output_weights",
    "snapshot_weights",
    "solve_acc_sadmm",
]


@dataclass
class AccState:
    """Iterate state inside epoch `s` after `k` inner steps.

    ``sum1``/``sum2`` accumulate ``x^1 .. x^(m-1)`` of the current epoch;
    ``lam`` is the last multiplier ``lambda^(k-1)`` used by a primal step.
    """

    x1: np.ndarray
    x2: np.ndarray
    x1_prev: np.ndarray
    x2_prev: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    xt1: np.ndarray
    xt2: np.ndarray
    lam_tilde: np.ndarray
    lam: np.ndarray
    b_tilde: np.ndarray
    snapshot: SvrgSnapshot
    sum1: np.ndarray
    sum2: np.ndarray
    s: int = 0
    k: int = 0
    grad_evals: int = 0

    def copy(self):
        return dataclasses.replace(self)


def init_acc_state(problem, x1=None, x2=None, lam_tilde=None):
    """Start of epoch 0: ``x = y = x_tilde = x0`` and a fresh snapshot."""
    z1, z2, zl = problem.zeros()
    x1 = z1 if x1 is None else np.asarray(x1, dtype=np.float64).copy()
    x2 = z2 if x2 is None else np.asarray(x2, dtype=np.float64).copy()
    lam_tilde = zl if lam_tilde is None else np.asarray(lam_tilde, dtype=np.float64).copy()
    snap = make_snapshot(problem.f2, x2)
    return AccState(x1=x1, x2=x2, x1_prev=x1, x2_prev=x2, y1=x1, y2=x2, xt1=x1, xt2=x2,
                    lam_tilde=lam_tilde, lam=lam_tilde, b_tilde=problem.constraint(x1, x2),
                    snapshot=snap, sum1=np.zeros_like(x1), sum2=np.zeros_like(x2),
                    grad_evals=snap.grad_eval_cost)


def _alpha(b, theta2):
    return 1.0 + 1.0 / (b * theta2)


def step_constants(problem, schedule, opts, s):
    """Proximal weights ``(eta1, eta2)`` of the two primal updates in epoch `s`."""
    th1, th2 = schedule(s)
    L1, L2 = opts.lipschitz(problem)
    eta1 = L1 + opts.beta * problem.norm_a1 / th1
    eta2 = _alpha(opts.batch_size, th2) * L2 + opts.beta * problem.norm_a2 / th1
    return eta1, eta2


def acc_inner_step(problem, state, schedule, opts, sampler=None, indices=None, records=None):
    """One inner iteration; returns a new state.

    Pass explicit minibatch `indices` to bypass the sampler (used by the
    exact-expectation checks). If `records` is a list, the quantities needed
    to re-derive the multiplier identities are appended to it.
    """
    if state.k >= schedule.m:
        raise ValueError(f"epoch {state.s} already has {schedule.m} inner steps")
    p, beta = problem, opts.beta
    th1, th2 = schedule(state.s)
    eta1, eta2 = step_constants(problem, schedule, opts, state.s)
    if indices is None:
        indices = sample_minibatch(sampler, p.n, opts.batch_size)

    ax = p.constraint(state.x1, state.x2)
    lam = state.lam_tilde + (beta * th2 / th1) * (ax - state.b_tilde)

    pen = beta / th1
    r_y = p.constraint(state.y1, state.y2) - p.b
    g1 = p.f1.gradient(state.y1) + p.A1.adjoint(pen * r_y + lam)
    x1 = p.h1.prox(state.y1 - g1 / eta1, 1.0 / eta1)

    g2 = svrg_gradient(p.f2, state.y2, state.snapshot, indices)
    r_mid = p.A1(x1) + p.A2(state.y2) - p.b
    x2 = p.h2.prox(state.y2 - (g2 + p.A2.adjoint(pen * r_mid + lam)) / eta2, 1.0 / eta2)

    ax_new = p.constraint(x1, x2)
    lam_tilde = lam + beta * (ax_new - p.b)

    mom = 1.0 - th1 - th2
    y1 = x1 + mom * (x1 - state.x1)
    y2 = x2 + mom * (x2 - state.x2)

    k = state.k + 1
    step = state.s * schedule.m + k
    check_iterate(step, x1, x2, lam_tilde, threshold=opts.divergence_threshold)

    in_sum = k <= schedule.m - 1
    new = dataclasses.replace(
        state, x1=x1, x2=x2, x1_prev=state.x1, x2_prev=state.x2, y1=y1, y2=y2,
        lam_tilde=lam_tilde, lam=lam,
        sum1=state.sum1 + x1 if in_sum else state.sum1,
        sum2=state.sum2 + x2 if in_sum else state.sum2,
        k=k, grad_evals=state.grad_evals + len(np.atleast_1d(indices)))
    if records is not None:
        records.append({"kind": "step", "s": state.s, "k": state.k, "theta1": th1,
                        "theta2": th2, "lam_tilde": state.lam_tilde, "lam": lam,
                        "lam_tilde_next": lam_tilde, "ax": ax, "ax_next": ax_new,
                        "b_tilde": state.b_tilde})
    return new


def snapshot_weights(schedule, s_next):
    """Weights on ``x^m`` and on each of ``x^1 .. x^(m-1)`` in the next snapshot."""
    m, tau = schedule.m, schedule.tau
    th1n, th2 = schedule.theta1(s_next), schedule.theta2
    w_last = (1.0 - (tau - 1.0) * th1n / th2) / m
    w_inner = (1.0 + (tau - 1.0) * th1n / ((m - 1) * th2)) / m
    return w_last, w_inner


def output_weights(theta1, theta2, m):
    """Weights on ``x^m`` and on each of ``x^1 .. x^(m-1)`` in the output."""
    denom = (m - 1) * (theta1 + theta2) + 1.0
    return 1.0 / denom, (theta1 + theta2) / denom


def acc_output(x_last, inner_sum, theta1, theta2, m):
    """Non-ergodic output ``[x^m + (theta1 + theta2) sum_{k<m} x^k] / W``."""
    w_last, w_inner = output_weights(theta1, theta2, m)
    return w_last * x_last + w_inner * inner_sum


def acc_epoch_boundary(problem, state, schedule, opts, records=None):
    """Close epoch `s`: new snapshot, multiplier reset and extrapolation restart."""
    m = schedule.m
    if state.k != m:
        raise ValueError(f"epoch boundary called after {state.k} of {m} inner steps")
    p, beta, tau = problem, opts.beta, schedule.tau
    s = state.s
    th1, th2 = schedule(s)
    th1n = schedule.theta1(s + 1)

    w_last, w_inner = snapshot_weights(schedule, s + 1)
    xt1 = w_last * state.x1 + w_inner * state.sum1
    xt2 = w_last * state.x2 + w_inner * state.sum2

    r_m = p.residual(state.x1, state.x2)
    lam_tilde = state.lam + beta * (1.0 - tau) * r_m
    b_tilde = p.constraint(xt1, xt2)
    snap = make_snapshot(p.f2, xt2)

    ratio = th1n / th1
    mom = 1.0 - th1 - th2
    y1 = ((1.0 - th2) * state.x1 + th2 * xt1
          + ratio * ((1.0 - th1) * state.x1 - mom * state.x1_prev - th2 * state.xt1))
    y2 = ((1.0 - th2) * state.x2 + th2 * xt2
          + ratio * ((1.0 - th1) * state.x2 - mom * state.x2_prev - th2 * state.xt2))

    if records is not None:
        records.append({"kind": "boundary", "s": s, "theta1": th1, "theta1_next": th1n,
                        "lam_tilde_end": state.lam_tilde, "lam_tilde_start": lam_tilde,
                        "ax": p.constraint(state.x1, state.x2)})
    return dataclasses.replace(
        state, x1_prev=state.x1, x2_prev=state.x2, y1=y1, y2=y2, xt1=xt1, xt2=xt2,
        lam_tilde=lam_tilde, b_tilde=b_tilde, snapshot=snap,
        sum1=np.zeros_like(state.sum1), sum2=np.zeros_like(state.sum2),
        s=s + 1, k=0, grad_evals=state.grad_evals + snap.grad_eval_cost)


def current_output(state, schedule):
    """Output point built from the epoch that `state` has just finished."""
    th1, th2 = schedule(state.s)
    return (acc_output(state.x1, state.sum1, th1, th2, schedule.m),
            acc_output(state.x2, state.sum2, th1, th2, schedule.m))


def solve_acc_sadmm(problem, opts, f_star=None, test_part=None, x1=None, x2=None):
    """Run ACC-SADMM with a fixed penalty for ``opts.epochs`` epochs.

    The trace holds one record per epoch, evaluated at that epoch's output
    point. Returns a :class:`Solution` whose ``x*_hat`` is the output of the
    last epoch.
    """
    m = opts.epoch_length(problem.n)
    if opts.batch_size > problem.n:
        raise ValueError("batch size exceeds the number of samples")
    schedule = ThetaSchedule(m=m, c=opts.c, tau=opts.tau)
    sampler = SeededSampler(opts.seed, opts.stream_id)
    recorder = TraceRecorder(problem, f_star=f_star, test_part=test_part)
    records = [] if opts.record_identities else None

    state = init_acc_state(problem, x1, x2)
    out1 = out2 = None
    for s in range(opts.epochs):
        if s > 0:
            state = acc_epoch_boundary(problem, state, schedule, opts, records)
        for _ in range(m):
            state = acc_inner_step(problem, state, schedule, opts, sampler, records=records)
        out1, out2 = current_output(state, schedule)
        recorder.record(out1, out2, state.grad_evals)

    return Solution(x1_hat=out1, x2_hat=out2, x1=state.x1, x2=state.x2, lam=state.lam_tilde,
                    trace=recorder.trace, grad_evals=state.grad_evals, records=records,
                    state=state, extras={"schedule": schedule})
