"""Linearized stochastic ADMM baselines.

All four share one iteration: an exact-when-possible linearized prox step
on block 1, a linearized gradient step on block 2 driven by a gradient
estimate, and dual ascent. They differ in the estimator and the block-2
step size:

========  ==============================  ====================================
solver    estimator                       step size ``gamma_k``
========  ==============================  ====================================
stoc      minibatch                       ``1/(L2 + sigma sqrt(k) + beta|A2'A2|)``
opt       minibatch at extrapolated point ``1/(L2 + sigma k^1.5 + beta|A2'A2|)``
svrg      SVRG snapshot                   ``1/(L2 + beta|A2'A2|)``
sag       averaged gradient table         ``1/(L2 + beta|A2'A2|)``
========  ==============================  ====================================

The penalty follows ``beta_s = min(beta_max, rho^s beta0)`` over epochs of
``m`` iterations; ``k`` counts iterations from 1 across epochs. The OPT
variant is a reconstruction: its extrapolation weight ``(k-1)/(k+2)`` is
the usual Nesterov choice, not taken from its original description.
"""

from __future__ import annotations

import math

import numpy as np

from ..estimators import (SeededSampler, make_snapshot, minibatch_gradient,
                          sample_minibatch, svrg_gradient)
from ..trace import TraceRecorder
from .common import Solution, check_iterate, continuation_beta

__all__ = [
    "stoc_step_size",
    "opt_step_size",
    "svrg_step_size",
    "sag_step_size",
    "linearized_step",
    "SagTable",
    "solve_stoc_admm",
    "solve_opt_admm",
    "solve_svrg_admm",
    "solve_sag_admm",
    "solve_linearized_admm",
]


def stoc_step_size(k, sigma, L2, beta_norm):
    """``1/(L2 + sigma sqrt(k) + beta |A2'A2|)``; `beta_norm` is the product."""
    return 1.0 / (L2 + sigma * math.sqrt(k) + beta_norm)


def opt_step_size(k, sigma, L2, beta_norm):
    return 1.0 / (L2 + sigma * k ** 1.5 + beta_norm)


def svrg_step_size(L2, beta_norm):
    return 1.0 / (L2 + beta_norm)


def sag_step_size(L2, beta_norm):
    # equals 1/(L2 + beta) when A2 is the identity
    return 1.0 / (L2 + beta_norm)


def linearized_step(problem, x1, x2, lam, g, beta, gamma, z=None, L1=None):
    """One linearized ADMM iteration; returns ``(x1, x2, lam)``.

    Block 1 takes a prox step with weight ``L1 + beta |A1'A1|`` (exact
    minimisation when ``A1 = -I`` and ``f1 = 0``). Block 2 takes a prox-
    gradient step of length `gamma` from `z` (default `x2`) using the
    gradient estimate `g` of ``f2`` at `z`.
    """
    p = problem
    z = x2 if z is None else z
    L1 = p.f1.lipschitz if L1 is None else L1
    eta1 = L1 + beta * p.norm_a1
    r = p.constraint(x1, x2) - p.b
    v1 = x1 - (p.f1.gradient(x1) + p.A1.adjoint(beta * r + lam)) / eta1
    x1 = p.h1.prox(v1, 1.0 / eta1)
    r_mid = p.A1(x1) + p.A2(z) - p.b
    x2 = p.h2.prox(z - gamma * (g + p.A2.adjoint(beta * r_mid + lam)), gamma)
    lam = lam + beta * p.residual(x1, x2)
    return x1, x2, lam


class SagTable:
    """Per-sample gradient memory; the estimate is the table mean."""

    def __init__(self, f2, x, memory_budget=2 ** 30):
        self.check_budget(f2, memory_budget)
        self.f2 = f2
        self.table = f2.gradient_rows(np.arange(f2.n), x)
        self.total = self.table.sum(axis=0)

    @staticmethod
    def check_budget(f2, memory_budget):
        need = f2.n * f2.dim * 8
        if need > memory_budget:
            raise MemoryError(
                f"SAG table needs {need} bytes ({f2.n} x {f2.dim}), budget is {memory_budget}")

    def update(self, indices, x):
        idx = np.unique(np.atleast_1d(indices))
        rows = self.f2.gradient_rows(idx, x)
        self.total += (rows - self.table[idx]).sum(axis=0)
        self.table[idx] = rows
        return self.total / self.f2.n

    def mean(self):
        return self.total / self.f2.n


def _start(problem, x1, x2):
    z1, z2, zl = problem.zeros()
    x1 = z1 if x1 is None else np.asarray(x1, dtype=np.float64).copy()
    x2 = z2 if x2 is None else np.asarray(x2, dtype=np.float64).copy()
    return x1, x2, zl


def _warm_start(problem, opts, sampler, x1, x2, lam, L2):
    """``3n/b`` STOC iterations at the initial penalty."""
    iters = max(1, (3 * problem.n) // opts.batch_size)
    for k in range(1, iters + 1):
        idx = sample_minibatch(sampler, problem.n, opts.batch_size)
        g = minibatch_gradient(problem.f2, x2, idx)
        gamma = stoc_step_size(k, opts.sigma, L2, opts.beta * problem.norm_a2)
        x1, x2, lam = linearized_step(problem, x1, x2, lam, g, opts.beta, gamma)
        check_iterate(k, x1, x2, lam, threshold=opts.divergence_threshold)
    return x1, x2, lam, iters * opts.batch_size


def _solve(problem, opts, kind, f_star=None, test_part=None, x1=None, x2=None):
    p, b = problem, opts.batch_size
    if b > p.n:
        raise ValueError("batch size exceeds the number of samples")
    m = opts.epoch_length(p.n)
    L1, L2 = opts.lipschitz(p)
    sampler = SeededSampler(opts.seed, opts.stream_id)
    recorder = TraceRecorder(p, f_star=f_star, test_part=test_part)
    x1, x2, lam = _start(p, x1, x2)
    evals = 0

    table = None
    if kind == "sag":
        SagTable.check_budget(p.f2, opts.memory_budget)
    if opts.warm_start and kind in ("svrg", "sag"):
        x1, x2, lam, evals = _warm_start(p, opts, sampler, x1, x2, lam, L2)
    if kind == "sag":
        table = SagTable(p.f2, x2, opts.memory_budget)
        evals += p.n

    x2_prev = x2
    snap_point = x2
    k = 0
    for s in range(opts.epochs):
        beta = continuation_beta(opts.beta, opts.rho, s, opts.beta_max)
        bn = beta * p.norm_a2
        if kind == "svrg":
            snap = make_snapshot(p.f2, snap_point)
            evals += snap.grad_eval_cost
            epoch_sum = np.zeros_like(x2)
        for _ in range(m):
            k += 1
            idx = sample_minibatch(sampler, p.n, b)
            z = x2
            if kind == "stoc":
                g = minibatch_gradient(p.f2, z, idx)
                gamma = stoc_step_size(k, opts.sigma, L2, bn)
            elif kind == "opt":
                z = x2 + ((k - 1.0) / (k + 2.0)) * (x2 - x2_prev)
                g = minibatch_gradient(p.f2, z, idx)
                gamma = opt_step_size(k, opts.sigma, L2, bn)
            elif kind == "svrg":
                g = svrg_gradient(p.f2, z, snap, idx)
                gamma = svrg_step_size(L2, bn)
            else:
                g = table.update(idx, z)
                gamma = sag_step_size(L2, bn)
            x2_prev = x2
            x1, x2, lam = linearized_step(p, x1, x2, lam, g, beta, gamma, z=z, L1=L1)
            check_iterate(k, x1, x2, lam, threshold=opts.divergence_threshold)
            evals += b
            if kind == "svrg":
                epoch_sum += x2
        if kind == "svrg":
            snap_point = epoch_sum / m if opts.snapshot == "average" else x2
        recorder.record(x1, x2, evals)

    return Solution(x1_hat=x1, x2_hat=x2, x1=x1, x2=x2, lam=lam, trace=recorder.trace,
                    grad_evals=evals, extras={"iterations": k})


def solve_stoc_admm(problem, opts, f_star=None, test_part=None, x1=None, x2=None):
    """Linearized ADMM with the plain minibatch estimator."""
    return _solve(problem, opts, "stoc", f_star, test_part, x1, x2)


def solve_opt_admm(problem, opts, f_star=None, test_part=None, x1=None, x2=None):
    """Reconstructed OPT-ADMM: STOC-ADMM with extrapolation and a faster-decaying step."""
    return _solve(problem, opts, "opt", f_star, test_part, x1, x2)


def solve_svrg_admm(problem, opts, f_star=None, test_part=None, x1=None, x2=None):
    """Linearized ADMM with the SVRG estimator, snapshot refreshed per epoch."""
    return _solve(problem, opts, "svrg", f_star, test_part, x1, x2)


def solve_sag_admm(problem, opts, f_star=None, test_part=None, x1=None, x2=None):
    """Linearized ADMM with a SAG gradient table (memory ``n * d``)."""
    return _solve(problem, opts, "sag", f_star, test_part, x1, x2)


def solve_linearized_admm(problem, beta=1.0, max_iter=100000, tol=1e-13, x1=None, x2=None,
                          lam=None):
    """Deterministic linearized ADMM with exact gradients and fixed `beta`.

    Stops when successive primal and dual changes and the constraint
    residual all fall below `tol` (relative to ``1 + norm``). Returns
    ``(x1, x2, lam, iterations, converged)``.
    """
    p = problem
    x1, x2, zl = _start(p, x1, x2)
    lam = zl if lam is None else np.asarray(lam, dtype=np.float64).copy()
    gamma = svrg_step_size(p.f2.lipschitz, beta * p.norm_a2)
    for it in range(1, max_iter + 1):
        g = p.f2.gradient(x2)
        n1, n2, nl = linearized_step(p, x1, x2, lam, g, beta, gamma)
        check_iterate(it, n1, n2, nl)
        change = max(np.linalg.norm(n1 - x1) / (1 + np.linalg.norm(n1)),
                     np.linalg.norm(n2 - x2) / (1 + np.linalg.norm(n2)),
                     np.linalg.norm(nl - lam) / (1 + np.linalg.norm(nl)))
        x1, x2, lam = n1, n2, nl
        if change <= tol and np.linalg.norm(p.residual(x1, x2)) <= tol:
            return x1, x2, lam, it, True
    return x1, x2, lam, max_iter, False
