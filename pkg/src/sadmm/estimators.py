"""Gradient oracles for the finite-sum block.

Sampling uses numpy's Philox counter-based generator keyed by
``(seed, stream_id)``; minibatches are drawn uniformly with replacement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SeededSampler",
    "SvrgSnapshot",
    "StaleSnapshotError",
    "full_gradient",
    "sample_minibatch",
    "minibatch_gradient",
    "make_snapshot",
    "svrg_gradient",
    "variance_bound_lhs_rhs",
]


class SeededSampler:
    """Deterministic index stream.

    Two samplers built from the same ``(seed, stream_id)`` produce the same
    sequence on every platform (Philox is specified bit-for-bit).
    """

    algorithm = "philox4x64"

    def __init__(self, seed=0, stream_id=0):
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.reset()

    def reset(self):
        key = np.random.SeedSequence([self.seed, self.stream_id]).generate_state(2, np.uint64)
        self._rng = np.random.Generator(np.random.Philox(key=key))

    def integers(self, n, size):
        return self._rng.integers(0, n, size=size)

    def __repr__(self):
        return f"SeededSampler(seed={self.seed}, stream_id={self.stream_id})"


def full_gradient(f2, x):
    """Exact mean gradient; costs ``f2.n`` component evaluations."""
    return f2.gradient(x)


def sample_minibatch(sampler, n, b):
    """`b` indices drawn independently and uniformly from ``range(n)``."""
    if not 1 <= b <= n:
        raise ValueError(f"minibatch size must satisfy 1 <= b <= n, got b={b}, n={n}")
    return sampler.integers(n, b)


def minibatch_gradient(f2, x, indices):
    return f2.batch_gradient(indices, x)


class StaleSnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class SvrgSnapshot:
    """Anchor point and its cached full gradient."""

    point: np.ndarray
    full_gradient: np.ndarray
    grad_eval_cost: int
    owner: int = 0

    def is_consistent(self, f2, atol=1e-12):
        if self.owner != id(f2):
            return False
        g = f2.gradient(self.point)
        tol = atol * (1 + np.abs(g).max())
        return bool(np.allclose(g, self.full_gradient, rtol=0.0, atol=tol))


def make_snapshot(f2, x):
    point = np.array(x, dtype=np.float64, copy=True)
    point.setflags(write=False)
    g = f2.gradient(point)
    g.setflags(write=False)
    return SvrgSnapshot(point=point, full_gradient=g, grad_eval_cost=f2.n, owner=id(f2))


def svrg_gradient(f2, y, snapshot, indices, verify=False):
    """Variance-reduced estimate of the gradient of `f2` at `y`.

    ``mean_i [grad f_i(y) - grad f_i(snapshot)] + grad f2(snapshot)`` over the
    minibatch `indices`.
    """
    if snapshot.owner != id(f2):
        raise StaleSnapshotError("snapshot was built for a different objective")
    if verify and not snapshot.is_consistent(f2):
        raise StaleSnapshotError("snapshot gradient does not match its point")
    idx = np.atleast_1d(indices)
    if idx.size == 0:
        raise ValueError("empty index set")
    diff = f2.gradient_rows(idx, y) - f2.gradient_rows(idx, snapshot.point)
    return diff.mean(axis=0) + snapshot.full_gradient


def variance_bound_lhs_rhs(f2, y, snapshot, b=1, mode="exhaustive", trials=1000, sampler=None):
    """Both sides of the SVRG variance bound.

    ``lhs = E ||grad f2(y) - estimate||^2`` and
    ``rhs = (2 L / b) [f2(snap) - f2(y) - <grad f2(y), snap - y>]``.

    ``mode="exhaustive"`` computes the expectation exactly by enumerating the
    `n` possible single-sample draws (requires ``b == 1``).
    ``mode="monte-carlo"`` averages `trials` draws from `sampler`.
    """
    y = np.asarray(y, dtype=np.float64)
    g_y = f2.gradient(y)
    xt = snapshot.point
    rhs = (2.0 * f2.lipschitz / b) * (f2.value(xt) - f2.value(y) - float(np.dot(g_y, xt - y)))
    if mode == "exhaustive":
        if b != 1:
            raise ValueError("exhaustive mode needs b == 1")
        if f2.n > 10 ** 4:
            raise ValueError("exhaustive mode is limited to n <= 10^4")
        idx = np.arange(f2.n)
        est = f2.gradient_rows(idx, y) - f2.gradient_rows(idx, xt) + snapshot.full_gradient
        lhs = float(np.mean(np.sum((est - g_y) ** 2, axis=1)))
    elif mode == "monte-carlo":
        if sampler is None:
            raise ValueError("monte-carlo mode needs a sampler")
        acc = 0.0
        for _ in range(trials):
            idx = sample_minibatch(sampler, f2.n, b)
            acc += float(np.sum((svrg_gradient(f2, y, snapshot, idx) - g_y) ** 2))
        lhs = acc / trials
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return lhs, rhs
