"""Schedules, options and result containers shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..trace import MetricTrace

__all__ = [
    "DivergenceError",
    "ThetaSchedule",
    "SolverOptions",
    "Solution",
    "theta",
    "continuation_beta",
    "check_iterate",
]


class DivergenceError(RuntimeError):
    """A solver produced a non-finite or exploding iterate."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


def check_iterate(step, *arrays, threshold=1e12):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(f"non-finite iterate at step {step}", step)
        if np.linalg.norm(a) > threshold:
            raise DivergenceError(
                f"iterate norm {np.linalg.norm(a):.3e} exceeds {threshold:.0e} at step {step}",
                step)


@dataclass(frozen=True)
class ThetaSchedule:
    """Extrapolation weights ``theta1_s = 1/(c + tau s)`` and the constant
    ``theta2 = (m - tau) / (tau (m - 1))``."""

    m: int
    c: float = 2.0
    tau: float = 2.0

    def __post_init__(self):
        if self.m <= 1:
            raise ValueError(f"epoch length must exceed 1, got m={self.m}")
        if self.m <= self.tau:
            raise ValueError(f"m={self.m} <= tau={self.tau} makes theta2 <= 0")

    def inverse_theta1(self, s):
        """``c + tau s``; accepts an array of epoch indices."""
        if np.any(np.asarray(s) < 0):
            raise ValueError("epoch index must be nonnegative")
        return self.c + self.tau * s

    def theta1(self, s):
        return 1.0 / self.inverse_theta1(s)

    @property
    def theta2(self):
        return (self.m - self.tau) / (self.tau * (self.m - 1))

    def __call__(self, s):
        return self.theta1(s), self.theta2


def theta(schedule, s):
    """``(theta1_s, theta2)`` for epoch `s`."""
    return schedule(s)


def continuation_beta(beta0, rho, s, beta_max=10.0):
    """Penalty ``min(beta_max, rho^s beta0)`` used by the baselines."""
    return min(beta_max, rho ** s * beta0)


@dataclass
class SolverOptions:
    """Run parameters.

    ``beta`` is the fixed penalty for ACC-SADMM and the initial penalty
    ``beta0`` for the baselines, whose penalty follows
    ``min(beta_max, rho^s beta0)``. ``m=None`` means ``2n/b``.
    """

    epochs: int = 10
    batch_size: int = 1
    m: Optional[int] = None
    beta: float = 1.0
    rho: float = 1.0
    beta_max: float = 10.0
    sigma: float = 0.0
    c: float = 2.0
    tau: float = 2.0
    seed: int = 0
    stream_id: int = 0
    lipschitz1: Optional[float] = None
    lipschitz2: Optional[float] = None
    snapshot: str = "average"
    warm_start: bool = False
    memory_budget: int = 2 ** 30
    record_identities: bool = False
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("at least one epoch is required")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if self.m is not None and self.m <= 1:
            raise ValueError("epoch length m must exceed 1")
        if self.snapshot not in ("average", "last"):
            raise ValueError(f"unknown snapshot rule {self.snapshot!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def epoch_length(self, n):
        if self.m is not None:
            return self.m
        return max(2, (2 * n) // self.batch_size)

    def lipschitz(self, problem):
        L1 = problem.f1.lipschitz if self.lipschitz1 is None else self.lipschitz1
        L2 = problem.f2.lipschitz if self.lipschitz2 is None else self.lipschitz2
        return L1, L2


@dataclass
class Solution:
    """Solver output: ``x*_hat`` is the reported point, ``x1``/``x2`` the
    final iterate."""

    x1_hat: np.ndarray
    x2_hat: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    lam: np.ndarray
    trace: MetricTrace
    grad_evals: int
    records: Optional[list] = None
    state: object = None
    extras: dict = field(default_factory=dict)
