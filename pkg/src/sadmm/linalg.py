"""Small linear-algebra layer shared by the solvers.

Vectors are plain float64 numpy arrays. Sparse matrices are
``scipy.sparse.csr_matrix`` instances with duplicates summed and explicit
zeros removed. :class:`LinearOperator` wraps either a matrix or a
matrix-free map (used for the ``+-I`` blocks of the split problems).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DimensionError",
    "SpectralNormError",
    "LinearOperator",
    "as_sparse",
    "matvec",
    "spectral_norm_sq",
    "norm2",
    "dot",
    "axpy",
]


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class SpectralNormError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def _vector(v, name="v"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def as_sparse(M, shape=None):
    """Return `M` as a canonical CSR matrix.

    Accepts dense arrays, any scipy sparse format, or a coordinate triple
    ``(rows, cols, values)`` together with `shape`.
    """
    if isinstance(M, tuple) and len(M) == 3:
        rows, cols, vals = (np.asarray(a) for a in M)
        if shape is None:
            raise ValueError("shape is required for coordinate input")
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]
                          or cols.min() < 0 or cols.max() >= shape[1]):
            raise IndexError(f"coordinate out of range for shape {shape}")
        M = sp.coo_matrix((vals.astype(np.float64), (rows, cols)), shape=shape)
    if sp.issparse(M):
        M = sp.csr_matrix(M, dtype=np.float64)
    else:
        M = sp.csr_matrix(np.atleast_2d(np.asarray(M, dtype=np.float64)))
    M.sum_duplicates()
    M.eliminate_zeros()
    return M


def matvec(M, v):
    """Exact product ``M @ v``; raises :class:`DimensionError` on mismatch."""
    v = _vector(v)
    if M.shape[1] != v.shape[0]:
        raise DimensionError(
            f"matrix has {M.shape[1]} columns but vector has length {v.shape[0]}")
    return np.asarray(M @ v, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class LinearOperator:
    """A linear map with its adjoint.

    Parameters
    ----------
    forward, adjoint : callable
        ``v -> M v`` and ``u -> M^T u``.
    in_dim, out_dim : int
        Domain and codomain dimensions.
    matrix : sparse matrix, optional
        Explicit representation when one exists.
    scale : float, optional
        Set for scaled identities (``scale * I``); lets callers skip work.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_dim: int
    out_dim: int
    matrix: object = None
    scale: float | None = None

    @classmethod
    def from_matrix(cls, M):
        M = as_sparse(M)
        Mt = M.T.tocsr()
        return cls(forward=lambda v: matvec(M, v), adjoint=lambda u: matvec(Mt, u),
                   in_dim=M.shape[1], out_dim=M.shape[0], matrix=M)

    @classmethod
    def identity(cls, d, scale=1.0):
        """Matrix-free ``scale * I_d``."""
        scale = float(scale)

        def apply(v):
            v = _vector(v)
            if v.shape[0] != d:
                raise DimensionError(f"operator has dimension {d}, vector {v.shape[0]}")
            return scale * v

        return cls(forward=apply, adjoint=apply, in_dim=d, out_dim=d, scale=scale)

    def __call__(self, v):
        return self.forward(v)

    @property
    def T(self):
        return LinearOperator(forward=self.adjoint, adjoint=self.forward,
                              in_dim=self.out_dim, out_dim=self.in_dim,
                              matrix=None if self.matrix is None else self.matrix.T.tocsr(),
                              scale=self.scale)

    def to_sparse(self):
        if self.matrix is not None:
            return self.matrix
        if self.scale is not None:
            return as_sparse(sp.identity(self.in_dim, format="csr") * self.scale)
        cols = [self.forward(e) for e in np.eye(self.in_dim)]
        return as_sparse(np.column_stack(cols) if cols else np.zeros((self.out_dim, 0)))

    def adjoint_mismatch(self, probes=10, seed=0):
        """Largest relative gap between <Mv, u> and <v, M^T u> on random probes."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            v = rng.standard_normal(self.in_dim)
            u = rng.standard_normal(self.out_dim)
            lhs = float(np.dot(self.forward(v), u))
            rhs = float(np.dot(v, self.adjoint(u)))
            scale = max(1.0, abs(lhs), abs(rhs))
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst


def _as_operator(M):
    if isinstance(M, LinearOperator):
        return M
    return LinearOperator.from_matrix(M)


def _start_vector(d):
    # Fixed pseudo-random start: an all-ones start is orthogonal to the top
    # eigenvector of graph-difference operators (their kernel contains 1).
    v = np.random.default_rng(20170422).standard_normal(d)
    return v / np.linalg.norm(v)


def spectral_norm_sq(M, tol=1e-10, max_iter=10000, return_history=False):
    """Largest eigenvalue of ``M^T M`` by power iteration.

    The start vector is fixed, so the result is deterministic. Iteration
    stops once the Rayleigh quotient changes by less than ``tol`` relative
    to its current value.

    Raises
    ------
    SpectralNormError
        When ``max_iter`` iterations do not reach ``tol``; the exception
        carries the last estimate in ``.estimate``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = _as_operator(M)
    if op.in_dim == 0 or op.out_dim == 0:
        raise DimensionError("operator has a zero dimension")
    if op.scale is not None:
        value = op.scale ** 2
        return (value, [value]) if return_history else value

    v = _start_vector(op.in_dim)
    history = []
    estimate = 0.0
    for _ in range(max_iter):
        w = op.adjoint(op.forward(v))
        new = float(np.dot(v, w))
        history.append(new)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            estimate = 0.0
            break
        if abs(new - estimate) <= tol * abs(new):
            estimate = new
            break
        estimate = new
        v = w / wn
    else:
        raise SpectralNormError(
            f"power iteration did not converge in {max_iter} iterations", estimate)
    return (estimate, history) if return_history else estimate


def _pair(u, v):
    u, v = _vector(u, "u"), _vector(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"length {u.shape[0]} vs length {v.shape[0]}")
    return u, v


def norm2(v):
    return float(np.linalg.norm(_vector(v)))


def dot(u, v):
    u, v = _pair(u, v)
    return float(np.dot(u, v))


def axpy(alpha, u, v):
    """Return ``alpha * u + v``."""
    u, v = _pair(u, v)
    return alpha * u + v
