"""Problem definitions for two-block linearly constrained finite sums.

The generic problem is::

    min  h1(x1) + f1(x1) + h2(x2) + (1/n) sum_i f2_i(x2)
    s.t. A1 x1 + A2 x2 = b

`h` parts are proximable, `f1` is smooth and `f2` is a finite sum of smooth
components. :func:`build_lasso` instantiates the plain Lasso (identity
split) and the graph-guided fused Lasso (``A = [G; I]`` split).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .linalg import DimensionError, LinearOperator, as_sparse, spectral_norm_sq

__all__ = [
    "SmoothPart",
    "FiniteSumPart",
    "LeastSquaresLoss",
    "LogisticLoss",
    "ProxPart",
    "ZeroProx",
    "L1Norm",
    "ConstrainedProblem",
    "Dataset",
    "LibsvmFormatError",
    "soft_threshold",
    "zero_smooth",
    "build_lasso",
    "build_graph_pattern",
    "edges_from_file",
    "correlation_edges",
    "load_libsvm",
    "dump_libsvm",
    "normalize_samples",
]


# ---------------------------------------------------------------------------
# objective pieces

@dataclass(frozen=True)
class SmoothPart:
    """Smooth convex term with an `L`-Lipschitz gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz: float

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError("Lipschitz constant must be nonnegative")


def zero_smooth(d):
    return SmoothPart(value=lambda x: 0.0, gradient=lambda x: np.zeros(d), lipschitz=0.0)


class FiniteSumPart:
    """Mean of `n` smooth components, each with gradient Lipschitz `lipschitz`.

    Subclasses implement the batched hooks ``_values(idx, x)`` and
    ``_grad_rows(idx, x)``; the latter returns an ``(len(idx), d)`` array.
    """

    n: int
    dim: int
    lipschitz: float

    def _values(self, idx, x):
        raise NotImplementedError

    def _grad_rows(self, idx, x):
        raise NotImplementedError

    def _check_index(self, i):
        idx = np.atleast_1d(np.asarray(i, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"component index out of range [0, {self.n})")
        return idx

    def component_value(self, i, x):
        return float(self._values(self._check_index(i), x)[0])

    def component_gradient(self, i, x):
        return self._grad_rows(self._check_index(i), x)[0]

    def gradient_rows(self, indices, x):
        return self._grad_rows(self._check_index(indices), x)

    def batch_gradient(self, indices, x):
        """Mean of the component gradients over `indices` (repeats counted)."""
        idx = self._check_index(indices)
        if idx.size == 0:
            raise ValueError("empty index set")
        return self._grad_rows(idx, x).mean(axis=0)

    def value(self, x):
        return float(np.mean(self._values(np.arange(self.n), x)))

    def gradient(self, x):
        return self._grad_rows(np.arange(self.n), x).mean(axis=0)


class _SampleLoss(FiniteSumPart):
    """Components ``l(a_i^T x, h_i)`` of a linear model.

    Subclasses give the scalar loss ``_loss(z, h)`` and its derivative in
    the margin ``_dloss(z, h)``. Small data sets keep a dense copy of the
    features because row gathers dominate the cost of stochastic steps.
    """

    dense_limit = 4_000_000

    def __init__(self, dataset, paper_lipschitz=False):
        self.features = dataset.features
        self.labels = dataset.labels
        self.n, self.dim = dataset.features.shape
        self._dense = (self.features.toarray() if self.n * self.dim <= self.dense_limit
                       else None)
        self._features_t = self.features.T.tocsr()
        row_sq = np.asarray(self.features.multiply(self.features).sum(axis=1)).ravel()
        self.max_row_sq = float(row_sq.max()) if row_sq.size else 0.0
        self.lipschitz = self._lipschitz(paper_lipschitz)

    def _point(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionError(f"expected x of length {self.dim}, got {x.shape}")
        return x

    def _rows(self, idx):
        return self._dense[idx] if self._dense is not None else self.features[idx]

    def _values(self, idx, x):
        z = np.asarray(self._rows(idx) @ self._point(x)).ravel()
        return self._loss(z, self.labels[idx])

    def _grad_rows(self, idx, x):
        rows = self._rows(idx)
        z = np.asarray(rows @ self._point(x)).ravel()
        coef = self._dloss(z, self.labels[idx])
        if self._dense is not None:
            return rows * coef[:, None]
        return np.asarray(rows.multiply(coef[:, None]).todense())

    def value(self, x):
        z = self.features @ self._point(x)
        return float(np.mean(self._loss(z, self.labels)))

    def gradient(self, x):
        z = self.features @ self._point(x)
        return (self._features_t @ self._dloss(z, self.labels)) / self.n


class LeastSquaresLoss(_SampleLoss):
    """Components ``(h_i - a_i^T x)^2``.

    The safe gradient Lipschitz constant is ``2 max_i ||a_i||^2``. With
    ``paper_lipschitz=True`` the constant ``max_i ||a_i||^2`` is used instead,
    which is only valid if the loss is read with a factor 1/2.
    """

    def _lipschitz(self, paper_lipschitz):
        return self.max_row_sq if paper_lipschitz else 2.0 * self.max_row_sq

    @staticmethod
    def _loss(z, h):
        return (h - z) ** 2

    @staticmethod
    def _dloss(z, h):
        return 2.0 * (z - h)


class LogisticLoss(_SampleLoss):
    """Components ``log(1 + exp(-h_i a_i^T x))`` with labels in {-1, +1}."""

    def __init__(self, dataset, paper_lipschitz=False):
        bad = ~np.isin(dataset.labels, (-1.0, 1.0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"label {dataset.labels[i]!r} at sample {i} is not in {{-1, +1}}")
        super().__init__(dataset, paper_lipschitz)

    def _lipschitz(self, paper_lipschitz):
        return self.max_row_sq / 4.0

    @staticmethod
    def _loss(z, h):
        return np.logaddexp(0.0, -h * z)

    @staticmethod
    def _dloss(z, h):
        return -h * expit(-h * z)


class ProxPart:
    """Proximable convex term: ``prox(v, t) = argmin_x h(x) + ||x - v||^2 / (2t)``."""

    def value(self, x):
        raise NotImplementedError

    def prox(self, v, t):
        raise NotImplementedError


class ZeroProx(ProxPart):

    def value(self, x):
        return 0.0

    def prox(self, v, t):
        return np.array(v, dtype=np.float64, copy=True)


class L1Norm(ProxPart):
    """``mu * ||x||_1``."""

    def __init__(self, mu):
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)

    def value(self, x):
        return self.mu * float(np.abs(x).sum())

    def prox(self, v, t):
        return soft_threshold(v, self.mu * t)


def soft_threshold(v, t):
    """Componentwise ``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


# ---------------------------------------------------------------------------
# problem container

@dataclass
class ConstrainedProblem:
    """Two-block composite objective with a linear coupling constraint.

    ``recover_x1`` (optional) maps a block-2 point to the block-1 point that
    satisfies the constraint exactly; reported objectives use it, so metrics
    are taken at feasible pairs such as ``(A x, x)``.
    """

    h1: ProxPart
    f1: SmoothPart
    A1: LinearOperator
    h2: ProxPart
    f2: FiniteSumPart
    A2: LinearOperator
    b: np.ndarray
    norm_a1: Optional[float] = None
    norm_a2: Optional[float] = None
    recover_x1: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "problem"

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if not (self.A1.out_dim == self.A2.out_dim == self.b.shape[0]):
            raise DimensionError(
                f"constraint rows disagree: A1 {self.A1.out_dim}, A2 {self.A2.out_dim}, "
                f"b {self.b.shape[0]}")
        if self.f2.dim != self.A2.in_dim:
            raise DimensionError(f"f2 acts on R^{self.f2.dim} but A2 on R^{self.A2.in_dim}")
        if self.norm_a1 is None:
            self.norm_a1 = spectral_norm_sq(self.A1)
        if self.norm_a2 is None:
            self.norm_a2 = spectral_norm_sq(self.A2)

    @property
    def d1(self):
        return self.A1.in_dim

    @property
    def d2(self):
        return self.A2.in_dim

    @property
    def n(self):
        return self.f2.n

    def constraint(self, x1, x2):
        """``A1 x1 + A2 x2``."""
        return self.A1(x1) + self.A2(x2)

    def residual(self, x1, x2):
        return self.constraint(x1, x2) - self.b

    def block1_value(self, x1):
        return self.h1.value(x1) + self.f1.value(x1)

    def block2_value(self, x2):
        return self.h2.value(x2) + self.f2.value(x2)

    def objective(self, x1, x2):
        return self.block1_value(x1) + self.block2_value(x2)

    def report_point(self, x1, x2):
        if self.recover_x1 is None:
            return x1, x2
        return self.recover_x1(x2), x2

    def reported_objective(self, x1, x2):
        return self.objective(*self.report_point(x1, x2))

    def lagrangian(self, x1, x2, lam):
        return self.objective(x1, x2) + float(np.dot(lam, self.residual(x1, x2)))

    def zeros(self):
        return np.zeros(self.d1), np.zeros(self.d2), np.zeros(self.b.shape[0])

    def validate(self, rtol=1e-6):
        """Recompute the operator norms and compare with the stored ones."""
        for stored, op in ((self.norm_a1, self.A1), (self.norm_a2, self.A2)):
            fresh = spectral_norm_sq(op)
            if abs(fresh - stored) > rtol * max(1.0, abs(fresh)):
                raise ValueError(f"stored operator norm {stored} != recomputed {fresh}")
        for op in (self.A1, self.A2):
            if op.adjoint_mismatch() > 1e-10:
                raise ValueError("operator adjoint is inconsistent")


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class Dataset:
    features: sp.csr_matrix
    labels: np.ndarray
    names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "features", as_sparse(self.features))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.float64).ravel())
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"{self.features.shape[0]} samples but {self.labels.shape[0]} labels")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.names)


class LibsvmFormatError(ValueError):
    pass


def load_libsvm(path, n_features=None):
    """Read ``label idx:val ...`` lines (1-based, strictly ascending indices)."""
    rows, cols, vals, labels = [], [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise LibsvmFormatError(f"line {lineno}: bad label {tokens[0]!r}") from None
            last = 0
            r = len(labels) - 1
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise LibsvmFormatError(f"line {lineno}: bad token {tok!r}") from None
                if idx <= last:
                    raise LibsvmFormatError(
                        f"line {lineno}: index {idx} is not ascending (previous {last})")
                last = idx
                rows.append(r)
                cols.append(idx - 1)
                vals.append(val)
    if not labels:
        raise LibsvmFormatError(f"{path}: no samples")
    d = max(cols) + 1 if cols else 0
    if n_features is not None:
        if n_features < d:
            raise LibsvmFormatError(f"feature index {d} exceeds n_features={n_features}")
        d = n_features
    X = as_sparse((np.array(rows), np.array(cols), np.array(vals)), shape=(len(labels), d))
    return Dataset(X, np.array(labels))


def _fmt(v):
    return "%.17g" % v


def dump_libsvm(dataset, path):
    X = dataset.features.tocsr()
    with open(path, "w") as fh:
        for i in range(X.shape[0]):
            start, end = X.indptr[i], X.indptr[i + 1]
            parts = [_fmt(dataset.labels[i])]
            cols, vals = X.indices[start:end], X.data[start:end]
            parts += [f"{j + 1}:{_fmt(v)}" for j, v in zip(cols, vals)]
            fh.write(" ".join(parts) + "\n")


def normalize_samples(dataset, mode="sample"):
    """Rescale to unit Euclidean norm.

    ``mode="sample"`` scales each row; ``mode="feature"`` scales each column.
    All-zero rows/columns are left unchanged. ``mode="none"`` is a no-op.
    """
    if mode == "none":
        return dataset
    X = dataset.features
    axis = {"sample": 1, "feature": 0}.get(mode)
    if axis is None:
        raise ValueError(f"unknown normalization mode {mode!r}")
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=axis)).ravel())
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    D = sp.diags(scale)
    X = D @ X if axis == 1 else X @ D
    return Dataset(X, dataset.labels, dataset.names)


# ---------------------------------------------------------------------------
# graph patterns

def _edges_to_matrix(edges, d):
    rows, cols, vals = [], [], []
    for r, (i, j, w) in enumerate(edges):
        if i == j:
            raise ValueError(f"self-loop on feature {i + 1}")
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"edge ({i + 1}, {j + 1}) outside 1..{d}")
        rows += [r, r]
        cols += [i, j]
        vals += [w, -w]
    return as_sparse((np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                      np.array(vals, dtype=np.float64)), shape=(len(edges), d))


def edges_from_file(path):
    """Parse ``i j [weight]`` lines (1-based, ``#`` comments) into 0-based triples."""
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            try:
                if len(tok) not in (2, 3):
                    raise ValueError
                i, j = int(tok[0]) - 1, int(tok[1]) - 1
                w = float(tok[2]) if len(tok) == 3 else 1.0
            except ValueError:
                raise ValueError(f"{path}, line {lineno}: malformed edge {line!r}") from None
            edges.append((i, j, w))
    return edges


def correlation_edges(dataset, threshold):
    """Edges ``(i, j)`` with ``|corr(feature_i, feature_j)| >= threshold``, i < j."""
    X = np.asarray(dataset.features.todense())
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.corrcoef(X, rowvar=False)
    C = np.atleast_2d(np.nan_to_num(C))
    d = X.shape[1]
    return [(i, j, 1.0) for i in range(d) for j in range(i + 1, d) if abs(C[i, j]) >= threshold]


def build_graph_pattern(d, edges=None, path=None, dataset=None, threshold=None):
    """Difference matrix ``G`` with one ``(+1, -1)`` row per edge.

    Exactly one source is used: an explicit 0-based edge list, an edge file,
    or a correlation threshold on `dataset`. A weight scales its row.
    """
    if path is not None:
        edges = edges_from_file(path)
    elif threshold is not None:
        if dataset is None:
            raise ValueError("correlation threshold needs a dataset")
        edges = correlation_edges(dataset, threshold)
    elif edges is None:
        edges = []
    return _edges_to_matrix(edges, d)


# ---------------------------------------------------------------------------
# Lasso instances

def build_lasso(dataset, mu, split="identity", G=None, loss="squared", paper_lipschitz=False):
    """Split Lasso problem with ``x1 = A x2``.

    ``split="identity"`` gives ``A = I``; ``split="graph"`` gives
    ``A = [G; I]``. The constraint is ``-x1 + A x2 = 0``.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if dataset.n == 0 or dataset.d == 0:
        raise ValueError("empty dataset")
    d = dataset.d
    if loss == "squared":
        f2 = LeastSquaresLoss(dataset, paper_lipschitz)
    elif loss == "logistic":
        f2 = LogisticLoss(dataset, paper_lipschitz)
    else:
        raise ValueError(f"unknown loss {loss!r}")

    if split == "identity":
        A2 = LinearOperator.identity(d)
    elif split == "graph":
        if G is None:
            raise ValueError("graph split needs G")
        G = as_sparse(G)
        if G.shape[1] != d:
            raise DimensionError(f"G has {G.shape[1]} columns, data has {d} features")
        A2 = LinearOperator.from_matrix(sp.vstack([G, sp.identity(d)]))
    else:
        raise ValueError(f"unknown split {split!r}")

    p = A2.out_dim
    return ConstrainedProblem(
        h1=L1Norm(mu), f1=zero_smooth(p), A1=LinearOperator.identity(p, -1.0),
        h2=ZeroProx(), f2=f2, A2=A2, b=np.zeros(p),
        recover_x1=A2.forward, name=f"lasso-{split}-{loss}")
