import numpy as np
import pytest
import scipy.sparse as sp

from sadmm.linalg import LinearOperator
from sadmm.model import (ConstrainedProblem, Dataset, L1Norm, LeastSquaresLoss, ZeroProx,
                         build_lasso, zero_smooth)


def random_dataset(rng, n, d, loss="squared"):
    X = rng.standard_normal((n, d))
    if loss == "logistic":
        h = np.where(rng.standard_normal(n) >= 0, 1.0, -1.0)
    else:
        h = rng.standard_normal(n)
    return Dataset(sp.csr_matrix(X), h)


def chain_graph(d):
    rows = [[1.0 if j == i else -1.0 if j == i + 1 else 0.0 for j in range(d)]
            for i in range(d - 1)]
    return sp.csr_matrix(np.array(rows).reshape(-1, d))


def random_lasso(rng, n, d, loss="squared", split=None, mu=None):
    """Small Lasso instance; graph split uses a chain graph."""
    split = split or ("graph" if d >= 2 and rng.random() < 0.5 else "identity")
    mu = float(rng.uniform(0.01, 0.5)) if mu is None else mu
    G = chain_graph(d) if split == "graph" else None
    return build_lasso(random_dataset(rng, n, d, loss), mu, split=split, G=G, loss=loss)


def zero_problem(d=3, n=2, a2_scale=-1.0):
    """Zero objective with ``x1 + a2_scale * x2 = 0``."""
    f2 = LeastSquaresLoss(Dataset(sp.csr_matrix((n, d)), np.zeros(n)))
    return ConstrainedProblem(h1=ZeroProx(), f1=zero_smooth(d), A1=LinearOperator.identity(d),
                              h2=ZeroProx(), f2=f2, A2=LinearOperator.identity(d, a2_scale),
                              b=np.zeros(d))


def one_dim_problem(a=1.5, h=0.7, mu=0.2):
    """n = 1, d = 1: mu|x1| + (h - a x2)^2 with x1 = x2."""
    return build_lasso(Dataset(sp.csr_matrix([[a]]), np.array([h])), mu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
