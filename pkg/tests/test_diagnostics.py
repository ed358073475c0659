import copy
import dataclasses
import json
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import one_dim_problem, random_dataset, random_lasso, zero_problem
from sadmm.diagnostics import (DiagnosticReport, ReferenceError, acc_state_at,
                               check_aggregate_bound, check_multiplier_identities,
                               check_one_step_inequality, compute_reference,
                               constraint_violation, lam_hat, objective_gap, rate_slope)
from sadmm.harness import synth_lasso
from sadmm.linalg import LinearOperator
from sadmm.model import (ConstrainedProblem, Dataset, LeastSquaresLoss, ZeroProx, build_lasso,
                         zero_smooth)
from sadmm.solvers import SolverOptions, solve_acc_sadmm
from sadmm.trace import test_loss


def tiny_instance(seed, n=4, d=2, split=None, loss="squared", beta=None):
    """Small problem with its reference optimum; x1* is made exactly feasible."""
    rng = np.random.default_rng(seed)
    p = random_lasso(rng, n, d, loss=loss, split=split)
    beta = float(rng.uniform(0.3, 2.0)) if beta is None else beta
    ref = compute_reference(p, budget=200000)
    return p, beta, p.recover_x1(ref.x2), ref.x2, ref.lam


# ---------------------------------------------------------------------------
# reference optimum

def test_reference_zero_problem():
    ref = compute_reference(zero_problem(), budget=1000)
    assert ref.f_star == 0.0
    assert not np.any(ref.x2) and ref.residual == 0.0


def test_reference_one_dim_closed_form():
    a, h, mu = 1.5, 0.7, 0.2
    ref = compute_reference(one_dim_problem(a, h, mu))
    want = np.sign(a * h) * max(2 * abs(a * h) - mu, 0.0) / (2 * a * a)
    assert abs(ref.x2[0] - want) <= 1e-8
    assert abs(ref.x1[0] - want) <= 1e-8


@pytest.mark.parametrize("method", ["ladmm", "fista"])
def test_reference_repeatable(method):
    p = build_lasso(synth_lasso(50, 8, seed=1), 1e-3)
    a, b = compute_reference(p, method=method), compute_reference(p, method=method)
    assert abs(a.f_star - b.f_star) <= 1e-10
    np.testing.assert_allclose(a.x2, b.x2, atol=1e-10)


def test_reference_methods_agree():
    p = build_lasso(synth_lasso(80, 10, seed=4), 1e-3)
    a, b = compute_reference(p, method="ladmm"), compute_reference(p, method="fista")
    assert abs(a.f_star - b.f_star) <= 1e-8
    assert max(a.residual, b.residual) <= 1e-9
    # the fista multiplier is -grad f2, the ladmm one the final dual iterate
    np.testing.assert_allclose(a.lam, b.lam, atol=1e-6)


def test_reference_budget_errors(rng):
    p = build_lasso(synth_lasso(50, 8, seed=1), 1e-3)
    with pytest.raises(ValueError):
        compute_reference(p, budget=10)
    with pytest.raises(ReferenceError, match="increase the budget"):
        compute_reference(p, budget=1000, tol=0.0)
    with pytest.raises(ValueError):
        compute_reference(p, method="newton")


def test_fista_needs_identity_split(rng):
    with pytest.raises(ValueError):
        compute_reference(random_lasso(rng, 5, 3, split="graph"), method="fista")


# ---------------------------------------------------------------------------
# metrics

def _plain_problem(A1, A2, b):
    d1, d2 = A1.in_dim, A2.in_dim
    f2 = LeastSquaresLoss(Dataset(sp.csr_matrix((1, d2)), np.zeros(1)))
    return ConstrainedProblem(h1=ZeroProx(), f1=zero_smooth(d1), A1=A1, h2=ZeroProx(), f2=f2,
                              A2=A2, b=b)


@pytest.mark.parametrize("x1, x2, b, scale1, expected", [
    ([1.0, 2.0], [1.0, 2.0], [0.0, 0.0], -1.0, 0.0),
    ([0.0, 0.0], [0.0, 0.0], [3.0, 4.0], 1.0, 5.0),
    ([1.0, 1.0], [2.0, 3.0], [3.0, 4.0], 1.0, 0.0),
])
def test_constraint_violation_examples(x1, x2, b, scale1, expected):
    p = _plain_problem(LinearOperator.identity(2, scale1), LinearOperator.identity(2),
                       np.array(b))
    assert constraint_violation(p, np.array(x1), np.array(x2)) == expected


def test_objective_gap_at_reference():
    p = build_lasso(synth_lasso(50, 8, seed=1), 1e-3)
    ref = compute_reference(p)
    assert abs(objective_gap(p, ref.x1, ref.x2, ref)) <= 1e-8


def test_objective_gap_not_clamped():
    p = build_lasso(synth_lasso(50, 8, seed=1), 1e-3)
    ref = compute_reference(p)
    assert objective_gap(p, ref.x1, ref.x2, ref.f_star + 1e-3) == pytest.approx(-1e-3, abs=1e-8)


def test_test_loss_zero_labels():
    f = LeastSquaresLoss(Dataset(sp.csr_matrix(np.ones((3, 2))), np.zeros(3)))
    assert test_loss(f, np.zeros(2)) == 0.0


# ---------------------------------------------------------------------------
# multiplier identities

def test_identities_zero_problem_exact():
    p = zero_problem()
    sol = solve_acc_sadmm(p, SolverOptions(m=4, epochs=3, record_identities=True))
    dev = check_multiplier_identities(sol.records, p, 1.0)
    assert dev == {"update": 0.0, "difference": 0.0, "continuity": 0.0, "passed": True}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("split", ["identity", "graph"])
def test_identities_random_runs(seed, split):
    rng = np.random.default_rng(seed)
    p = random_lasso(rng, 6, 2 if split == "identity" else 3, split=split)
    beta = float(rng.uniform(0.2, 3.0))
    sol = solve_acc_sadmm(p, SolverOptions(m=4, epochs=3, beta=beta, seed=seed,
                                           record_identities=True))
    dev = check_multiplier_identities(sol.records, p, beta)
    assert dev["passed"]
    assert max(dev["update"], dev["difference"], dev["continuity"]) <= 1e-10


def test_identities_detect_corruption(rng):
    p = random_lasso(rng, 6, 3, split="identity")
    sol = solve_acc_sadmm(p, SolverOptions(m=4, epochs=3, record_identities=True))
    records = copy.deepcopy(sol.records)
    r = records[5]
    r["lam_tilde_next"] = r["lam_tilde_next"] + np.array([1e-3, 0.0, 0.0])
    hat = lam_hat(r["lam_tilde_next"], r["ax_next"], p.b, 1.0, r["theta1"])
    dev = check_multiplier_identities(records, p, 1.0)
    assert not dev["passed"]
    assert dev["update"] == pytest.approx(1e-3 / (1 + np.linalg.norm(hat)), rel=1e-6)


def test_identities_need_records():
    with pytest.raises(ValueError, match="record_identities"):
        check_multiplier_identities([], zero_problem(), 1.0)


# ---------------------------------------------------------------------------
# one-step inequality

def test_one_step_zero_problem_both_sides_zero():
    p = zero_problem(n=2)
    opts = SolverOptions(m=4, batch_size=1)
    st, sch = acc_state_at(p, opts, 1, 1)
    z = np.zeros(3)
    assert check_one_step_inequality(p, st, sch, opts, z, z, z) == (0.0, 0.0)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("s, k", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_one_step_inequality(seed, s, k):
    p, beta, x1s, x2s, lams = tiny_instance(seed, n=4, d=2, split="identity")
    opts = SolverOptions(m=4, batch_size=1, beta=beta)
    st, sch = acc_state_at(p, opts, s, k, seed=seed)
    lhs, rhs = check_one_step_inequality(p, st, sch, opts, x1s, x2s, lams)
    assert lhs <= rhs + 1e-9


def test_one_step_needs_single_sample_batches():
    p, beta, x1s, x2s, lams = tiny_instance(0)
    opts = SolverOptions(m=4, batch_size=2, beta=beta)
    st, sch = acc_state_at(p, opts, 0, 0)
    with pytest.raises(ValueError):
        check_one_step_inequality(p, st, sch, opts, x1s, x2s, lams)


# ---------------------------------------------------------------------------
# aggregate bound

@pytest.mark.parametrize("seed", range(3))
def test_aggregate_bound(seed):
    p, beta, x1s, x2s, lams = tiny_instance(100 + seed, n=2, d=2, split="identity")
    res = check_aggregate_bound(p, SolverOptions(m=3, batch_size=1, beta=beta), 3, x1s, x2s, lams)
    assert res["paths"] == 2 ** 9
    assert res["lhs"] <= res["rhs"] + 1e-6
    assert res["multiplier_closed_form_dev"] <= 1e-10


def test_aggregate_random_start():
    p, beta, x1s, x2s, lams = tiny_instance(7, n=2, d=2, split="identity")
    rng = np.random.default_rng(7)
    res = check_aggregate_bound(p, SolverOptions(m=3, batch_size=1, beta=beta), 2, x1s, x2s, lams,
                         x1_0=rng.standard_normal(2), x2_0=rng.standard_normal(2),
                         lam_tilde_0=rng.standard_normal(2))
    assert res["lhs"] <= res["rhs"] + 1e-6


def test_aggregate_path_cap():
    p, beta, x1s, x2s, lams = tiny_instance(0, n=2)
    with pytest.raises(ValueError, match="enumeration cap"):
        check_aggregate_bound(p, SolverOptions(m=3, batch_size=1), 3, x1s, x2s, lams,
                              max_paths=100)


# ---------------------------------------------------------------------------
# rate fitting

S = np.array([8, 16, 32, 64])


@pytest.mark.parametrize("values, slope", [(1.0 / S, -1.0), (np.full(4, 3.0), 0.0),
                                           (1.0 / S ** 2, -2.0)])
def test_rate_slope_exact(values, slope):
    assert abs(rate_slope(S, values) - slope) <= 1e-12


def test_rate_slope_excludes_nonpositive():
    with pytest.warns(UserWarning, match="excluded 1"):
        got = rate_slope(S, [1 / 8, 1 / 16, 1 / 32, 0.0])
    assert got == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("S_, v", [([1, 2, 3], [1, 1, 1]), ([1, 2, 3, 4], [1, 1, 1]),
                                   ([0, 1, 2, 3], [1, 1, 1, 1]), ([1, 2, 3, 4], [1, 0, 0, 0])])
def test_rate_slope_errors(S_, v):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            rate_slope(S_, v)


# ---------------------------------------------------------------------------
# report

def test_report_text_and_json():
    rep = DiagnosticReport()
    rep.add("identity", 1e-12, 1e-9, True)
    rep.add("slope", -0.5, -0.8, False, "S=8..64")
    assert not rep.passed
    text = rep.to_text()
    assert "PASS  identity" in text and "FAIL  slope" in text
    assert text.endswith("overall: FAIL")
    data = json.loads(rep.to_json())
    assert data["passed"] is False
    assert [c["name"] for c in data["checks"]] == ["identity", "slope"]


def test_report_empty_passes():
    assert DiagnosticReport().passed


def test_lam_hat_formula():
    got = lam_hat(np.array([1.0]), np.array([2.0]), np.array([0.5]), 2.0, 0.25)
    assert got[0] == 1.0 + 2.0 * 0.75 / 0.25 * 1.5


def test_state_at_counts(rng):
    p = random_lasso(rng, 4, 2)
    st, sch = acc_state_at(p, SolverOptions(m=4), 1, 2)
    assert (st.s, st.k) == (1, 2)
    assert st.grad_evals == 2 * 4 + 4 + 2
    assert dataclasses.is_dataclass(st)


def test_random_dataset_helper(rng):
    ds = random_dataset(rng, 3, 2, "logistic")
    assert set(np.unique(ds.labels)) <= {-1.0, 1.0}
