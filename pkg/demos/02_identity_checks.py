"""
Checking the convergence argument numerically
=============================================

The analysis of ACC-SADMM rests on an auxiliary multiplier

    lam_hat = lam_tilde + beta (1 - theta1)/theta1 (A x - b)

together with a one-step inequality and an aggregate bound after S epochs.
All three can be evaluated on tiny problems with the expectation over the
sampled index computed exactly, by enumerating every choice.
"""

import numpy as np
import scipy.sparse as sp

from sadmm.diagnostics import (acc_state_at, check_aggregate_bound, check_multiplier_identities,
                               check_one_step_inequality, compute_reference)
from sadmm.model import Dataset, build_lasso
from sadmm.solvers import SolverOptions, solve_acc_sadmm

rng = np.random.default_rng(7)


def tiny(n, d):
    X = sp.csr_matrix(rng.standard_normal((n, d)))
    return build_lasso(Dataset(X, rng.standard_normal(n)), mu=0.1)


# Multiplier identities, recomputed from a recorded run
p = tiny(6, 4)
opts = SolverOptions(m=4, epochs=3, beta=0.7, record_identities=True)
dev = check_multiplier_identities(solve_acc_sadmm(p, opts).records, p, opts.beta)
print("identity deviations:",
      {k: f"{v:.1e}" for k, v in dev.items() if k != "passed"})

# The one-step inequality at a few states; x1* is taken feasible from x2*
p = tiny(5, 3)
ref = compute_reference(p, budget=200000)
x1s = p.recover_x1(ref.x2)
opts = SolverOptions(m=4, batch_size=1, beta=0.7)
for s, k in [(0, 0), (0, 1), (1, 0), (1, 1)]:
    state, sched = acc_state_at(p, opts, s, k, seed=3)
    lhs, rhs = check_one_step_inequality(p, state, sched, opts, x1s, ref.x2, ref.lam)
    print(f"s={s} k={k}: lhs={lhs:+.4e}  rhs={rhs:+.4e}  slack={rhs - lhs:.2e}")

# The aggregate bound after three epochs over all 2^9 sampling paths. The
# epoch length is 3 because m = 2 would make theta2 vanish.
p = tiny(2, 2)
ref = compute_reference(p, budget=200000)
res = check_aggregate_bound(p, SolverOptions(m=3, batch_size=1, beta=0.7), 3,
                     p.recover_x1(ref.x2), ref.x2, ref.lam)
print(f"\naggregate bound over {res['paths']} paths: lhs={res['lhs']:.4e} <= rhs={res['rhs']:.4e}")
dev = res["multiplier_closed_form_dev"]
print(f"closed form of the final multiplier, max deviation {dev:.1e}")
