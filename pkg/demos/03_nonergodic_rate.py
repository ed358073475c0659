"""
The O(1/S) decay of the constraint violation
============================================

The output of each epoch is an average of that epoch's iterates only, so
its constraint violation should fall like 1/S. We fit the log-log slope
over S = 8, 16, 32, 64 for two penalties.
"""

from sadmm.diagnostics import rate_slope
from sadmm.harness import synth_lasso
from sadmm.model import build_lasso
from sadmm.solvers import SolverOptions, solve_acc_sadmm

problem = build_lasso(synth_lasso(200, 20, seed=0), mu=1e-3)
S = [8, 16, 32, 64]

for beta in (1.0, 0.1):
    sol = solve_acc_sadmm(problem, SolverOptions(epochs=64, batch_size=10, beta=beta, seed=0))
    cv = sol.trace.column("constraint_violation")
    vals = [cv[s - 1] for s in S]
    print(f"beta={beta:<4}", "  ".join(f"S={s}: {v:.2e}" for s, v in zip(S, vals)),
          f"  slope {rate_slope(S, vals):+.2f}")

# A slope at or below -1 is consistent with the rate; larger penalties
# enforce the constraint harder and decay faster here.
