"""ACC-SADMM and the stochastic ADMM baselines."""

from .acc import (AccState, acc_epoch_boundary, acc_inner_step, acc_output, init_acc_state,
                  output_weights, snapshot_weights, solve_acc_sadmm)
from .baselines import (SagTable, linearized_step, opt_step_size, sag_step_size,
                        solve_linearized_admm, solve_opt_admm, solve_sag_admm,
                        solve_stoc_admm, solve_svrg_admm, stoc_step_size, svrg_step_size)
from .common import (DivergenceError, Solution, SolverOptions, ThetaSchedule,
                     continuation_beta, theta)

SOLVERS = {
    "acc": solve_acc_sadmm,
    "stoc": solve_stoc_admm,
    "svrg": solve_svrg_admm,
    "opt": solve_opt_admm,
    "sag": solve_sag_admm,
}

__all__ = [
    "SOLVERS",
    "AccState",
    "DivergenceError",
    "SagTable",
    "Solution",
    "SolverOptions",
    "ThetaSchedule",
    "acc_epoch_boundary",
    "acc_inner_step",
    "acc_output",
    "continuation_beta",
    "init_acc_state",
    "linearized_step",
    "opt_step_size",
    "output_weights",
    "sag_step_size",
    "snapshot_weights",
    "solve_acc_sadmm",
    "solve_linearized_admm",
    "solve_opt_admm",
    "solve_sag_admm",
    "solve_stoc_admm",
    "solve_svrg_admm",
    "stoc_step_size",
    "svrg_step_size",
    "theta",
]
