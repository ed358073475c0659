"""
From a LIBSVM file to metric CSVs with the command line
=======================================================

The ``sadmm`` command reads a JSON config, runs every (solver, seed) pair
and writes one CSV per run plus across-seed means. This demo writes a small
dataset in LIBSVM format, runs the grid and fits the rate slope from a CSV.
"""

import json
import os
import tempfile

from sadmm.cli import main
from sadmm.harness import synth_lasso
from sadmm.model import dump_libsvm, load_libsvm

work = tempfile.mkdtemp(prefix="sadmm-demo-")
train = os.path.join(work, "train.svm")
dump_libsvm(synth_lasso(150, 10, seed=4), train)
print(open(train).readline().strip()[:72], "...")
print("round trip:", load_libsvm(train).features.shape)

config = {
    "problem": {"dataset": train, "mu": 1e-3, "test_fraction": 0.2},
    "solvers": [{"name": "acc", "beta": 1.0}, {"name": "svrg", "beta": 0.1, "rho": 1.1}],
    "epochs": 64, "batch_size": 5, "seeds": [0, 1, 2],
    "output_dir": os.path.join(work, "results"),
}
path = os.path.join(work, "config.json")
with open(path, "w") as fh:
    json.dump(config, fh, indent=2)

code = main(["run", "--config", path])
print("exit code", code)
print(sorted(os.listdir(config["output_dir"])))

print("slope of acc constraint violation:")
main(["slope", "--csv", os.path.join(config["output_dir"], "acc_mean.csv"),
      "--epochs", "8,16,32,64"])
