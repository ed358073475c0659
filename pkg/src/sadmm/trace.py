"""Per-epoch metric records and their CSV form."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

__all__ = ["EpochRecord", "MetricTrace", "TraceRecorder", "CSV_COLUMNS", "test_loss"]

CSV_COLUMNS = ("epoch", "grad_evals", "wall_ms", "objective", "objective_gap",
               "constraint_violation", "test_loss")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    grad_evals: int
    wall_ms: float
    objective: float
    objective_gap: float | None
    constraint_violation: float
    test_loss: float | None


def _cell(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _parse(value, kind):
    if value == "":
        return None
    return int(value) if kind is int else float(value)


class MetricTrace:
    """Ordered epoch records; epochs are contiguous from 0."""

    def __init__(self, records=()):
        self.records = []
        for r in records:
            self.append(r)

    def append(self, record):
        expected = len(self.records)
        if record.epoch != expected:
            raise ValueError(f"epoch {record.epoch} recorded, expected {expected}")
        if self.records and record.grad_evals <= self.records[-1].grad_evals:
            raise ValueError("gradient evaluations must strictly increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path, wall_time=False):
        """Write the fixed column layout. ``wall_ms`` stays empty unless
        `wall_time` is set, so that reruns are byte-identical."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                row = list(astuple(r))
                if not wall_time:
                    row[2] = None
                w.writerow([_cell(v) for v in row])

    @classmethod
    def from_csv(cls, path):
        kinds = {f.name: (int if f.name in ("epoch", "grad_evals") else float)
                 for f in fields(EpochRecord)}
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
            for row in reader:
                vals = {k: _parse(row[k], kinds[k]) for k in CSV_COLUMNS}
                if vals["wall_ms"] is None:
                    vals["wall_ms"] = float("nan")
                trace.append(EpochRecord(**vals))
        return trace


def test_loss(f2_test, x):
    """Mean per-sample loss of a held-out finite sum at `x`."""
    return f2_test.value(x)


class TraceRecorder:
    """Builds :class:`EpochRecord` entries for a solver run."""

    def __init__(self, problem, f_star=None, test_part=None):
        self.problem = problem
        self.f_star = f_star
        self.test_part = test_part
        self.trace = MetricTrace()
        self._t0 = time.perf_counter()

    def record(self, x1, x2, grad_evals):
        p = self.problem
        obj = p.reported_objective(x1, x2)
        gap = None if self.f_star is None else obj - self.f_star
        viol = float(np.linalg.norm(p.residual(x1, x2)))
        tl = None if self.test_part is None else test_loss(self.test_part, x2)
        rec = EpochRecord(epoch=len(self.trace), grad_evals=int(grad_evals),
                          wall_ms=(time.perf_counter() - self._t0) * 1e3,
                          objective=obj, objective_gap=gap,
                          constraint_violation=viol, test_loss=tl)
        self.trace.append(rec)
        return rec


test_loss.__test__ = False  # keep pytest from collecting it when imported
