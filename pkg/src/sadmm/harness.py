"""Experiment configuration, execution and metric files.

A run grid is described by a JSON file; see ``docs/config.md`` in the
repository for the schema. Unknown keys anywhere in the file are rejected.

Outputs per ``(solver, seed)``: ``{solver}_seed{seed}.csv`` with the fixed
metric columns and ``{solver}_seed{seed}.manifest.json``. After all runs,
``{solver}_mean.csv`` holds across-seed means of the successful runs.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import __version__
from .diagnostics import (DiagnosticReport, ReferenceError, acc_state_at, check_aggregate_bound,
                          check_multiplier_identities, check_one_step_inequality,
                          compute_reference, rate_slope)
from .estimators import make_snapshot, variance_bound_lhs_rhs
from .model import (Dataset, LeastSquaresLoss, LogisticLoss, build_graph_pattern, build_lasso,
                    load_libsvm, normalize_samples)
from .solvers import SOLVERS, DivergenceError, SolverOptions, solve_acc_sadmm
from .trace import CSV_COLUMNS, MetricTrace

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "SolverConfig",
    "ExperimentConfig",
    "RunResult",
    "synth_lasso",
    "build_problem",
    "run",
    "run_checks",
    "aggregate_traces",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _take(raw, cls, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return raw


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 200
    d: int = 20
    sparsity: float = 0.3
    noise: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class GraphConfig:
    edges: Optional[str] = None
    threshold: Optional[float] = None


@dataclass(frozen=True)
class ProblemConfig:
    dataset: Optional[str] = None
    test_dataset: Optional[str] = None
    synthetic: Optional[SyntheticConfig] = None
    test_fraction: float = 0.0
    loss: str = "squared"
    mu: float = 1e-5
    split: str = "identity"
    graph: Optional[GraphConfig] = None
    normalize: str = "sample"

    @classmethod
    def from_dict(cls, raw):
        raw = dict(_take(raw, cls, "problem"))
        if raw.get("synthetic") is not None:
            raw["synthetic"] = SyntheticConfig(**_take(raw["synthetic"], SyntheticConfig,
                                                       "problem.synthetic"))
        if raw.get("graph") is not None:
            raw["graph"] = GraphConfig(**_take(raw["graph"], GraphConfig, "problem.graph"))
        cfg = cls(**raw)
        if (cfg.dataset is None) == (cfg.synthetic is None):
            raise ConfigError("problem: give exactly one of 'dataset' and 'synthetic'")
        if cfg.loss not in ("squared", "logistic"):
            raise ConfigError(f"problem.loss: unknown loss {cfg.loss!r}")
        if cfg.split not in ("identity", "graph"):
            raise ConfigError(f"problem.split: unknown split {cfg.split!r}")
        if cfg.split == "graph" and cfg.graph is None:
            raise ConfigError("problem.graph is required for the graph split")
        if cfg.normalize not in ("sample", "feature", "none"):
            raise ConfigError(f"problem.normalize: unknown mode {cfg.normalize!r}")
        if cfg.mu <= 0:
            raise ConfigError("problem.mu must be positive")
        if not 0.0 <= cfg.test_fraction < 1.0:
            raise ConfigError("problem.test_fraction must lie in [0, 1)")
        return cfg


@dataclass(frozen=True)
class SolverConfig:
    """Per-solver overrides of the grid-wide settings."""

    name: str
    beta: float = 1.0
    rho: float = 1.0
    beta_max: float = 10.0
    sigma: float = 0.0
    c: float = 2.0
    tau: float = 2.0
    snapshot: str = "average"
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    m: Optional[int] = None

    @classmethod
    def from_dict(cls, raw, where):
        cfg = cls(**_take(raw, cls, where))
        if cfg.name not in SOLVERS:
            raise ConfigError(f"{where}: unknown solver {cfg.name!r} "
                              f"(choose from {', '.join(SOLVERS)})")
        return cfg


@dataclass(frozen=True)
class ReferenceConfig:
    method: str = "ladmm"
    budget: int = 100000
    beta: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemConfig
    solvers: tuple
    epochs: int = 30
    batch_size: int = 1
    m: Optional[int] = None
    seeds: tuple = (0,)
    output_dir: str = "results"
    paper_lipschitz: bool = False
    warm_start: bool = False
    record_identities: bool = False
    reference: Optional[ReferenceConfig] = field(default_factory=ReferenceConfig)
    workers: int = 1
    wall_time: bool = False

    @classmethod
    def from_dict(cls, raw):
        raw = dict(_take(raw, cls, "config"))
        if "problem" not in raw or "solvers" not in raw:
            raise ConfigError("config: 'problem' and 'solvers' are required")
        raw["problem"] = ProblemConfig.from_dict(raw["problem"])
        solvers = raw["solvers"]
        if not isinstance(solvers, list) or not solvers:
            raise ConfigError("config.solvers: expected a non-empty list")
        raw["solvers"] = tuple(SolverConfig.from_dict(s, f"solvers[{i}]")
                               for i, s in enumerate(solvers))
        names = [s.name for s in raw["solvers"]]
        if len(set(names)) != len(names):
            raise ConfigError("config.solvers: each solver may appear once")
        if "seeds" in raw:
            seeds = raw["seeds"]
            if not isinstance(seeds, list) or not seeds or any(
                    not isinstance(s, int) or s < 0 or s >= 2 ** 64 for s in seeds):
                raise ConfigError("config.seeds: expected a list of unsigned 64-bit integers")
            raw["seeds"] = tuple(seeds)
        if raw.get("reference") is not None:
            raw["reference"] = ReferenceConfig(**_take(raw["reference"], ReferenceConfig,
                                                       "reference"))
        cfg = cls(**raw)
        if cfg.epochs < 1:
            raise ConfigError("config.epochs must be at least 1")
        if cfg.batch_size < 1:
            raise ConfigError("config.batch_size must be at least 1")
        if cfg.workers < 1:
            raise ConfigError("config.workers must be at least 1")
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def options(self, solver, seed):
        """Solver options for one run."""
        return SolverOptions(
            epochs=solver.epochs or self.epochs,
            batch_size=solver.batch_size or self.batch_size,
            m=solver.m if solver.m is not None else self.m,
            beta=solver.beta, rho=solver.rho, beta_max=solver.beta_max, sigma=solver.sigma,
            c=solver.c, tau=solver.tau, seed=seed, snapshot=solver.snapshot,
            warm_start=self.warm_start, record_identities=self.record_identities)


# ---------------------------------------------------------------------------
# data

def synth_lasso(n, d, sparsity=0.3, noise=0.01, seed=0, loss="squared", return_truth=False):
    """Synthetic regression or classification data with a sparse ground truth.

    Features are standard normal and each row is scaled to unit norm. A
    fraction `sparsity` of the ``d`` coefficients (at least one) is nonzero.
    Labels are ``a_i' x0 + noise * eps_i`` for the squared loss and the sign
    of that quantity (zero mapped to +1) for the logistic loss.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    norms = np.linalg.norm(X, axis=1)
    X /= np.where(norms > 0, norms, 1.0)[:, None]
    k = max(1, int(round(sparsity * d)))
    x0 = np.zeros(d)
    support = np.sort(rng.choice(d, size=k, replace=False))
    x0[support] = rng.standard_normal(k)
    h = X @ x0 + noise * rng.standard_normal(n)
    if loss == "logistic":
        h = np.where(h >= 0, 1.0, -1.0)
    elif loss != "squared":
        raise ValueError(f"unknown loss {loss!r}")
    ds = Dataset(sp.csr_matrix(X), h)
    return (ds, x0) if return_truth else ds


def _load_data(pc):
    if pc.synthetic is not None:
        s = pc.synthetic
        train = synth_lasso(s.n, s.d, s.sparsity, s.noise, s.seed, loss=pc.loss)
    else:
        try:
            train = load_libsvm(pc.dataset)
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {pc.dataset}: {exc}") from exc
    test = None
    if pc.test_dataset is not None:
        try:
            test = load_libsvm(pc.test_dataset, n_features=train.d)
        except OSError as exc:
            raise ConfigError(f"cannot read dataset {pc.test_dataset}: {exc}") from exc
    elif pc.test_fraction > 0:
        cut = train.n - max(1, int(round(pc.test_fraction * train.n)))
        if cut < 1:
            raise ConfigError("test_fraction leaves no training samples")
        train, test = train.subset(np.arange(cut)), train.subset(np.arange(cut, train.n))
    if pc.normalize != "none":
        train = normalize_samples(train, pc.normalize)
        if test is not None:
            test = normalize_samples(test, pc.normalize)
    return train, test


def build_problem(pc, paper_lipschitz=False, train=None):
    """Problem and optional held-out loss for a :class:`ProblemConfig`."""
    if train is None:
        train, test = _load_data(pc)
    else:
        test = None
    G = None
    if pc.split == "graph":
        g = pc.graph
        if g.edges is not None:
            G = build_graph_pattern(train.d, path=g.edges)
        else:
            G = build_graph_pattern(train.d, dataset=train, threshold=g.threshold)
    problem = build_lasso(train, pc.mu, split=pc.split, G=G, loss=pc.loss,
                          paper_lipschitz=paper_lipschitz)
    test_part = None
    if test is not None:
        cls = LeastSquaresLoss if pc.loss == "squared" else LogisticLoss
        test_part = cls(test, paper_lipschitz)
    return problem, test_part, train


@lru_cache(maxsize=4)
def _cached_problem(pc, paper_lipschitz):
    return build_problem(pc, paper_lipschitz)


# ---------------------------------------------------------------------------
# running

@dataclass
class RunResult:
    solver: str
    seed: int
    status: str
    csv_path: Optional[str]
    manifest_path: str
    error: Optional[str] = None


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _write_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _run_one(cfg, solver, seed, f_star, out_dir):
    stem = os.path.join(out_dir, f"{solver.name}_seed{seed}")
    csv_path, man_path = stem + ".csv", stem + ".manifest.json"
    manifest = {"config_hash": cfg.digest(), "solver": solver.name, "seed": seed,
                "version": __version__, "started": _now(), "finished": None,
                "status": "running", "outputs": [csv_path], "error": None}
    _write_json(man_path, manifest)
    t0 = time.perf_counter()
    status, error = "ok", None
    try:
        problem, test_part, _ = _cached_problem(cfg.problem, cfg.paper_lipschitz)
        sol = SOLVERS[solver.name](problem, cfg.options(solver, seed), f_star=f_star,
                                   test_part=test_part)
        sol.trace.to_csv(csv_path, wall_time=cfg.wall_time)
        manifest["wall_ms"] = [r.wall_ms for r in sol.trace]
    except DivergenceError as exc:
        status, error = "diverged", str(exc)
    except (ValueError, MemoryError) as exc:
        status, error = "failed", str(exc)
    if status != "ok":
        csv_path = None
        manifest["outputs"] = []
    manifest.update(status=status, error=error, finished=_now(),
                    elapsed_s=time.perf_counter() - t0)
    _write_json(man_path, manifest)
    return RunResult(solver.name, seed, status, csv_path, man_path, error)


def aggregate_traces(paths, out_path, wall_time=False):
    """Across-seed mean of each metric column, epoch by epoch."""
    traces = [MetricTrace.from_csv(p) for p in paths]
    if not traces:
        raise ValueError("nothing to aggregate")
    length = min(len(t) for t in traces)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in range(length):
            row = []
            for col in CSV_COLUMNS:
                vals = [getattr(t[e], col) for t in traces]
                if col == "epoch":
                    row.append(str(e))
                elif col == "wall_ms" and not wall_time:
                    row.append("")
                elif any(v is None for v in vals):
                    row.append("")
                elif col == "grad_evals" and len(set(vals)) == 1:
                    row.append(str(vals[0]))
                else:
                    row.append(repr(float(np.mean(vals))))
            w.writerow(row)
    return out_path


def run(cfg, solver=None, seed=None, out_dir=None):
    """Execute every ``(solver, seed)`` pair of `cfg`.

    `solver` and `seed` restrict the grid to one solver name or one seed.
    Returns the list of :class:`RunResult` (aggregate files are reported as
    results with ``seed=None``).
    """
    if solver is not None:
        chosen = tuple(s for s in cfg.solvers if s.name == solver)
        if not chosen:
            if solver not in SOLVERS:
                raise ConfigError(f"unknown solver {solver!r}")
            chosen = (SolverConfig(name=solver),)
        cfg = dataclasses.replace(cfg, solvers=chosen)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(int(seed),))
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)

    problem, _, _ = _cached_problem(cfg.problem, cfg.paper_lipschitz)
    f_star = None
    if cfg.reference is not None:
        ref = compute_reference(problem, budget=cfg.reference.budget,
                                method=cfg.reference.method, beta=cfg.reference.beta)
        f_star = ref.f_star

    jobs = [(cfg, s, sd, f_star, out_dir) for s in cfg.solvers for sd in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]

    for s in cfg.solvers:
        done = [r.csv_path for r in results if r.solver == s.name and r.status == "ok"]
        if done:
            path = os.path.join(out_dir, f"{s.name}_mean.csv")
            aggregate_traces(done, path, wall_time=cfg.wall_time)
            results.append(RunResult(s.name, None, "ok", path, None))
    return results


# ---------------------------------------------------------------------------
# diagnostics suite

def _tiny(train, pc, n, paper_lipschitz):
    idx = np.arange(min(n, train.n))
    problem, _, _ = build_problem(pc, paper_lipschitz, train=train.subset(idx))
    return problem


def run_checks(cfg, seed=None):
    """Diagnostics on the configured problem; returns a :class:`DiagnosticReport`.

    Exact-expectation checks run on the first few samples of the training
    data, where enumerating every sampling choice is affordable.
    """
    seed = cfg.seeds[0] if seed is None else int(seed)
    report = DiagnosticReport()
    problem, _, train = _cached_problem(cfg.problem, cfg.paper_lipschitz)
    acc_cfg = next((s for s in cfg.solvers if s.name == "acc"), SolverConfig(name="acc"))
    opts = dataclasses.replace(cfg.options(acc_cfg, seed), record_identities=True)
    ref_cfg = cfg.reference or ReferenceConfig()

    try:
        ref = compute_reference(problem, budget=ref_cfg.budget, method=ref_cfg.method,
                                beta=ref_cfg.beta)
        report.add("reference residual", ref.residual, 1e-9, True, ref.method)
    except ReferenceError as exc:
        report.add("reference residual", float("inf"), 1e-9, False, str(exc))
        ref = None
    if ref is not None and problem.A2.scale == 1.0:
        other = "fista" if ref.method == "ladmm" else "ladmm"
        try:
            ref2 = compute_reference(problem, budget=ref_cfg.budget, method=other)
            gap = abs(ref2.f_star - ref.f_star)
            report.add("reference agreement", gap, 1e-8, gap <= 1e-8, f"{ref.method} vs {other}")
        except ReferenceError as exc:
            report.add("reference agreement", float("inf"), 1e-8, False, str(exc))

    sol = solve_acc_sadmm(problem, opts, f_star=None if ref is None else ref.f_star)
    dev = check_multiplier_identities(sol.records, problem, opts.beta)
    for key in ("update", "difference", "continuity"):
        report.add(f"multiplier identity ({key})", dev[key], 1e-9, dev[key] <= 1e-9)

    state = sol.state
    snap = make_snapshot(problem.f2, state.xt2)
    if problem.n <= 10 ** 4:
        lhs, rhs = variance_bound_lhs_rhs(problem.f2, state.x2, snap, b=1)
        report.add("variance bound slack", rhs - lhs, -1e-12, rhs - lhs >= -1e-12, "exhaustive")

    small = _tiny(train, cfg.problem, 6, cfg.paper_lipschitz)
    small_opts = SolverOptions(batch_size=1, m=4, beta=opts.beta, c=opts.c, tau=opts.tau)
    sref = compute_reference(small, budget=max(ref_cfg.budget, 200000))
    x1s = small.recover_x1(sref.x2) if small.recover_x1 else sref.x1
    worst = float("inf")
    for s in (0, 1):
        for k in (0, 1):
            st, sch = acc_state_at(small, small_opts, s, k, seed=seed)
            lhs, rhs = check_one_step_inequality(small, st, sch, small_opts, x1s, sref.x2,
                                                 sref.lam)
            worst = min(worst, rhs - lhs)
    report.add("one-step inequality slack", worst, -1e-9, worst >= -1e-9, f"n={small.n}")

    pair = _tiny(train, cfg.problem, 2, cfg.paper_lipschitz)
    pref = compute_reference(pair, budget=max(ref_cfg.budget, 200000))
    x1p = pair.recover_x1(pref.x2) if pair.recover_x1 else pref.x1
    th = check_aggregate_bound(pair, dataclasses.replace(small_opts, m=3), 3, x1p, pref.x2,
                               pref.lam)
    slack = th["rhs"] - th["lhs"]
    report.add("aggregate bound slack", slack, -1e-6, slack >= -1e-6, f"{th['paths']} paths")

    S = [e for e in (8, 16, 32, 64) if e <= opts.epochs]
    if len(S) == 4:
        cv = sol.trace.column("constraint_violation")
        slope = rate_slope(S, [cv[e - 1] for e in S])
        report.add("constraint violation slope", slope, -0.8, slope <= -0.8, "S=8..64")
    return report
