"""Seeded experiment grids, result files, slope fits, diagnostics and plots.

Each cell ``(seed, K, rho, solver)`` draws its data from
``derive_seed(seed, K, "data")`` and its subsampling randomness from
``derive_seed(seed, K, "subsample")``.  Cells that share ``(seed, K)`` therefore
see the same trajectories, which pairs solver and radius comparisons, and a
single cell can be re-run in isolation with identical results.
"""
from __future__ import annotations

import csv
import io
import json
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import median

import numpy as np

from .drop import DropConfig, drop
from .dropv import DropVConfig, run_pipeline
from .errors import ConfigError, FileFormatError
from .model import (
    LinRmdpInstance,
    epsilon_greedy,
    load_instance,
    random_instance,
    tabular_embed,
    uniform_policy,
)
from .oracle import (
    RobustSolution,
    clipped_concentrability,
    kappa,
    robust_value_iteration,
    suboptimality,
    unclipped_concentrability,
    worst_case_kernel,
)
from .rng import derive_seed, make_rng

CSV_HEADER = ["seed", "K", "rho", "solver", "subopt", "gamma_used", "runtime_ms", "n_post"]
SOLVERS = ("drop", "drop-v")


def benchmark_instance(rho: float = 0.2) -> LinRmdpInstance:
    """Fixed tabular benchmark: S=3, A=2, H=4 (d=6), uniform initial state."""
    H, S, A = 4, 3, 2
    rng = make_rng(20240501, "benchmark")
    P = rng.dirichlet(np.ones(S), size=(H, S, A))
    P /= P.sum(axis=3, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(H, S, A))
    return tabular_embed(P, r, rho, np.full(S, 1.0 / S))


@dataclass(frozen=True)
class ExperimentConfig:
    instance: object = "benchmark"
    solver: tuple = ("drop",)
    rho: tuple = (0.2,)
    K: tuple = (1000,)
    seeds: tuple = (0,)
    delta: float = 0.1
    lambda0: float = 1.0
    gamma0: float | None = None
    lambda1: float | None = None
    gamma1: float | None = None
    behavior: str = "uniform"
    epsilon: float = 0.1
    timing: bool = True

    def __post_init__(self):
        for name in ("solver", "rho", "K", "seeds"):
            val = getattr(self, name)
            val = (val,) if isinstance(val, (str, int, float)) else tuple(val)
            object.__setattr__(self, name, val)
        if not self.K or not self.seeds or not self.rho or not self.solver:
            raise ConfigError("K, seeds, rho and solver lists must be nonempty")
        bad = [s for s in self.solver if s not in SOLVERS]
        if bad:
            raise ConfigError(f"unknown solver(s) {bad}; choose from {SOLVERS}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if any(int(k) != k or k < 3 for k in self.K):
            raise ConfigError("every K must be an integer >= 3")
        if any(r < 0 for r in self.rho):
            raise ConfigError("rho must be nonnegative")
        if self.behavior not in ("uniform", "epsilon-greedy"):
            raise ConfigError("behavior must be 'uniform' or 'epsilon-greedy'")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def load_instance(self) -> LinRmdpInstance:
        src = self.instance
        if src == "benchmark":
            return benchmark_instance()
        if isinstance(src, dict):
            keys = {"seed", "S", "A", "H", "d", "rho"}
            if set(src) != keys:
                raise ConfigError(f"random instance needs exactly the keys {sorted(keys)}")
            return random_instance(**src)
        return load_instance(src)


@dataclass(frozen=True)
class ExperimentRecord:
    seed: int
    K: int
    rho: float
    solver: str
    subopt: float
    gamma_used: float
    runtime_ms: int
    n_post: int

    def row(self) -> list[str]:
        return [str(self.seed), str(self.K), repr(float(self.rho)), self.solver,
                repr(float(self.subopt)), repr(float(self.gamma_used)),
                str(self.runtime_ms), str(self.n_post)]


def behavior_policy(inst: LinRmdpInstance, config: ExperimentConfig, solution=None) -> np.ndarray:
    if config.behavior == "uniform":
        return uniform_policy(inst.H, inst.S, inst.A)
    solution = robust_value_iteration(inst) if solution is None else solution
    return epsilon_greedy(solution.pi, config.epsilon, inst.A)


def run_cell(inst: LinRmdpInstance, behavior, solver: str, seed: int, K: int, rho: float,
             config: ExperimentConfig, solution: RobustSolution | None = None) -> ExperimentRecord:
    """Generate, subsample, fit and score one cell."""
    from .offline_data import generate

    inst_rho = inst.with_rho(rho)
    solution = robust_value_iteration(inst_rho) if solution is None else solution
    D = generate(inst, behavior, K, derive_seed(seed, K, "data"))
    sub_seed = derive_seed(seed, K, "subsample")
    start = time.perf_counter()
    if solver == "drop":
        cfg = DropConfig(rho, K, config.delta, config.lambda0, config.gamma0)
        out, D0 = drop(inst_rho, D, cfg, sub_seed)
        n_post = D0.size()
    else:
        cfg = DropVConfig(rho, K, config.delta, config.lambda1, config.gamma1,
                          config.lambda0, config.gamma0)
        out, D0, D_var = run_pipeline(inst_rho, D, cfg, sub_seed)
        n_post = D0.size() + D_var.size()
    elapsed = int(round((time.perf_counter() - start) * 1000)) if config.timing else 0
    gap = suboptimality(inst_rho, out.pi, solution)
    return ExperimentRecord(int(seed), int(K), float(rho), solver, gap, float(out.gamma), elapsed, n_post)


def _cells(config: ExperimentConfig):
    for seed in config.seeds:
        for K in config.K:
            for rho in config.rho:
                for solver in config.solver:
                    yield int(seed), int(K), float(rho), solver


def _run_chunk(args):
    config, cells = args
    inst = config.load_instance()
    behavior = behavior_policy(inst, config)
    sols = {rho: robust_value_iteration(inst.with_rho(rho)) for rho in config.rho}
    return [run_cell(inst, behavior, solver, seed, K, rho, config, sols[rho])
            for seed, K, rho, solver in cells]


def run(config: ExperimentConfig, out=None, jobs: int = 1) -> list[ExperimentRecord]:
    """Run every cell of the grid; records come back in grid order.

    With ``jobs > 1`` cells are spread over worker processes, each cell still
    single-threaded, and merged back in grid order before writing.
    """
    cells = list(_cells(config))
    if jobs <= 1 or len(cells) <= 1:
        records = _run_chunk((config, cells))
    else:
        chunks = [cells[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, [(config, c) for c in chunks]))
        records = [None] * len(cells)
        for i, part in enumerate(parts):
            records[i::jobs] = part
    if out is not None:
        write_csv(records, out)
    return records


def format_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(rec.row())
    return buf.getvalue()


def write_csv(records, path) -> None:
    Path(path).write_text(format_csv(records))


def read_csv(path) -> list[ExperimentRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise FileFormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
        records = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(CSV_HEADER):
                raise FileFormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            try:
                records.append(ExperimentRecord(
                    int(row[0]), int(row[1]), float(row[2]), row[3], float(row[4]),
                    float(row[5]), int(row[6]), int(row[7]),
                ))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def median_by_K(records) -> dict[int, float]:
    groups = defaultdict(list)
    for rec in records:
        groups[rec.K].append(rec.subopt)
    return {K: median(v) for K, v in sorted(groups.items())}


def sweep_slope(records, min_groups: int = 3, min_seeds: int = 10) -> float:
    """Least-squares slope of log(median sub-optimality) against log K."""
    groups = defaultdict(list)
    for rec in records:
        groups[rec.K].append(rec.subopt)
    if len(groups) < min_groups:
        raise ValueError(f"need at least {min_groups} distinct K values, got {len(groups)}")
    short = [K for K, v in groups.items() if len(v) < min_seeds]
    if short:
        raise ValueError(f"fewer than {min_seeds} records for K={sorted(short)}")
    Ks = np.array(sorted(groups), dtype=float)
    meds = np.array([median(groups[int(K)]) for K in Ks])
    if np.any(meds <= 0):
        raise ValueError("median sub-optimality must be positive for a log-log fit")
    x, y = np.log(Ks), np.log(meds)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def diagnose(inst: LinRmdpInstance, pi_b) -> dict:
    """Coverage diagnostics of a behavior policy against the robust optimum.

    The concentrability coefficients are evaluated on the nominal kernel and
    the worst-case kernel of the optimal robust values, so both are lower
    bounds of the maxima over the whole uncertainty set.
    """
    sol = robust_value_iteration(inst)
    kernels = [inst.nominal_kernel(), worst_case_kernel(inst, sol.V)]
    c_rob = clipped_concentrability(inst, pi_b, sol.pi, kernels)
    c_1 = unclipped_concentrability(inst, pi_b, sol.pi, kernels)
    assert c_rob <= inst.d * c_1 * (1 + 1e-12) + 1e-12, (c_rob, c_1)
    return {"kappa": kappa(inst, pi_b), "C_rob_lower_bound": c_rob, "C1_lower_bound": c_1}


def plot(csv_path, out_path) -> None:
    """Log-log chart of median sub-optimality against K, one series per solver."""
    records = read_csv(csv_path)
    if not records:
        raise FileFormatError(f"{csv_path}: no data rows")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_solver = defaultdict(list)
    for rec in records:
        by_solver[rec.solver].append(rec)
    with matplotlib.rc_context({"svg.hashsalt": "droprl", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for solver in sorted(by_solver):
            meds = [(K, m) for K, m in median_by_K(by_solver[solver]).items() if m > 0]
            if not meds:
                continue
            Ks, ms = zip(*meds)
            ax.plot(Ks, ms, marker="o", label=solver, gid=f"series-{solver}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("trajectories K")
        ax.set_ylabel("median sub-optimality")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
