"""Fault-probability sweeps, raster extraction, and per-node error fields.

Every trial seed derives from ``(master_seed, fault_kind, p_index, trial)``
through a SeedSequence, so editing the probability grid only reseeds the
edited points and sweeps are reproducible for any parallelism degree.
Diverged trials are recorded and excluded from means rather than aborting
the sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .faults import FaultSpec
from .fem import RHS_FIELDS, FemSystem, assemble
from .linsolve import CgConfig, cg_solve
from .mesh import Mesh, build_unit_square_mesh
from .network import NetworkConfig, build_network
from .simulator import DivergenceError, SpikeLog, TrialResult, run

FAULT_KIND_CODES = {"ablation": 1, "drop": 2}

DEFAULT_ABLATION_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_DROP_GRID = (0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)


@dataclass(frozen=True)
class Problem:
    """A mesh, its assembled system, and the conventional reference solution."""

    mesh: Mesh
    system: FemSystem
    rhs_name: str
    x_ref: np.ndarray


def build_problem(n_side: int = 17, rhs: str = "paper") -> Problem:
    if rhs not in RHS_FIELDS:
        raise ValueError(f"unknown rhs {rhs!r}, expected one of {sorted(RHS_FIELDS)}")
    mesh = build_unit_square_mesh(n_side)
    system = assemble(mesh, RHS_FIELDS[rhs])
    x_ref = cg_solve(system.A, system.b, CgConfig())
    return Problem(mesh=mesh, system=system, rhs_name=rhs, x_ref=x_ref)


def relative_error(x: np.ndarray, x_ref: np.ndarray) -> float:
    """L2 relative error against the reference; undefined for a zero reference."""
    x = np.asarray(x, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if x.shape != x_ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_ref.shape}")
    ref_norm = float(np.linalg.norm(x_ref))
    if ref_norm == 0.0:
        raise ValueError("relative error undefined for a zero reference")
    return float(np.linalg.norm(x - x_ref)) / ref_norm


def derive_trial_seed(master_seed: int, fault_kind: str, p_index: int,
                      trial_index: int) -> int:
    code = FAULT_KIND_CODES[fault_kind]
    ss = np.random.SeedSequence((master_seed, code, p_index, trial_index))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrialRecord:
    """One sweep trial as it appears in ``sweep.csv``."""

    p: float
    p_index: int
    trial: int
    seed: int
    relative_error: float
    spikes_total: int
    spikes_delivered: int
    mean_rate: float
    failed: bool


@dataclass
class SweepResult:
    """All trials of one fault sweep at one redundancy level."""

    fault_kind: str
    npm: int
    p_values: tuple[float, ...]
    records: list[TrialRecord] = field(default_factory=list)

    def errors_at(self, p_index: int) -> list[float]:
        return [r.relative_error for r in self.records
                if r.p_index == p_index and not r.failed]

    def mean_error(self, p_index: int) -> float:
        errs = self.errors_at(p_index)
        return float(np.mean(errs)) if errs else math.nan

    def sem(self, p_index: int) -> float:
        errs = self.errors_at(p_index)
        if len(errs) < 2:
            return 0.0
        return float(np.std(errs, ddof=1) / math.sqrt(len(errs)))

    def n_ok(self, p_index: int) -> int:
        return len(self.errors_at(p_index))

    def failed_count(self, p_index: int) -> int:
        return sum(1 for r in self.records if r.p_index == p_index and r.failed)


def _fault_spec(kind: str, p: float) -> FaultSpec:
    if kind == "ablation":
        return FaultSpec(ablation_p=p, drop_p=0.0)
    if kind == "drop":
        return FaultSpec(ablation_p=0.0, drop_p=p)
    raise ValueError(f"unknown fault kind {kind!r}")


def _run_one(args) -> TrialRecord:
    net, x_ref, kind, p, p_index, trial, seed, backend = args
    try:
        result = run(net, _fault_spec(kind, p), seed=seed, x_ref=x_ref,
                     backend=backend)
        return TrialRecord(p=p, p_index=p_index, trial=trial, seed=seed,
                           relative_error=result.relative_error,
                           spikes_total=result.spike_count_total,
                           spikes_delivered=result.spike_count_delivered,
                           mean_rate=result.mean_rate_surviving, failed=False)
    except DivergenceError:
        return TrialRecord(p=p, p_index=p_index, trial=trial, seed=seed,
                           relative_error=math.nan, spikes_total=0,
                           spikes_delivered=0, mean_rate=math.nan, failed=True)


def _sweep(kind: str, problem: Problem, config: NetworkConfig,
           p_values, n_trials: int, master_seed: int, jobs: int = 1,
           backend: str = "auto") -> SweepResult:
    p_values = tuple(float(p) for p in p_values)
    for p in p_values:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"fault probability {p} outside [0, 1]")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    net = build_network(problem.system, config)
    tasks = [
        (net, problem.x_ref, kind, p, p_index, trial,
         derive_trial_seed(master_seed, kind, p_index, trial), backend)
        for p_index, p in enumerate(p_values)
        for trial in range(n_trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=lambda r: (r.p_index, r.trial))
    return SweepResult(fault_kind=kind, npm=config.npm, p_values=p_values,
                       records=records)


def ablation_sweep(problem: Problem, config: NetworkConfig,
                   p_values=DEFAULT_ABLATION_GRID, n_trials: int = 5,
                   master_seed: int = 0, jobs: int = 1,
                   backend: str = "auto") -> SweepResult:
    """Seeded trials with pre-run neuron ablation over a probability grid."""
    return _sweep("ablation", problem, config, p_values, n_trials, master_seed,
                  jobs, backend)


def drop_sweep(problem: Problem, config: NetworkConfig,
               p_values=DEFAULT_DROP_GRID, n_trials: int = 5,
               master_seed: int = 0, jobs: int = 1,
               backend: str = "auto") -> SweepResult:
    """Seeded trials with per-step spike dropping over a probability grid."""
    return _sweep("drop", problem, config, p_values, n_trials, master_seed,
                  jobs, backend)


@dataclass(frozen=True)
class RasterTable:
    """Spike times of a sampled neuron subset, dropped events flagged."""

    neuron_ids: np.ndarray
    times: np.ndarray
    delivered: np.ndarray
    sampled_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.times)


def raster_extract(log: SpikeLog, k: int, rng: np.random.Generator,
                   n_neurons: int, dt: float) -> RasterTable:
    """Events of ``k`` uniformly sampled neuron ids (times are step * dt)."""
    if k > n_neurons:
        raise ValueError(f"cannot sample {k} of {n_neurons} neurons")
    chosen = np.sort(rng.choice(n_neurons, size=k, replace=False))
    keep = np.isin(log.neuron_ids, chosen)
    return RasterTable(neuron_ids=log.neuron_ids[keep],
                       times=log.steps[keep] * dt,
                       delivered=log.delivered[keep],
                       sampled_ids=chosen)


@dataclass(frozen=True)
class ErrorField:
    """Per-interior-node decoded value, reference value, and their difference."""

    node_ids: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    neurofem: np.ndarray
    reference: np.ndarray
    difference: np.ndarray

    def squared_error_share(self, top_fraction: float = 0.10) -> float:
        """Fraction of total squared error carried by the worst nodes."""
        sq = self.difference ** 2
        total = sq.sum()
        if total == 0.0:
            return 0.0
        k = max(1, int(math.ceil(top_fraction * len(sq))))
        return float(np.sort(sq)[::-1][:k].sum() / total)


def error_field(problem: Problem, config: NetworkConfig, fault_spec: FaultSpec,
                seed: int, backend: str = "auto") -> tuple[ErrorField, TrialResult]:
    """One trial's per-node comparison against the conventional solution."""
    net = build_network(problem.system, config)
    result = run(net, fault_spec, seed=seed, x_ref=problem.x_ref, backend=backend)
    nodes = problem.system.dof_to_node
    coords = problem.mesh.coords[nodes]
    return ErrorField(node_ids=nodes.copy(), xs=coords[:, 0], ys=coords[:, 1],
                      neurofem=result.x_decoded,
                      reference=problem.x_ref.copy(),
                      difference=result.x_decoded - problem.x_ref), result


# ---------------------------------------------------------------------------
# file outputs


def _r(x) -> str:
    """Shortest round-trip decimal for a float (stable across runs)."""
    return repr(float(x))


def write_sweep_csv(results: list[SweepResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("fault_kind,npm,p,trial,seed,relative_error,spikes_total,"
                 "spikes_delivered,mean_rate,failed\n")
        for res in results:
            for r in res.records:
                fh.write(f"{res.fault_kind},{res.npm},{_r(r.p)},{r.trial},{r.seed},"
                         f"{_r(r.relative_error)},{r.spikes_total},"
                         f"{r.spikes_delivered},{_r(r.mean_rate)},{int(r.failed)}\n")
    return path


def write_summary_csv(results: list[SweepResult], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("fault_kind,npm,p,mean_error,sem,n_ok\n")
        for res in results:
            for p_index, p in enumerate(res.p_values):
                fh.write(f"{res.fault_kind},{res.npm},{_r(p)},"
                         f"{_r(res.mean_error(p_index))},{_r(res.sem(p_index))},"
                         f"{res.n_ok(p_index)}\n")
    return path


def write_raster_csv(table: RasterTable, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("neuron_id,time,delivered\n")
        for nid, t, d in zip(table.neuron_ids, table.times, table.delivered):
            fh.write(f"{nid},{_r(t)},{int(d)}\n")
    return path


def write_error_field_csv(fieldv: ErrorField, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("node_id,x,y,neurofem,reference,difference\n")
        for i in range(len(fieldv.node_ids)):
            fh.write(f"{fieldv.node_ids[i]},{_r(fieldv.xs[i])},{_r(fieldv.ys[i])},"
                     f"{_r(fieldv.neurofem[i])},{_r(fieldv.reference[i])},"
                     f"{_r(fieldv.difference[i])}\n")
    return path


def write_solution_csv(problem: Problem, values: np.ndarray, path: str | Path) -> Path:
    """Interior-node scalar field as ``node_id,x,y,value`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = problem.system.dof_to_node
    coords = problem.mesh.coords[nodes]
    with open(path, "w") as fh:
        fh.write("node_id,x,y,value\n")
        for i, nid in enumerate(nodes):
            fh.write(f"{nid},{_r(coords[i, 0])},{_r(coords[i, 1])},{_r(values[i])}\n")
    return path
