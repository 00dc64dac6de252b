"""Discrete-time simulation of the spiking circuit with fault hooks.

The readout ``xh`` is a leaky accumulator of delivered spikes whose fixed
point solves the embedded linear system; voltages integrate the readout
residual projected through the signed map. Recurrent feedback flows through
the readout accumulator, which is mathematically identical to explicit
neuron-to-neuron weight matrices (slow: Gamma^T (lambda I - A) Gamma, fast:
Gamma^T Gamma) but costs O(nnz(A) + M) per step; the equivalence is covered
by tests.

Two interchangeable backends implement the loop: a compiled extension
(preferred) and the numpy reference in ``_kernel_np``. Selection happens at
import and can be forced with the ``SPIKEFEM_KERNEL`` environment variable
(``compiled`` or ``numpy``) or per call via ``backend=``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernel_np
from ._kernel_np import DivergenceError  # re-exported
from .faults import NO_FAULTS, FaultRealization, FaultSpec
from .linsolve import CgConfig, cg_solve
from .network import Network

try:
    from . import _kernel as _kernel_compiled
except ImportError:  # extension not built; numpy fallback only
    _kernel_compiled = None

__all__ = [
    "SimState", "SpikeLog", "TrialResult", "DivergenceError",
    "UndefinedRateError", "available_backends", "active_backend",
    "initial_state", "step", "run", "decode", "mean_firing_rate",
    "replay_readout",
]


class UndefinedRateError(ValueError):
    """Mean firing rate requested over an empty set of surviving neurons."""


def available_backends() -> tuple[str, ...]:
    return ("compiled", "numpy") if _kernel_compiled is not None else ("numpy",)


def _resolve_backend(backend: str):
    if backend == "auto":
        backend = os.environ.get("SPIKEFEM_KERNEL", "").strip() or (
            "compiled" if _kernel_compiled is not None else "numpy")
    if backend == "compiled":
        if _kernel_compiled is None:
            raise RuntimeError("compiled kernel requested but not available")
        return _kernel_compiled, "compiled"
    if backend == "numpy":
        return _kernel_np, "numpy"
    raise ValueError(f"unknown backend {backend!r}")


def active_backend(backend: str = "auto") -> str:
    return _resolve_backend(backend)[1]


@dataclass
class SimState:
    """Per-trial mutable state: voltages, readout, and the clock."""

    v: np.ndarray
    x_hat: np.ndarray
    t: float
    step_index: int


@dataclass(frozen=True)
class SpikeLog:
    """Spike events as parallel arrays ordered by (step, neuron id)."""

    steps: np.ndarray
    neuron_ids: np.ndarray
    delivered: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def from_parts(cls, steps, ids, delivered) -> "SpikeLog":
        if steps:
            return cls(np.concatenate(steps), np.concatenate(ids),
                       np.concatenate(delivered))
        return cls(np.empty(0, np.int64), np.empty(0, np.int32), np.empty(0, bool))

    def write_csv(self, path) -> None:
        """Write the full event log as ``step,neuron_id,delivered`` rows."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write("step,neuron_id,delivered\n")
            for s, nid, d in zip(self.steps, self.neuron_ids, self.delivered):
                fh.write(f"{s},{nid},{int(d)}\n")


@dataclass(frozen=True)
class TrialResult:
    """Decoded solution and spike statistics for one simulated trial."""

    x_decoded: np.ndarray
    relative_error: float
    spike_count_total: int
    spike_count_delivered: int
    mean_rate_surviving: float
    spike_log: SpikeLog | None = None
    x_hat_final: np.ndarray | None = None
    snapshots: tuple[np.ndarray, ...] = ()


def _kernel_args(net: Network):
    gmap = net.gamma_map
    m = gmap.n_neurons
    expected = (np.arange(m, dtype=np.int64) // gmap.npm)
    if not np.array_equal(gmap.rows, expected):
        raise ValueError("kernel requires contiguous per-unknown neuron groups")
    ell_vals, ell_cols = net.fem.A.padded_rows()
    return dict(
        ell_vals=ell_vals,
        ell_cols=ell_cols,
        b=np.asarray(net.fem.b, dtype=np.float64),
        node=gmap.rows,
        gs=gmap.signed_values,
        thresh=net.thresholds,
        gamma2=net.gamma * net.gamma,
        lam=net.config.lambda_d,
        dt=net.config.dt,
        npm=gmap.npm,
    )


def initial_state(net: Network) -> SimState:
    """Rest state: zero voltages and readout at time zero."""
    return SimState(v=np.zeros(net.n_neurons), x_hat=np.zeros(net.n_dofs),
                    t=0.0, step_index=0)


def step(state: SimState, net: Network, faults: FaultRealization,
         rng: np.random.Generator | None = None) -> tuple[SimState, SpikeLog]:
    """One reference-semantics step; returns the new state and its spike events.

    ``faults.rng`` supplies drop randomness; the ``rng`` parameter is accepted
    as an explicit override for callers driving the generator themselves.
    """
    drop_rng = rng if rng is not None else faults.rng
    v = state.v.copy()
    xh = state.x_hat.copy()
    out = _kernel_np.run_loop(
        v=v, xh=xh, n_steps=1, step_offset=state.step_index,
        win_start=state.step_index + 1, ablated=faults.ablation_mask,
        drop_p=faults.drop_p, rng=drop_rng, keep_log=True,
        snapshot_steps=None, **_kernel_args(net))
    new_state = SimState(v=v, x_hat=xh, t=state.t + net.config.dt,
                         step_index=state.step_index + 1)
    log = SpikeLog.from_parts(out["log_steps"], out["log_ids"], out["log_delivered"])
    return new_state, log


def run(net: Network, faults: FaultSpec = NO_FAULTS, seed: int = 0,
        keep_log: bool = False, x_ref: np.ndarray | None = None,
        snapshot_steps=None, backend: str = "auto") -> TrialResult:
    """Simulate one trial from rest and decode the solution.

    The ablation mask is realized once before the first step; drop masks are
    drawn per step. Identical (seed, faults, backend) give bitwise-identical
    results. ``snapshot_steps`` requests copies of the readout after the
    given absolute steps.
    """
    kernel, _ = _resolve_backend(backend)
    cfg = net.config
    n_steps = cfg.n_steps
    rng = np.random.default_rng(seed)
    realization = FaultRealization.realize(faults, net.n_neurons, rng)

    v = np.zeros(net.n_neurons)
    xh = np.zeros(net.n_dofs)
    win_steps = max(1, int(round(cfg.decode_window * n_steps)))
    snap = None
    if snapshot_steps is not None:
        snap = np.asarray(sorted(int(s) for s in snapshot_steps), dtype=np.int64)

    out = kernel.run_loop(
        v=v, xh=xh, n_steps=n_steps, step_offset=0,
        win_start=n_steps - win_steps, ablated=realization.ablation_mask,
        drop_p=realization.drop_p, rng=rng, keep_log=keep_log,
        snapshot_steps=snap, **_kernel_args(net))

    x_decoded = out["xsum"] / out["n_win"]

    if x_ref is None:
        x_ref = cg_solve(net.fem.A, net.fem.b, CgConfig())
    ref_norm = float(np.linalg.norm(x_ref))
    if ref_norm == 0.0:
        # zero-load runs stay silent; report 0 for an exactly-zero decode
        rel_err = 0.0 if not np.any(x_decoded) else float("inf")
    else:
        rel_err = float(np.linalg.norm(x_decoded - x_ref)) / ref_norm

    mask = realization.ablation_mask
    n_surviving = net.n_neurons if mask is None else int(net.n_neurons - mask.sum())
    if n_surviving > 0:
        surviving_spikes = out["total"] if mask is None else int(out["counts"][~mask].sum())
        mean_rate = surviving_spikes / (n_surviving * cfg.t_total)
    else:
        mean_rate = 0.0

    log = None
    if keep_log:
        log = SpikeLog.from_parts(out["log_steps"], out["log_ids"], out["log_delivered"])

    return TrialResult(
        x_decoded=x_decoded,
        relative_error=rel_err,
        spike_count_total=int(out["total"]),
        spike_count_delivered=int(out["delivered"]),
        mean_rate_surviving=float(mean_rate),
        spike_log=log,
        x_hat_final=xh,
        snapshots=tuple(out["snapshots"]),
    )


def decode(x_hat_history: np.ndarray, decode_window: float) -> np.ndarray:
    """Time-average of the readout over the final ``decode_window`` fraction.

    Accumulates rows sequentially so the result matches the in-loop window
    sum bit for bit.
    """
    n_steps = x_hat_history.shape[0]
    if n_steps == 0:
        raise ValueError("empty readout history")
    n_win = max(1, int(round(decode_window * n_steps)))
    acc = np.zeros(x_hat_history.shape[1])
    for row in x_hat_history[n_steps - n_win:]:
        acc += row
    return acc / n_win


def mean_firing_rate(log: SpikeLog, ablation_mask: np.ndarray,
                     duration: float) -> float:
    """Spikes per surviving neuron per unit time, counting dropped spikes too.

    ``ablation_mask`` is the run's boolean mask (all False for an unablated
    network); it also fixes the neuron count, which the log alone does not
    carry.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    ablation_mask = np.asarray(ablation_mask, dtype=bool)
    n_surviving = int((~ablation_mask).sum())
    if n_surviving == 0:
        raise UndefinedRateError("no surviving neurons")
    n_spikes = int((~ablation_mask[log.neuron_ids]).sum()) if len(log) else 0
    return n_spikes / (n_surviving * duration)


def replay_readout(log: SpikeLog, net: Network, n_steps: int) -> np.ndarray:
    """Rebuild the final readout from delivered log events alone.

    Applies the same per-step additions (ascending neuron order) and decay as
    the simulator, so it must match ``x_hat_final`` exactly; used to validate
    that the readout is a pure function of the delivered spike train.
    """
    gmap = net.gamma_map
    decay = 1.0 - net.config.lambda_d * net.config.dt
    xh = np.zeros(gmap.n_dofs)
    keep = log.delivered
    steps = log.steps[keep]
    ids = log.neuron_ids[keep]
    pos = 0
    n_events = len(steps)
    for s in range(n_steps):
        while pos < n_events and steps[pos] == s:
            xh[gmap.rows[ids[pos]]] += gmap.signed_values[ids[pos]]
            pos += 1
        xh *= decay
    return xh
