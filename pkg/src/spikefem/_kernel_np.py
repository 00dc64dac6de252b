"""Reference step loop for the spiking solver (pure numpy).

This module defines the canonical per-step semantics; the compiled kernel in
``_kernel.pyx`` reproduces the exact same arithmetic (same operation order,
no fused multiply-add) so both backends produce bit-identical trajectories.

One step, in order:

1. integrate voltages: ``v += dt * (gs * resid[node] - lam * v)`` with
   ``resid = (b + lam * xh) - A xh``; ablated neurons stay pinned at zero.
2. sequential threshold sweep in ascending neuron index over live voltages:
   a neuron fires when its voltage exceeds its threshold at its turn. Every
   fired spike resets its emitter by ``gamma**2``. A delivered spike (not
   dropped this step) also subtracts ``gs[i] * gs[j]`` from the other neurons
   of the same unknown and adds ``gs[j]`` to the readout. Inhibited or newly
   excited neurons later in the sweep see the updated voltages.
3. readout decay: ``xh *= 1 - lam * dt``.

The sweep replaces a simultaneous all-fire rule: neurons sharing an unknown
and a sign are otherwise exact copies of each other (same drive, threshold,
and reset), so they would cross threshold on the same step forever and emit
npm/2-sized volleys that overshoot the readout by the same factor. The
sequential pass lets the first spike inhibit its peers within the step,
which restores one-spike-per-crossing coding while keeping the simulation
deterministic.
"""

from __future__ import annotations

import heapq

import numpy as np

DROP_CHUNK = 256


class DivergenceError(RuntimeError):
    """Voltage or readout became non-finite during simulation."""

    def __init__(self, step_index: int):
        super().__init__(f"non-finite state at step {step_index}")
        self.step_index = step_index


def run_loop(v, xh, ell_vals, ell_cols, b, node, gs, thresh, gamma2, lam, dt,
             npm, n_steps, step_offset, win_start, ablated, drop_p, rng,
             keep_log, snapshot_steps):
    """Advance ``n_steps`` steps in place; returns counters, log and window sums.

    ``v`` and ``xh`` are modified in place. ``snapshot_steps`` must be an
    ascending array of absolute step indices (a snapshot of ``xh`` is taken
    after completing that step).
    """
    n_dofs = xh.shape[0]
    m = v.shape[0]
    width = ell_vals.shape[1]
    decay = 1.0 - lam * dt
    has_drops = drop_p > 0.0 and rng is not None

    xsum = np.zeros(n_dofs)
    n_win = 0
    counts = np.zeros(m, dtype=np.int64)
    total = 0
    delivered_total = 0
    log_steps: list[np.ndarray] = []
    log_ids: list[np.ndarray] = []
    log_delivered: list[np.ndarray] = []
    snapshots: list[np.ndarray] = []
    snap_next = 0
    snapshot_steps = snapshot_steps if snapshot_steps is not None else np.empty(0, np.int64)

    drop_chunk = None
    queued = np.zeros(m, dtype=bool)

    for local in range(n_steps):
        step = step_offset + local

        if has_drops:
            pos = local % DROP_CHUNK
            if pos == 0:
                draw = rng.random((min(DROP_CHUNK, n_steps - local), m))
                drop_chunk = draw < drop_p
            drop_row = drop_chunk[pos]
        else:
            drop_row = None

        # phase 1: voltage integration (fixed-width row accumulation so the
        # compiled kernel can reproduce the same rounding sequence)
        ax = ell_vals[:, 0] * xh[ell_cols[:, 0]]
        for w in range(1, width):
            ax = ax + ell_vals[:, w] * xh[ell_cols[:, w]]
        resid = (b + lam * xh) - ax
        feed = gs * resid[node]
        v += dt * (feed - lam * v)
        if ablated is not None:
            v[ablated] = 0.0

        # phase 2: spike sweep
        cand = np.flatnonzero(v > thresh)
        if cand.size:
            heap = cand.tolist()
            queued[cand] = True
            spikers: list[int] = []
            flags: list[bool] = []
            while heap:
                j = heapq.heappop(heap)
                queued[j] = False
                if v[j] <= thresh[j]:
                    continue
                dropped = bool(drop_row[j]) if drop_row is not None else False
                spikers.append(j)
                flags.append(not dropped)
                v[j] -= gamma2
                if not dropped:
                    g0 = node[j] * npm
                    for i in range(g0, g0 + npm):
                        if i == j or (ablated is not None and ablated[i]):
                            continue
                        v[i] -= gs[i] * gs[j]
                        if i > j and v[i] > thresh[i] and not queued[i]:
                            heapq.heappush(heap, i)
                            queued[i] = True
                    xh[node[j]] += gs[j]
            if spikers:
                ids = np.asarray(spikers, dtype=np.int32)
                del_flags = np.asarray(flags, dtype=bool)
                counts[ids] += 1
                total += len(ids)
                delivered_total += int(del_flags.sum())
                if keep_log:
                    log_steps.append(np.full(len(ids), step, dtype=np.int64))
                    log_ids.append(ids)
                    log_delivered.append(del_flags)

        # phase 3: readout decay
        xh *= decay

        if not (np.isfinite(v).all() and np.isfinite(xh).all()):
            raise DivergenceError(step)

        if step >= win_start:
            xsum += xh
            n_win += 1
        if snap_next < len(snapshot_steps) and step == snapshot_steps[snap_next]:
            snapshots.append(xh.copy())
            snap_next += 1

    return {
        "xsum": xsum,
        "n_win": n_win,
        "counts": counts,
        "total": total,
        "delivered": delivered_total,
        "log_steps": log_steps,
        "log_ids": log_ids,
        "log_delivered": log_delivered,
        "snapshots": snapshots,
    }
