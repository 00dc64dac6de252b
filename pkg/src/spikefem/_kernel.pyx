# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled step loop, arithmetic-identical to ``_kernel_np.run_loop``.

Every floating-point operation is performed in the same order as the numpy
reference (and the extension is built with -ffp-contract=off), so both
backends produce bit-identical trajectories. Python is re-entered only for
drop-mask draws (once per 256 steps), optional log appends, and snapshots.
"""

from libc.math cimport isfinite

import numpy as np

cimport numpy as cnp

from ._kernel_np import DROP_CHUNK, DivergenceError

cnp.import_array()


cdef inline void heap_push(int* heap, int* size, cnp.uint8_t* queued, int val) noexcept nogil:
    cdef int i = size[0]
    cdef int parent
    heap[i] = val
    size[0] = i + 1
    queued[val] = 1
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent


cdef inline int heap_pop(int* heap, int* size) noexcept nogil:
    cdef int out = heap[0]
    cdef int n = size[0] - 1
    cdef int i = 0, child
    size[0] = n
    heap[0] = heap[n]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and heap[child + 1] < heap[child]:
            child += 1
        if heap[i] <= heap[child]:
            break
        heap[i], heap[child] = heap[child], heap[i]
        i = child
    return out


def run_loop(cnp.ndarray[cnp.float64_t, ndim=1] v not None,
             cnp.ndarray[cnp.float64_t, ndim=1] xh not None,
             cnp.ndarray[cnp.float64_t, ndim=2] ell_vals not None,
             cnp.ndarray[cnp.int32_t, ndim=2] ell_cols not None,
             cnp.ndarray[cnp.float64_t, ndim=1] b not None,
             cnp.ndarray[cnp.int32_t, ndim=1] node not None,
             cnp.ndarray[cnp.float64_t, ndim=1] gs not None,
             cnp.ndarray[cnp.float64_t, ndim=1] thresh not None,
             double gamma2, double lam, double dt, int npm,
             int n_steps, long long step_offset, long long win_start,
             object ablated, double drop_p, object rng,
             bint keep_log, object snapshot_steps):
    """Drop-in replacement for the numpy reference loop (same signature)."""
    cdef int n_dofs = xh.shape[0]
    cdef int m = v.shape[0]
    cdef int width = ell_vals.shape[1]
    cdef double decay = 1.0 - lam * dt
    cdef bint has_drops = drop_p > 0.0 and rng is not None
    cdef bint has_abl = ablated is not None

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] abl_arr
    if has_abl:
        abl_arr = np.ascontiguousarray(ablated, dtype=np.uint8)
    else:
        abl_arr = np.zeros(1, dtype=np.uint8)
    cdef cnp.uint8_t* abl = <cnp.uint8_t*> abl_arr.data

    cdef cnp.ndarray[cnp.float64_t, ndim=1] xsum = np.zeros(n_dofs)
    cdef long long n_win = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(m, dtype=np.int64)
    cdef long long total = 0
    cdef long long delivered_total = 0
    log_steps, log_ids, log_delivered, snapshots = [], [], [], []

    cdef cnp.ndarray[cnp.int64_t, ndim=1] snap_arr
    cdef int n_snap = 0, snap_next = 0
    if snapshot_steps is not None:
        snap_arr = np.ascontiguousarray(snapshot_steps, dtype=np.int64)
        n_snap = snap_arr.shape[0]
    else:
        snap_arr = np.empty(0, dtype=np.int64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] resid = np.zeros(n_dofs)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] heap_np = np.zeros(m, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] queued_np = np.zeros(m, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] spikers_np = np.zeros(m, dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] flags_np = np.zeros(m, dtype=np.uint8)
    cdef int* heap = <int*> heap_np.data
    cdef cnp.uint8_t* queued = <cnp.uint8_t*> queued_np.data
    cdef int* spikers = <int*> spikers_np.data
    cdef cnp.uint8_t* flags = <cnp.uint8_t*> flags_np.data

    cdef cnp.ndarray[cnp.float64_t, ndim=2] drop_chunk = np.empty((0, 0))
    cdef double* drop_row = NULL
    cdef int chunk_pos = 0, chunk_len = 0

    cdef long long local, step
    cdef int i, j, w, heap_size, n_spikers, g0, gend
    cdef double acc, feed, gj
    cdef bint dropped, finite_ok

    for local in range(n_steps):
        step = step_offset + local

        if has_drops:
            chunk_pos = <int> (local % DROP_CHUNK)
            if chunk_pos == 0:
                chunk_len = <int> min(DROP_CHUNK, n_steps - local)
                drop_chunk = rng.random((chunk_len, m))
            drop_row = (<double*> drop_chunk.data) + (<long long> chunk_pos) * m

        # phase 1: voltage integration
        for i in range(n_dofs):
            acc = ell_vals[i, 0] * xh[ell_cols[i, 0]]
            for w in range(1, width):
                acc = acc + ell_vals[i, w] * xh[ell_cols[i, w]]
            resid[i] = (b[i] + lam * xh[i]) - acc
        for j in range(m):
            if has_abl and abl[j]:
                v[j] = 0.0
                continue
            feed = gs[j] * resid[node[j]]
            v[j] = v[j] + dt * (feed - lam * v[j])

        # phase 2: spike sweep (ascending index, live voltages)
        heap_size = 0
        for j in range(m):
            if v[j] > thresh[j]:
                heap[heap_size] = j
                heap_size += 1
                queued[j] = 1
        n_spikers = 0
        while heap_size > 0:
            j = heap_pop(heap, &heap_size)
            queued[j] = 0
            if v[j] <= thresh[j]:
                continue
            dropped = has_drops and drop_row[j] < drop_p
            spikers[n_spikers] = j
            flags[n_spikers] = not dropped
            n_spikers += 1
            v[j] -= gamma2
            if not dropped:
                gj = gs[j]
                g0 = node[j] * npm
                gend = g0 + npm
                for i in range(g0, gend):
                    if i == j or (has_abl and abl[i]):
                        continue
                    v[i] -= gs[i] * gj
                    if i > j and v[i] > thresh[i] and not queued[i]:
                        heap_push(heap, &heap_size, queued, i)
                xh[node[j]] += gj
        if n_spikers > 0:
            total += n_spikers
            for i in range(n_spikers):
                counts[spikers[i]] += 1
                if flags[i]:
                    delivered_total += 1
            if keep_log:
                log_steps.append(np.full(n_spikers, step, dtype=np.int64))
                log_ids.append(spikers_np[:n_spikers].copy())
                log_delivered.append(flags_np[:n_spikers].astype(bool))

        # phase 3: readout decay
        for i in range(n_dofs):
            xh[i] = xh[i] * decay

        finite_ok = True
        for j in range(m):
            if not isfinite(v[j]):
                finite_ok = False
                break
        if finite_ok:
            for i in range(n_dofs):
                if not isfinite(xh[i]):
                    finite_ok = False
                    break
        if not finite_ok:
            raise DivergenceError(step)

        if step >= win_start:
            for i in range(n_dofs):
                xsum[i] += xh[i]
            n_win += 1
        if snap_next < n_snap and step == snap_arr[snap_next]:
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
