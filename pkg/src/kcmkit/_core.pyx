# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: work-queue closure, C event loop, grid crossings.

Functionally identical to kcmkit._pure; the test suite asserts equal outputs
(bit-identical trajectories for the event loop). The closure here is a
counter-based work queue instead of repeated vectorized sweeps: every
(vertex, rule) pair tracks how many of its slots still read occupied, and a
vertex joins the next wave when some rule's counter hits zero. Wave index ==
synchronous round.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log

IMPL_NAME = "core"

cdef extern from *:
    """
    typedef unsigned long long u64;
    """
    ctypedef unsigned long long u64


cdef inline u64 _mix64(u64 z) nogil:
    z = z + <u64>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _u01(u64 seed, u64 stream, u64 replica, u64 vkey,
                        u64 counter) nogil:
    cdef u64 h = _mix64(seed)
    h = _mix64(h ^ stream)
    h = _mix64(h ^ replica)
    h = _mix64(h ^ vkey)
    h = _mix64(h ^ counter)
    return ((h >> 11) + 0.5) * (2.0 ** -53)


# ------------------------------------------------------------------- closure

def closure(bits, t, flippable=None, visible=None):
    """Bootstrap closure with synchronous-round labels.

    Same contract as kcmkit._pure.closure: returns (out_bits, rounds) with
    rounds[v] = 0 for initially empty sites, r >= 1 for sites emptied in
    sweep r, -1 for sites never emptied.
    """
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] b = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef long long n = t.n_sites
    cdef cnp.ndarray[cnp.int64_t, ndim=2] nbr = t.nbr
    cdef cnp.ndarray[cnp.int64_t, ndim=2] rev = t.rev
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rule_slots = t.rule_slots
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rule_ptr = t.rule_ptr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] slot_rules = t.slot_rules
    cdef cnp.ndarray[cnp.int32_t, ndim=1] slot_ptr = t.slot_ptr
    cdef long long m = rule_ptr.shape[0] - 1
    cdef long long S = nbr.shape[1]
    cdef int pad_empty = t.pad_empty

    eff_np = np.zeros(n + 1, dtype=np.uint8)
    eff_np[:n] = (b == 0)
    if visible is not None:
        eff_np[:n] &= np.ascontiguousarray(visible, dtype=bool)
    eff_np[n] = 1 if pad_empty else 0
    can_np = (b == 1)
    if flippable is not None:
        can_np &= np.ascontiguousarray(flippable, dtype=bool)

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] eff = eff_np
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] can = can_np.astype(np.uint8)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rounds = np.where(
        b == 0, np.int32(0), np.int32(-1)).astype(np.int32)
    cdef cnp.ndarray[cnp.int16_t, ndim=1] cnt = np.zeros(n * m, dtype=np.int16)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] queue = np.empty(n, dtype=np.int64)

    cdef long long v, u, w, k, s, i, j, c, tail = 0
    cdef int sat
    for v in range(n):
        if not can[v]:
            continue
        sat = 0
        for k in range(m):
            c = 0
            for i in range(rule_ptr[k], rule_ptr[k + 1]):
                s = rule_slots[i]
                w = nbr[v, s]
                if eff[w] == 0:
                    c += 1
            cnt[v * m + k] = <short>c
            if c == 0:
                sat = 1
        if sat:
            rounds[v] = 1
            queue[tail] = v
            tail += 1

    cdef long long wave_start = 0, wave_end = tail
    cdef int label = 1, next_label
    while wave_start < wave_end:
        next_label = label + 1
        for j in range(wave_start, wave_end):
            v = queue[j]
            for s in range(S):
                u = rev[v, s]
                if u >= n:
                    continue
                for i in range(slot_ptr[s], slot_ptr[s + 1]):
                    k = slot_rules[i]
                    cnt[u * m + k] -= 1
                    if cnt[u * m + k] == 0 and can[u] and rounds[u] == -1:
                        rounds[u] = next_label
                        queue[tail] = u
                        tail += 1
        wave_start = wave_end
        wave_end = tail
        label = next_label

    out = b.copy()
    out[np.asarray(rounds) >= 1] = 0
    return out, np.asarray(rounds)


# ------------------------------------------------------------ KCM event loop

cdef inline void _heap_push(double* ht, long long* hv, long long* size,
                            double tt, long long v) nogil:
    cdef long long i = size[0], p
    ht[i] = tt
    hv[i] = v
    size[0] += 1
    while i > 0:
        p = (i - 1) >> 1
        if ht[p] < ht[i] or (ht[p] == ht[i] and hv[p] < hv[i]):
            break
        ht[p], ht[i] = ht[i], ht[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p


cdef inline void _heap_pop(double* ht, long long* hv, long long* size) nogil:
    cdef long long i = 0, l, r, sm, last = size[0] - 1
    ht[0] = ht[last]
    hv[0] = hv[last]
    size[0] = last
    while True:
        l = 2 * i + 1
        r = l + 1
        sm = i
        if l < last and (ht[l] < ht[sm] or (ht[l] == ht[sm] and hv[l] < hv[sm])):
            sm = l
        if r < last and (ht[r] < ht[sm] or (ht[r] == ht[sm] and hv[r] < hv[sm])):
            sm = r
        if sm == i:
            break
        ht[sm], ht[i] = ht[i], ht[sm]
        hv[sm], hv[i] = hv[i], hv[sm]
        i = sm


def kcm_run(bits, t, vkeys, seed, replica, double q, double t_max,
            long long target=-1, bint stop_when_target_empty=False,
            batch_edges=None, bint log_events=False, max_events=None):
    """Continuous-time constrained dynamics; mirrors kcmkit._pure.kcm_run."""
    cdef long long n = t.n_sites
    cdef cnp.ndarray[cnp.int64_t, ndim=2] nbr = t.nbr
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rule_slots = t.rule_slots
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rule_ptr = t.rule_ptr
    cdef long long m = rule_ptr.shape[0] - 1
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] bl = np.empty(n + 1, dtype=np.uint8)
    bl[:n] = np.ascontiguousarray(bits, dtype=np.uint8)
    bl[n] = 0 if t.pad_empty else 1
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] vk = np.ascontiguousarray(vkeys, dtype=np.uint64)
    cdef u64 sd = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef u64 rep = <u64>(int(replica) & 0xFFFFFFFFFFFFFFFF)
    cdef u64 STREAM_CLOCK = 1
    cdef long long me = (1 << 62) if max_events is None else int(max_events)

    cdef cnp.ndarray[cnp.uint64_t, ndim=1] ctr = np.zeros(n, dtype=np.uint64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] heap_t = np.empty(n + 1, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] heap_v = np.empty(n + 1, dtype=np.int64)
    cdef double* ht = <double*>heap_t.data
    cdef long long* hv = <long long*>heap_v.data
    cdef long long hsize = 0

    cdef long long v
    cdef double u
    for v in range(n):
        u = _u01(sd, STREAM_CLOCK, rep, vk[v], 0)
        ctr[v] = 1
        _heap_push(ht, hv, &hsize, -log(u), v)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] edges
    cdef long long nb = 0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] integrals
    cdef bint have_edges = batch_edges is not None
    if have_edges:
        edges = np.ascontiguousarray(batch_edges, dtype=np.float64)
        nb = edges.shape[0] - 1
        integrals = np.zeros(nb, dtype=np.float64)
    else:
        edges = np.zeros(0, dtype=np.float64)
        integrals = np.zeros(0, dtype=np.float64)
    cdef long long bi = 0, jw
    cdef double lo, hi

    cdef long long empties = 0
    for v in range(n):
        if bl[v] == 0:
            empties += 1

    ev_t, ev_v, ev_s = [], [], []
    cdef double t_now = 0.0, tt, u2, u3
    cdef long long rings = 0, legal = 0, flips = 0, x, s, k, i
    cdef double t_target_empty = -1.0, t_target_legal = -1.0
    cdef int ok, new
    status = "t_max"

    while hsize > 0:
        tt = ht[0]
        x = hv[0]
        _heap_pop(ht, hv, &hsize)
        if tt > t_max:
            # accumulate(t_now, t_max)
            if have_edges and t_max > edges[0]:
                while bi < nb and edges[bi + 1] <= t_now:
                    bi += 1
                jw = bi
                while jw < nb and edges[jw] < t_max:
                    lo = t_now if t_now > edges[jw] else edges[jw]
                    hi = t_max if t_max < edges[jw + 1] else edges[jw + 1]
                    if hi > lo:
                        integrals[jw] += empties * (hi - lo)
                    jw += 1
            t_now = t_max
            break
        if have_edges and tt > edges[0]:
            while bi < nb and edges[bi + 1] <= t_now:
                bi += 1
            jw = bi
            while jw < nb and edges[jw] < tt:
                lo = t_now if t_now > edges[jw] else edges[jw]
                hi = tt if tt < edges[jw + 1] else edges[jw + 1]
                if hi > lo:
                    integrals[jw] += empties * (hi - lo)
                jw += 1
        t_now = tt
        rings += 1
        ok = 0
        for k in range(m):
            ok = 1
            for i in range(rule_ptr[k], rule_ptr[k + 1]):
                s = rule_slots[i]
                if bl[nbr[x, s]] != 0:
                    ok = 0
                    break
            if ok:
                break
        if ok:
            legal += 1
            if x == target and t_target_legal < 0.0:
                t_target_legal = t_now
            u2 = _u01(sd, STREAM_CLOCK, rep, vk[x], ctr[x])
            ctr[x] += 1
            new = 0 if u2 < q else 1
            if log_events:
                ev_t.append(t_now)
                ev_v.append(x)
                ev_s.append(new)
            if new != bl[x]:
                flips += 1
                empties += 1 if new == 0 else -1
                bl[x] = <unsigned char>new
            if new == 0 and x == target and t_target_empty < 0.0:
                t_target_empty = t_now
                if stop_when_target_empty:
                    status = "target"
                    break
        u3 = _u01(sd, STREAM_CLOCK, rep, vk[x], ctr[x])
        ctr[x] += 1
        _heap_push(ht, hv, &hsize, t_now - log(u3), x)
        if rings >= me:
            status = "max_events"
            break

    out = np.asarray(bl[:n], dtype=np.uint8).copy()
    return {
        "bits": out,
        "t_end": t_now,
        "rings": rings,
        "legal_updates": legal,
        "flips": flips,
        "t_target_empty": t_target_empty,
        "t_target_first_legal": t_target_legal,
        "batch_integrals": np.asarray(integrals, dtype=np.float64),
        "events": (np.asarray(ev_t, dtype=np.float64),
                   np.asarray(ev_v, dtype=np.int32),
                   np.asarray(ev_s, dtype=np.uint8)) if log_events else None,
        "status": status,
    }


# ----------------------------------------------------------------- crossings

def crossing_batch(empty_grids, int axis):
    """Which grids have a nearest-neighbor True path joining the two faces
    orthogonal to `axis`. empty_grids has shape (R, n0, n1)."""
    g = np.ascontiguousarray(empty_grids, dtype=bool)
    if g.ndim != 3:
        raise ValueError("expected a (replicas, n0, n1) stack")
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    cdef cnp.ndarray[cnp.uint8_t, ndim=3] gu = g.astype(np.uint8)
    cdef long long R = gu.shape[0], n0 = gu.shape[1], n1 = gu.shape[2]
    out_np = np.zeros(R, dtype=bool)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = out_np.view(np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] seen = np.zeros(n0 * n1, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack = np.empty(n0 * n1, dtype=np.int64)
    cdef long long r, i, j, top, cell, ci, cj, hit
    for r in range(R):
        seen[:] = 0
        top = 0
        hit = 0
        if axis == 0:
            for j in range(n1):
                if gu[r, 0, j]:
                    seen[j] = 1
                    stack[top] = j
                    top += 1
        else:
            for i in range(n0):
                if gu[r, i, 0]:
                    seen[i * n1] = 1
                    stack[top] = i * n1
                    top += 1
        while top > 0:
            top -= 1
            cell = stack[top]
            ci = cell // n1
            cj = cell - ci * n1
            if (axis == 0 and ci == n0 - 1) or (axis == 1 and cj == n1 - 1):
                hit = 1
                break
            if ci > 0 and gu[r, ci - 1, cj] and not seen[cell - n1]:
                seen[cell - n1] = 1
                stack[top] = cell - n1
                top += 1
            if ci < n0 - 1 and gu[r, ci + 1, cj] and not seen[cell + n1]:
                seen[cell + n1] = 1
                stack[top] = cell + n1
                top += 1
            if cj > 0 and gu[r, ci, cj - 1] and not seen[cell - 1]:
                seen[cell - 1] = 1
                stack[top] = cell - 1
                top += 1
            if cj < n1 - 1 and gu[r, ci, cj + 1] and not seen[cell + 1]:
                seen[cell + 1] = 1
                stack[top] = cell + 1
                top += 1
        out[r] = hit
    return out_np
