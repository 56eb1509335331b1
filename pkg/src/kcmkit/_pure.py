"""Fallback kernels: numpy-vectorized closure, heapq event loop, crossings.

Functionally identical to the compiled core in kcmkit._core; kernels.py picks
one at import time. Keep the two in lockstep: the test suite asserts equal
outputs (bit-identical trajectories for the event loop) when both exist.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from . import rng
from .families import FamilyTables

IMPL_NAME = "pure"


# ------------------------------------------------------------------- closure

def closure(bits: np.ndarray, t: FamilyTables,
            flippable: np.ndarray | None = None,
            visible: np.ndarray | None = None):
    """Bootstrap closure with synchronous-round labels.

    Returns (out_bits, rounds): rounds[v] = 0 for initially empty sites,
    r >= 1 for sites emptied in sweep r, -1 for sites never emptied. Only
    `flippable` sites may be emptied; only `visible` sites contribute their
    initial emptiness to constraints (sites added by the closure always
    contribute). Offsets leaving a free box read as the geometry dictates.
    """
    n = t.n_sites
    empty0 = bits == 0
    eff = np.empty(n + 1, dtype=bool)
    eff[:n] = empty0 if visible is None else (empty0 & visible)
    eff[n] = bool(t.pad_empty)
    rounds = np.where(empty0, np.int32(0), np.int32(-1))
    can = bits == 1
    if flippable is not None:
        can &= flippable

    m = t.rule_ptr.size - 1
    slot_lists = [t.rule_slots[t.rule_ptr[k]:t.rule_ptr[k + 1]] for k in range(m)]
    idx = np.flatnonzero(can)
    r = 0
    while idx.size:
        r += 1
        rows = t.nbr[idx]
        sat = np.zeros(idx.size, dtype=bool)
        for slots in slot_lists:
            if slots.size == 0:
                sat[:] = True
                break
            sat |= eff[rows[:, slots]].all(axis=1)
        if not sat.any():
            break
        newly = idx[sat]
        rounds[newly] = r
        eff[newly] = True
        idx = idx[~sat]
    out = bits.copy()
    out[rounds >= 1] = 0
    return out, rounds


# ------------------------------------------------------------ KCM event loop

def kcm_run(bits: np.ndarray, t: FamilyTables, vkeys: np.ndarray,
            seed: int, replica: int, q: float, t_max: float,
            target: int = -1, stop_when_target_empty: bool = False,
            batch_edges: np.ndarray | None = None,
            log_events: bool = False, max_events: int = 1 << 62):
    """Continuous-time constrained Glauber dynamics, next-reaction style.

    Every site carries a rate-1 Poisson clock; at a ring the constraint is
    evaluated on the current configuration and, if satisfied, the site is
    resampled to empty with probability q (coin drawn only when legal). All
    randomness is counter-based per site, so trajectories are reproducible
    and implementation-independent.

    Returns a dict with the final bits, counters, first-passage times for
    `target` (-1.0 when not hit), per-window integrals of the empty-site
    count when `batch_edges` is given, and the event log when requested.
    """
    n = t.n_sites
    bl = bits.astype(np.uint8).tolist() + [0 if t.pad_empty else 1]
    nbr_rows = t.nbr.tolist()
    m = t.rule_ptr.size - 1
    slot_lists = [t.rule_slots[t.rule_ptr[k]:t.rule_ptr[k + 1]].tolist()
                  for k in range(m)]
    vk = [int(x) for x in vkeys]
    seed = int(seed)
    replica = int(replica)

    ctr = [0] * n
    heap = []
    for v in range(n):
        u = rng.uniform(seed, rng.STREAM_CLOCK, replica, vk[v], 0)
        ctr[v] = 1
        heap.append((-math.log(u), v))
    heapq.heapify(heap)

    edges = None if batch_edges is None else [float(e) for e in batch_edges]
    nb = 0 if edges is None else len(edges) - 1
    integrals = [0.0] * nb
    bi = 0
    empties = sum(1 for v in range(n) if bl[v] == 0)

    def accumulate(t0: float, t1: float, c: int):
        nonlocal bi
        if edges is None or t1 <= edges[0]:
            return
        while bi < nb and edges[bi + 1] <= t0:
            bi += 1
        j = bi
        while j < nb and edges[j] < t1:
            lo = max(t0, edges[j])
            hi = min(t1, edges[j + 1])
            if hi > lo:
                integrals[j] += c * (hi - lo)
            j += 1

    ev_t, ev_v, ev_s = [], [], []
    t_now = 0.0
    rings = legal = flips = 0
    t_target_empty = -1.0
    t_target_legal = -1.0
    status = "t_max"

    while heap:
        tt, x = heapq.heappop(heap)
        if tt > t_max:
            accumulate(t_now, t_max, empties)
            t_now = t_max
            break
        accumulate(t_now, tt, empties)
        t_now = tt
        rings += 1
        row = nbr_rows[x]
        ok = False
        for slots in slot_lists:
            ok = True
            for s in slots:
                if bl[row[s]] != 0:
                    ok = False
                    break
            if ok:
                break
        if ok:
            legal += 1
            if x == target and t_target_legal < 0.0:
                t_target_legal = t_now
            u2 = rng.uniform(seed, rng.STREAM_CLOCK, replica, vk[x], ctr[x])
            ctr[x] += 1
            new = 0 if u2 < q else 1
            if log_events:
                ev_t.append(t_now)
                ev_v.append(x)
                ev_s.append(new)
            if new != bl[x]:
                flips += 1
                empties += 1 if new == 0 else -1
                bl[x] = new
            if new == 0 and x == target and t_target_empty < 0.0:
                t_target_empty = t_now
                if stop_when_target_empty:
                    status = "target"
                    break
        u3 = rng.uniform(seed, rng.STREAM_CLOCK, replica, vk[x], ctr[x])
        ctr[x] += 1
        heapq.heappush(heap, (t_now - math.log(u3), x))
        if rings >= max_events:
            status = "max_events"
            break

    out = np.asarray(bl[:n], dtype=np.uint8)
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

def crossing_batch(empty_grids: np.ndarray, axis: int) -> np.ndarray:
    """Which grids contain a nearest-neighbor path of True cells joining the
    two faces orthogonal to `axis`. empty_grids has shape (R, n0, n1)."""
    g = np.ascontiguousarray(empty_grids, dtype=bool)
    if g.ndim != 3:
        raise ValueError("expected a (replicas, n0, n1) stack")
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    reach = np.zeros_like(g)
    if axis == 0:
        reach[:, 0, :] = g[:, 0, :]
    else:
        reach[:, :, 0] = g[:, :, 0]
    while True:
        grown = reach.copy()
        grown[:, 1:, :] |= reach[:, :-1, :]
        grown[:, :-1, :] |= reach[:, 1:, :]
        grown[:, :, 1:] |= reach[:, :, :-1]
        grown[:, :, :-1] |= reach[:, :, 1:]
        grown &= g
        if (grown == reach).all():
            break
        reach = grown
    if axis == 0:
        return reach[:, -1, :].any(axis=1)
    return reach[:, :, -1].any(axis=1)
