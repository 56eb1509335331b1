"""Bootstrap closures and critical-scan estimators.

The closure of a configuration under an update family empties, repeatedly
and monotonically, every occupied site whose constraint is satisfied, until
nothing changes. The synchronous round at which a site empties is its
infection time. A region is internally spanned when the closure computed
inside it (constraint members outside the region count as occupied) empties
it entirely.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels, rng
from .families import UpdateFamily, tables_for
from .lattice import Configuration, Geometry, Region, _as_flat
from .stats import ScanEstimate, wilson_ci


# ------------------------------------------------------------------ closures

def closure(cfg: Configuration, fam: UpdateFamily) -> Configuration:
    """Fixed point of the bootstrap map (production kernel)."""
    t = tables_for(cfg.geom, fam)
    out, _ = kernels.closure(cfg.bits, t)
    return Configuration(cfg.geom, out)


def closure_with_rounds(cfg: Configuration, fam: UpdateFamily):
    """Closure plus per-site synchronous rounds (0 initial, -1 never)."""
    t = tables_for(cfg.geom, fam)
    out, rounds = kernels.closure(cfg.bits, t)
    return Configuration(cfg.geom, out), rounds


def closure_naive(cfg: Configuration, fam: UpdateFamily):
    """Full-rescan fixed-point oracle, written independently of the kernels.

    Same contract as closure_with_rounds; quadratic and deliberately plain,
    kept as the reference the optimized kernels are tested against.
    """
    geom = cfg.geom
    bits = cfg.bits.copy()
    rounds = np.where(bits == 0, np.int32(0), np.int32(-1))
    rules = [sorted(rule) for rule in fam.rules]
    r = 0
    changed = True
    while changed:
        changed = False
        r += 1
        newly = []
        for v in range(geom.n_sites):
            if bits[v] != 1:
                continue
            for rule in rules:
                ok = True
                for off in rule:
                    w = geom.shift_flat(v, off)
                    if w < 0:
                        if not geom.outside_empty:
                            ok = False
                            break
                    elif bits[w] != 0:
                        ok = False
                        break
                if ok:
                    newly.append(v)
                    break
        for v in newly:
            bits[v] = 0
            rounds[v] = r
            changed = True
    return Configuration(geom, bits), rounds


def infection_time(cfg: Configuration, fam: UpdateFamily, v) -> int | None:
    """Synchronous round at which v empties under the closure; None if never."""
    _, rounds = closure_with_rounds(cfg, fam)
    r = int(rounds[_as_flat(cfg.geom, v)])
    return None if r < 0 else r


def is_internally_spanned(cfg: Configuration, fam: UpdateFamily,
                          region: Region | None = None) -> bool:
    """Does the closure restricted to the region empty it completely?

    Restricted means: only region sites may be emptied and only their initial
    emptiness is visible, so constraint members outside the region (or
    outside the geometry, on a conservative free box) count as occupied.
    With region=None the whole geometry is used.
    """
    t = tables_for(cfg.geom, fam)
    if region is None:
        out, _ = kernels.closure(cfg.bits, t)
        return not out.any()
    mask = region.mask()
    out, _ = kernels.closure(cfg.bits, t, flippable=mask, visible=mask)
    return not out[region.indices].any()


def spans(cfg: Configuration, fam: UpdateFamily) -> bool:
    """Whole-geometry internal spanning (closure empties everything)."""
    return is_internally_spanned(cfg, fam)


# -------------------------------------------------------------- sampling aid

def _coupled_empty_grid(geom: Geometry, seed: int, replica: int) -> np.ndarray:
    """Per-site uniforms for coupled-monotone sampling: empty iff u < q."""
    return rng.uniforms_np(seed, rng.STREAM_CONFIG, replica, geom.vertex_keys())


def sample_configuration(geom: Geometry, q: float, seed: int,
                         replica: int = 0) -> Configuration:
    return Configuration.random(geom, q, seed, replica)


# ------------------------------------------------------------------ scanning

def estimate_span_probability(n: int, fam: UpdateFamily, q: float,
                              replicas: int, seed: int,
                              torus: bool = True) -> ScanEstimate:
    """Monte Carlo P(internally spanned) on an n^d box with a Wilson CI."""
    if replicas <= 0:
        raise ValueError("replicas must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0,1], got {q}")
    geom = Geometry((n,) * fam.d, torus=torus)
    t = tables_for(geom, fam)
    vkeys = geom.vertex_keys()
    hits = 0
    for r in range(replicas):
        u = rng.uniforms_np(seed, rng.STREAM_CONFIG, r, vkeys)
        bits = (u >= q).astype(np.uint8)
        out, _ = kernels.closure(bits, t)
        hits += 0 if out.any() else 1
    return ScanEstimate(hits / replicas, wilson_ci(hits, replicas),
                        replicas, seed)


def spanning_probability_curve(l_values, fam: UpdateFamily, q: float,
                               replicas: int, seed: int, torus: bool = True):
    """Spanning-probability estimates along a grid of box sides L.

    Replicas are coupled across sizes: every site draws its uniform from its
    coordinate tuple, so the boxes share randomness where they overlap.
    Returns a list of (L, ScanEstimate).
    """
    out = []
    for n in l_values:
        out.append((int(n), estimate_span_probability(int(n), fam, q,
                                                      replicas, seed,
                                                      torus=torus)))
    return out


def _replica_threshold(u: np.ndarray, t, lo: float, hi: float,
                       tol: float) -> float:
    """Smallest q (to tol) at which the coupled grid spans, by bisection.

    The empty set {u < q} grows with q, so spanning is monotone in q for a
    fixed replica and the threshold is well defined.
    """
    def spans_at(q: float) -> bool:
        out, _ = kernels.closure((u >= q).astype(np.uint8), t)
        return not out.any()

    if spans_at(lo):
        return lo
    if not spans_at(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if spans_at(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def estimate_qc(n: int, fam: UpdateFamily, tol: float, replicas: int,
                seed: int) -> ScanEstimate:
    """Finite-size critical density: the q at which half the replicas span.

    Bisection on q over a fixed coupled replica set; the result is the sample
    median of the per-replica spanning thresholds, computed on an n^d torus.
    The interval combines the bisection bracket with the median's sampling
    noise (a binomial halfwidth at level 1/2 divided by the local slope of
    the empirical spanning curve).
    """
    if replicas <= 0:
        raise ValueError("replicas must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    geom = Geometry((n,) * fam.d, torus=True)
    t = tables_for(geom, fam)
    vkeys = geom.vertex_keys()
    thresholds = np.empty(replicas)
    for r in range(replicas):
        u = rng.uniforms_np(seed, rng.STREAM_CONFIG, r, vkeys)
        thresholds[r] = _replica_threshold(u, t, 0.0, 1.0, tol)
    thresholds.sort()
    mid = float(np.median(thresholds))
    # median sampling noise via order statistics at 95%
    z = 1.959963984540054
    jlo = max(0, int(math.floor(0.5 * replicas - 0.5 * z * math.sqrt(replicas))))
    jhi = min(replicas - 1,
              int(math.ceil(0.5 * replicas + 0.5 * z * math.sqrt(replicas))))
    ci = (float(thresholds[jlo]) - 0.5 * tol, float(thresholds[jhi]) + 0.5 * tol)
    return ScanEstimate(mid, ci, replicas, seed)


def estimate_lc(q: float, fam: UpdateFamily, n_max: int, replicas: int,
                seed: int, torus: bool = True) -> ScanEstimate:
    """Critical length: smallest n whose spanning-probability estimate is
    >= 1/2 (ties resolved to the first such n).

    Doubling search until the estimate crosses 1/2, then integer bisection.
    Replicas are coupled across sizes (coordinate-keyed uniforms), so the
    empirical curve is evaluated consistently. The CI reports the integer
    bracket endpoints from the search.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0,1], got {q}")

    def phat(n: int) -> float:
        return estimate_span_probability(n, fam, q, replicas, seed,
                                         torus=torus).value

    n = 1
    p = phat(1)
    if p >= 0.5:
        return ScanEstimate(1.0, (1.0, 1.0), replicas, seed)
    lo = 1  # largest size seen below 1/2
    hi = None
    while True:
        n = min(2 * n, n_max)
        p = phat(n)
        if p >= 0.5:
            hi = n
            break
        lo = n
        if n >= n_max:
            # search censored at the cap: report the cap, flagged
            return ScanEstimate(float(n_max), (float(n_max), float(n_max)),
                                replicas, seed, censored=True)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if phat(mid) >= 0.5:
            hi = mid
        else:
            lo = mid
    return ScanEstimate(float(hi), (float(lo + 1), float(hi)), replicas, seed)


# ---------------------------------------------------- closed forms (fa_1f)

def fa1f_span_probability(n: int, d: int, q: float) -> float:
    """P(spanned) for the 1-neighbor family: one empty site suffices."""
    return 1.0 - (1.0 - q) ** (n ** d)


def fa1f_qc(n: int, d: int) -> float:
    """q at which the fa_1f spanning probability hits 1/2 on n^d sites."""
    return 1.0 - 0.5 ** (1.0 / (n ** d))


def fa1f_lc(q: float, d: int) -> int:
    """Smallest n with fa1f_span_probability(n, d, q) >= 1/2."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0,1)")
    sites = math.log(2.0) / -math.log1p(-q)
    n = math.ceil(sites ** (1.0 / d))
    while fa1f_span_probability(n, d, q) < 0.5:
        n += 1
    while n > 1 and fa1f_span_probability(n - 1, d, q) >= 0.5:
        n -= 1
    return n
