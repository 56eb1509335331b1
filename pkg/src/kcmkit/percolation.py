"""Rectangle-ladder crossings, empty-cluster labeling, and decay-rate fits.

The dyadic ladder doubles one side at a time: level n is a rectangle with
sides 2^n and 2^(n-1), tall when n is odd and wide when n is even, and the
two translates of each level sit one step up or one step right of the
anchor vertex.  A level is crossed when an all-empty nearest-neighbor path
joins its two short sides.  Crossing failures decay exponentially in the
long side deep in the supercritical phase; the fitted rate feeds the
weighted series checked by `supercritical_condition_check`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, rng
from .lattice import Box, Configuration, Geometry, box_region
from .stats import ScanEstimate, wilson_ci

__all__ = [
    "RectangleLadder", "find_clusters", "has_hard_crossing",
    "c_infty_surrogate", "CrossingRow", "CrossingScan",
    "estimate_crossing_failure", "fit_decay_rate",
    "supercritical_condition_check",
]


# -------------------------------------------------------------- the ladder

@dataclass(frozen=True)
class RectangleLadder:
    """Dyadic rectangles anchored just above (i=1) or right of (i=2) a vertex.

    Level 1 of the i=1 family is the two-vertex column {anchor+e2,
    anchor+2*e2}; each later level doubles the short side of the previous
    one, so consecutive levels nest.
    """

    n_max: int

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("ladder needs at least one level")

    @staticmethod
    def side(n: int) -> int:
        return 1 << n

    @staticmethod
    def level_dims(n: int) -> tuple[int, int]:
        """(width, height); the long side is vertical when n is odd."""
        long, short = 1 << n, 1 << (n - 1)
        return (short, long) if n % 2 else (long, short)

    @staticmethod
    def crossing_axis(n: int) -> int:
        """Axis along which the hard crossing runs (the long side)."""
        return 1 if n % 2 else 0

    def box(self, n: int, i: int = 1, anchor=(0, 0)) -> Box:
        if not 1 <= n <= self.n_max:
            raise ValueError("level outside the ladder")
        if i == 1:
            corner = (anchor[0], anchor[1] + 1)
        elif i == 2:
            corner = (anchor[0] + 1, anchor[1])
        else:
            raise ValueError("translate index must be 1 or 2")
        return Box(corner, self.level_dims(n))

    @property
    def rectangles(self) -> tuple[tuple[Box, Box], ...]:
        return tuple((self.box(n, 1), self.box(n, 2))
                     for n in range(1, self.n_max + 1))

    def bounding_dims(self) -> tuple[int, int]:
        """Smallest (width, height) holding every i=1 level, anchor-relative."""
        ws, hs = zip(*(self.level_dims(n) for n in range(1, self.n_max + 1)))
        return max(ws), max(hs)


# ----------------------------------------------------------------- clusters

def find_clusters(cfg: Configuration) -> np.ndarray:
    """Label the empty vertices by connected component.

    Returns an int64 array over all sites: occupied sites get -1, each
    empty site gets the smallest flat index in its component.  Adjacency
    is nearest-neighbor, wrapping on torus geometries.
    """
    geom = cfg.geom
    n = geom.n_sites
    empty = cfg.bits == 0
    parent = np.arange(n, dtype=np.int64)

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    idx = np.arange(n).reshape(geom.dims)
    for axis, dim in enumerate(geom.dims):
        if dim < 2:
            continue
        lo = np.moveaxis(idx, axis, 0)[:-1].ravel()
        hi = np.moveaxis(idx, axis, 0)[1:].ravel()
        if geom.torus:
            lo = np.concatenate([lo, np.moveaxis(idx, axis, 0)[-1].ravel()])
            hi = np.concatenate([hi, np.moveaxis(idx, axis, 0)[0].ravel()])
        both = empty[lo] & empty[hi]
        for a, b in zip(lo[both].tolist(), hi[both].tolist()):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    labels = np.full(n, -1, dtype=np.int64)
    for v in np.flatnonzero(empty).tolist():
        labels[v] = find(v)
    return labels


def has_hard_crossing(cfg: Configuration, rect: Box, axis: int | None = None,
                      ) -> bool:
    """True when an all-empty nearest-neighbor path inside `rect` joins the
    two sides orthogonal to `axis` (default: the long axis, so the path
    connects the two short sides)."""
    geom = cfg.geom
    if len(geom.dims) != 2 or len(rect.dims) != 2:
        raise ValueError("hard crossings are two-dimensional")
    for a in range(2):
        if rect.corner[a] < 0 or rect.corner[a] + rect.dims[a] > geom.dims[a]:
            raise ValueError("rectangle leaves the geometry")
    if axis is None:
        axis = 0 if rect.dims[0] >= rect.dims[1] else 1
    sub = (cfg.bits[box_region(geom, rect).indices] == 0).reshape(rect.dims)
    return bool(kernels.crossing_batch(sub[None, :, :], axis)[0])


def c_infty_surrogate(cfg: Configuration, x, radius: int,
                      oriented: bool = False) -> bool:
    """Finite stand-in for "two neighbors in an unbounded empty cluster".

    True when at least two neighbors of `x` (the +e1/+e2 pair if
    `oriented`, all nearest neighbors otherwise) are empty and connect,
    inside the radius-`radius` window, to the window's hull.  The center
    is masked before labeling, so the value never reads the state of `x`
    itself.  Nonincreasing in `radius`: a farther hull is harder to reach.
    """
    geom = cfg.geom
    d = len(geom.dims)
    if radius < 1:
        raise ValueError("radius must be at least 1")
    x = tuple(int(c) for c in x)
    corner = tuple(c - radius for c in x)
    dims = (2 * radius + 1,) * d
    for a in range(d):
        if corner[a] < 0 or corner[a] + dims[a] > geom.dims[a]:
            raise ValueError("surrogate window leaves the geometry")

    win = Geometry(dims)
    bits = cfg.bits[box_region(geom, Box(corner, dims)).indices].copy()
    center = win.flat((radius,) * d)
    bits[center] = 1
    labels = find_clusters(Configuration(win, bits))

    grid = labels.reshape(dims)
    hull = set()
    for a in range(d):
        face = np.moveaxis(grid, a, 0)
        hull.update(face[0].ravel().tolist())
        hull.update(face[-1].ravel().tolist())
    hull.discard(-1)

    if oriented:
        steps = [tuple(int(a == b) for b in range(d)) for a in range(d)]
    else:
        steps = [tuple(s * int(a == b) for b in range(d))
                 for a in range(d) for s in (1, -1)]
    count = 0
    for s in steps:
        nb = tuple(radius + s[a] for a in range(d))
        if labels[win.flat(nb)] in hull:
            count += 1
    return count >= 2


# ---------------------------------------------------------------- scanning

@dataclass(frozen=True)
class CrossingRow:
    n: int
    side: int
    failures: int
    estimate: ScanEstimate


@dataclass(frozen=True)
class CrossingScan:
    p: float
    replicas: int
    seed: int
    rows: tuple[CrossingRow, ...]
    m_hat: float | None

    def row(self, n: int) -> CrossingRow:
        return self.rows[n - 1]


def fit_decay_rate(sides, failure_rates, replicas: int) -> float | None:
    """Through-origin weighted fit of -log(failure) against the long side.

    Weights are inverse delta-method variances of the log estimate; levels
    with zero or total failure carry no information and are skipped.
    Returns None when nothing is fittable.
    """
    sx2 = sxy = 0.0
    for ell, f in zip(sides, failure_rates):
        if not 0.0 < f < 1.0:
            continue
        w = replicas * f / (1.0 - f)
        sx2 += w * ell * ell
        sxy += w * ell * (-math.log(f))
    if sx2 == 0.0:
        return None
    return sxy / sx2


def estimate_crossing_failure(n_index: int, p: float, replicas: int,
                              seed: int) -> CrossingScan:
    """Monte Carlo crossing-failure rates for ladder levels 1..n_index.

    Sites are occupied with probability `p` independently; all levels of
    one replica share a single uniform field on the bounding rectangle,
    so estimates are coupled across levels.  Levels with zero observed
    failures keep their confidence interval but drop out of the rate fit.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0,1)")
    if replicas < 1:
        raise ValueError("replicas must be positive")
    ladder = RectangleLadder(n_index)
    bound = Geometry(ladder.bounding_dims())
    u = rng.uniforms_replicas_np(seed, rng.STREAM_CONFIG, replicas,
                                 bound.vertex_keys())
    empty = (u < 1.0 - p).reshape(replicas, *bound.dims)

    rows = []
    for n in range(1, n_index + 1):
        w, h = ladder.level_dims(n)
        crossed = kernels.crossing_batch(empty[:, :w, :h],
                                         ladder.crossing_axis(n))
        failures = int(replicas - crossed.sum())
        est = ScanEstimate(failures / replicas,
                           wilson_ci(failures, replicas), replicas, seed,
                           censored=(failures == 0))
        rows.append(CrossingRow(n, ladder.side(n), failures, est))

    m_hat = fit_decay_rate([r.side for r in rows],
                           [r.estimate.value for r in rows], replicas)
    return CrossingScan(p, replicas, seed, tuple(rows), m_hat)


# ------------------------------------------------------------ the condition

def supercritical_condition_check(p: float, m_hat: float,
                                  n_truncate: int = 40) -> float:
    """Value of 3*sum_n 8^n exp(-m*2^(n-1)) + 4*sqrt(p), tail included.

    The series is summed to `n_truncate` and closed with a geometric tail
    bound, valid once the term ratio 8*exp(-m*2^(n-1)) has fallen below
    1/2; ergodicity of the crossing-constrained dynamics needs the
    returned value to be at most 1/4.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0,1)")
    if m_hat <= 0.0:
        raise ValueError("decay rate must be positive")
    if n_truncate < 1:
        raise ValueError("need at least one term")
    total = 4.0 * math.sqrt(p)
    for n in range(1, n_truncate + 1):
        term = 3.0 * 8.0 ** n * math.exp(-m_hat * 2.0 ** (n - 1))
        total += term
    ratio = 8.0 * math.exp(-m_hat * 2.0 ** (n_truncate - 1))
    if ratio >= 0.5:
        raise ValueError("series not yet dominated at this truncation")
    return total + term * ratio / (1.0 - ratio)
