"""Legal single-flip paths: schedules, column moves, block paths, congestion.

Everything here produces or checks a LegalPath: a start configuration plus
an ordered list of single-site flips, each of which must satisfy some
update rule in the configuration right before it. Emptying schedules come
from restricted closures replayed in round order; restores are literal
reversals, which stay legal because no rule reads the flipped site itself,
so a reversed flip sees exactly the witnesses its forward twin saw.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from . import kernels, rng
from .blocks import (CLASS_NEITHER, CLASS_SUPERGOOD, BlockSpec,
                     _seed_mask, classify_block)
from .families import UpdateFamily, make_family, tables_for
from .lattice import (Box, Configuration, Geometry, Region, box_region,
                      cross_region, slice_region)

MODE_EXACT = "exact"
MODE_BOUNDED = "bounded"
_EXACT_CAP = 1 << 20


# ------------------------------------------------------------------ types


@dataclass(eq=False)
class LegalPath:
    """A start configuration plus an ordered list of single-site flips.

    vertices[i] is set to values[i] at step i. Builders guarantee every
    flip changes its site; legality and non-repetition are what
    verify_legal checks.
    """

    start: Configuration
    vertices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.vertices.ndim != 1 or self.vertices.shape != self.values.shape:
            raise ValueError("vertices and values must be equal-length 1d arrays")
        n = self.start.geom.n_sites
        if self.vertices.size and not (
                (self.vertices >= 0) & (self.vertices < n)).all():
            raise ValueError("flip vertex outside geometry")

    @property
    def length(self) -> int:
        return int(self.vertices.size)

    def end(self) -> Configuration:
        bits = self.start.bits.copy()
        for v, val in zip(self.vertices.tolist(), self.values.tolist()):
            if bits[v] == val:
                raise ValueError("malformed path: flip does not change the site")
            bits[v] = val
        return Configuration(self.start.geom, bits)

    def reversed_path(self) -> "LegalPath":
        """The same walk backwards: a decreasing path replays as increasing."""
        return LegalPath(self.end(), self.vertices[::-1].copy(),
                         (1 - self.values[::-1]).astype(np.uint8))

    def loop_erased(self) -> "LegalPath":
        """Splice out revisited configurations, collapsing net-zero cycles."""
        bits = self.start.bits.copy()
        trail = [bits.tobytes()]
        seen = {trail[0]: 0}
        kept: list[tuple[int, int]] = []
        for v, val in zip(self.vertices.tolist(), self.values.tolist()):
            bits[v] = val
            key = bits.tobytes()
            if key in seen:
                cut = seen[key]
                for old in trail[cut + 1:]:
                    del seen[old]
                del trail[cut + 1:]
                kept = kept[:cut]
            else:
                kept.append((v, val))
                trail.append(key)
                seen[key] = len(kept)
        return LegalPath(self.start,
                         np.array([v for v, _ in kept], dtype=np.int64),
                         np.array([x for _, x in kept], dtype=np.uint8))


@dataclass(frozen=True)
class VerifyResult:
    """Outcome of a legality replay; falsy iff some flip failed."""

    ok: bool
    index: int | None = None
    vertex: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class CongestionReport:
    """Largest relative load over visited configurations, plus path stats."""

    rho: float
    n_max: int
    enumeration_mode: str


# ------------------------------------------------------------ verification


def _rule_matrix(t):
    # one row of neighbor-slot indices per rule, when all sizes agree
    sizes = np.diff(t.rule_ptr)
    if sizes.size == 0 or sizes.min() == 0 or sizes.min() != sizes.max():
        return None
    return t.rule_slots.reshape(sizes.size, int(sizes[0]))


def _rule_slot_lists(t):
    m = t.rule_ptr.size - 1
    return [t.rule_slots[t.rule_ptr[r]:t.rule_ptr[r + 1]] for r in range(m)]


def verify_legal(path: LegalPath, fam: UpdateFamily) -> VerifyResult:
    """Replay a path, checking every flip's constraint in the prior state.

    A flip fails when it does not change the site, when no update rule has
    all its neighbors empty right before the flip, or when the resulting
    configuration was already visited. O(length * m * rule size).
    """
    geom = path.start.geom
    t = tables_for(geom, fam)
    n = geom.n_sites
    ext = np.empty(n + 1, dtype=np.uint8)
    ext[:n] = path.start.bits
    ext[n] = 0 if t.pad_empty else 1
    mat = _rule_matrix(t)
    slot_lists = None if mat is not None else _rule_slot_lists(t)
    seen = {ext[:n].tobytes()}
    for i, (v, val) in enumerate(zip(path.vertices.tolist(),
                                     path.values.tolist())):
        if ext[v] == val:
            return VerifyResult(False, i, v, "flip does not change the site")
        row = t.nbr[v]
        if mat is not None:
            legal = bool((ext[row[mat]] == 0).all(axis=1).any())
        else:
            legal = any((ext[row[s]] == 0).all() for s in slot_lists)
        if not legal:
            return VerifyResult(False, i, v, "no update rule satisfied at flip time")
        ext[v] = val
        key = ext[:n].tobytes()
        if key in seen:
            return VerifyResult(False, i, v, "configuration revisited")
        seen.add(key)
    return VerifyResult(True)


# ------------------------------------------------------- schedule plumbing


def _ordered_schedule(bits, geom, fam, flippable, visible=None):
    """Flips of the restricted closure: earliest round first, lex within."""
    t = tables_for(geom, fam)
    out, rounds = kernels.closure(bits, t, flippable=flippable, visible=visible)
    emptied = np.flatnonzero(rounds > 0)
    if emptied.size:
        emptied = emptied[np.lexsort((emptied, rounds[emptied]))]
    return emptied.astype(np.int64), out


class _Recorder:
    """Mutable flip log tracking the working configuration."""

    def __init__(self, cfg: Configuration):
        self.start = cfg.copy()
        self.bits = cfg.bits.copy()
        self.verts: list[int] = []
        self.vals: list[int] = []

    def mark(self) -> int:
        return len(self.verts)

    def flip(self, v: int, val: int) -> None:
        if self.bits[v] == val:
            raise RuntimeError("schedule bug: flip does not change the site")
        self.bits[v] = val
        self.verts.append(int(v))
        self.vals.append(int(val))

    def empty_sites(self, flips) -> None:
        for v in flips:
            self.flip(int(v), 0)

    def occupy_sites(self, flips) -> None:
        for v in flips:
            self.flip(int(v), 1)

    def reverse_tail(self, mark: int, skip=frozenset()) -> None:
        """Undo flips [mark:] in reverse order, leaving `skip` sites alone."""
        top = len(self.verts)
        for i in range(top - 1, mark - 1, -1):
            v = self.verts[i]
            if v in skip:
                continue
            self.flip(v, 1 - self.vals[i])

    def path(self) -> LegalPath:
        return LegalPath(self.start, np.array(self.verts, dtype=np.int64),
                         np.array(self.vals, dtype=np.uint8))


def _sweep(rec: _Recorder, fam: UpdateFamily, r: Region, visible=None) -> None:
    flips, _ = _ordered_schedule(rec.bits, rec.start.geom, fam,
                                 r.mask(), visible=visible)
    rec.empty_sites(flips)
    if (rec.bits[r.indices] != 0).any():
        raise RuntimeError("sweep stalled: a block precondition was violated")


# --------------------------------------------------------------- schedules


def empty_region_schedule(cfg: Configuration, fam: UpdateFamily,
                          r: Region) -> LegalPath:
    """Decreasing path that empties an internally spanned region.

    Only the region's own empty sites (plus whatever the geometry's
    boundary convention grants) seed the schedule, and only region sites
    are flipped, in bootstrap-round order with lexicographic ties.
    Raises when the region is not internally spanned.
    """
    mask = r.mask()
    flips, out = _ordered_schedule(cfg.bits, cfg.geom, fam, mask, visible=mask)
    if (out[r.indices] != 0).any():
        raise ValueError("region is not internally spanned")
    rec = _Recorder(cfg)
    rec.empty_sites(flips)
    p = rec.path()
    assert p.length <= r.size
    return p


def chain_schedule(cfg: Configuration, fam: UpdateFamily,
                   regions: Sequence[Region]) -> LegalPath:
    """Walk an empty region down a chain, restoring everything behind it.

    regions[0] must already be empty. Each step first empties the next
    region (flips confined to it), then re-occupies the previous one by
    replaying, backwards, the schedule that would have emptied it from the
    other side; both schedules are attempted constructively, and a failure
    raises naming the offending pair. The result ends at the start with
    regions[-1] emptied, uses at most 2 * sum sizes flips, and never
    differs from the start outside the active pair of regions.
    """
    if len(regions) == 0:
        raise ValueError("chain needs at least one region")
    geom = cfg.geom
    for r in regions:
        if r.geom != geom:
            raise ValueError("chain regions live on a different geometry")
    baseline = cfg.bits
    if (baseline[regions[0].indices] != 0).any():
        raise ValueError("chain region 0 is not empty at the start")
    rec = _Recorder(cfg)
    for j in range(len(regions) - 1):
        cur, nxt = regions[j], regions[j + 1]
        flips, _ = _ordered_schedule(rec.bits, geom, fam, nxt.mask())
        rec.empty_sites(flips)
        if (rec.bits[nxt.indices] != 0).any():
            raise ValueError(
                f"chain hypothesis fails forward between regions {j} and {j + 1}")
        virtual = baseline.copy()
        virtual[nxt.indices] = 0
        back, vout = _ordered_schedule(virtual, geom, fam, cur.mask())
        if (vout[cur.indices] != 0).any():
            raise ValueError(
                f"chain hypothesis fails backward between regions {j + 1} and {j}")
        if not np.array_equal(rec.bits, vout):
            raise RuntimeError("chain schedule bug: restore frames disagree")
        rec.occupy_sites(back[::-1])
    # regions already empty in the baseline make whole E/D rounds net-zero
    # (the walk returns to an earlier state), so splice those cycles out
    p = rec.path().loop_erased()
    expected = baseline.copy()
    expected[regions[-1].indices] = 0
    assert np.array_equal(rec.bits, expected)
    assert p.length <= 2 * sum(r.size for r in regions)
    return p


def _fa_params(fam: UpdateFamily):
    """(d, k) when fam is the full k-of-2d isotropic family, else None."""
    d = fam.d
    sizes = {len(r) for r in fam.rules}
    if len(sizes) != 1:
        return None
    k = sizes.pop()
    if k == 0:
        return None
    units = set()
    for a in range(d):
        plus = [0] * d
        plus[a] = 1
        minus = [0] * d
        minus[a] = -1
        units.add(tuple(plus))
        units.add(tuple(minus))
    rules = set(fam.rules)
    for r in rules:
        if not set(r) <= units:
            return None
    if len(rules) != comb(2 * d, k):
        return None
    return d, k


def slice_schedule(cfg: Configuration, fam: UpdateFamily, i: int, j: int,
                   direction: int, box: Box | None = None) -> LegalPath:
    """Empty the slice next to an empty slice of a k-of-2d model.

    Slice j of `box` along axis i must be empty; the slice at j+direction
    is emptied, flips confined to it. The order replays the reduced
    (k-1)-of-2(d-1) closure of the target slice on its own geometry, so
    every flip has k-1 in-slice witnesses plus the empty neighbor slice.
    Raises when the target slice is not spanned by the reduced model.
    """
    fa = _fa_params(fam)
    if fa is None:
        raise ValueError("slice moves need the k-of-2d family")
    d, k = fa
    if d < 2:
        raise ValueError("slice moves need d >= 2")
    if k == 2 * d:
        raise ValueError("slice moves need k <= 2d - 1")
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    geom = cfg.geom
    if box is None:
        box = Box((0,) * geom.d, geom.dims)
    src = slice_region(geom, box, i, j)
    if (cfg.bits[src.indices] != 0).any():
        raise ValueError("source slice is not empty")
    tj = j + direction
    if not 0 <= tj < box.dims[i]:
        raise ValueError("target slice is outside the box")
    tgt = slice_region(geom, box, i, tj)
    sub_geom = Geometry(tuple(n for a, n in enumerate(box.dims) if a != i))
    sub_fam = (make_family("fa_kf", d - 1, k - 1) if k >= 2
               else make_family("unconstrained", d - 1))
    sub_bits = np.ascontiguousarray(cfg.bits[tgt.indices])
    out, rounds = kernels.closure(sub_bits, tables_for(sub_geom, sub_fam))
    if (out != 0).any():
        raise ValueError("target slice is not spanned by the reduced model")
    emptied = np.flatnonzero(rounds > 0)
    if emptied.size:
        emptied = emptied[np.lexsort((emptied, rounds[emptied]))]
    rec = _Recorder(cfg)
    rec.empty_sites(tgt.indices[emptied])
    p = rec.path()
    assert p.length <= tgt.size
    return p


def cross_schedule(cfg: Configuration, fam: UpdateFamily,
                   x: Sequence[int], y: Sequence[int],
                   box: Box | None = None) -> LegalPath:
    """Slide an empty axis cross to an adjacent center.

    x and y must differ by one unit step, and the cross through x inside
    `box` must be empty. Returns the decreasing path emptying the cross
    through y, flips confined to it, using only the two crosses' sites.
    """
    fa = _fa_params(fam)
    if fa is None or fa[1] != 2:
        raise ValueError("cross moves need the 2-of-2d family")
    geom = cfg.geom
    if box is None:
        box = Box((0,) * geom.d, geom.dims)
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    diff = sorted(abs(yc - xc) for xc, yc in zip(x, y))
    if diff != [0] * (geom.d - 1) + [1]:
        raise ValueError("cross centers must be adjacent")
    if not (box.contains(x) and box.contains(y)):
        raise ValueError("cross centers must lie in the box")
    cx = cross_region(geom, box, x)
    cy = cross_region(geom, box, y)
    if (cfg.bits[cx.indices] != 0).any():
        raise ValueError("cross at x is not empty")
    vis = cx.mask() | cy.mask()
    flips, out = _ordered_schedule(cfg.bits, geom, fam, cy.mask(), visible=vis)
    if (out[cy.indices] != 0).any():
        raise ValueError("cross at y is not reachable from the cross at x")
    rec = _Recorder(cfg)
    rec.empty_sites(flips)
    p = rec.path()
    assert p.length <= 2 * geom.d * max(box.dims)
    return p


def gg_column_moves(cfg: Configuration, variant: str,
                    columns: Sequence[int],
                    rows: tuple | None = None) -> LegalPath:
    """The anisotropic model's two column moves.

    obs1: columns = (c1, c2, c3) with {c1, c2} an adjacent empty pair and
    c3 flanking it on either side; c3 must hold an empty site somewhere in
    the row window and gets emptied. obs2: columns = (c1, c2, c3, c4) with
    {c1, c2} the empty pair and {c3, c4} the adjacent target pair
    completing a run of four; the two sites just above the targets must be
    empty, and both target columns empty top-down. rows = (lo, hi) bounds
    the half-open row window [lo, hi); obs2 reads its seed pair at row hi.
    """
    geom = cfg.geom
    if geom.d != 2:
        raise ValueError("column moves are two-dimensional")
    fam = make_family("gg")
    height = geom.dims[1]
    seeds: list[int] = []
    if variant == "obs1":
        if len(columns) != 3:
            raise ValueError("obs1 takes three columns")
        lo, hi = rows if rows is not None else (0, height)
        c1, c2, c3 = (int(c) for c in columns)
        pair = sorted((c1, c2))
        if pair[1] - pair[0] != 1:
            raise ValueError("context columns must be adjacent")
        if c3 not in (pair[1] + 1, pair[0] - 1):
            raise ValueError("target column must flank the context pair")
        targets = [c3]
    elif variant == "obs2":
        if len(columns) != 4:
            raise ValueError("obs2 takes four columns")
        lo, hi = rows if rows is not None else (0, height - 1)
        c1, c2, c3, c4 = (int(c) for c in columns)
        pair = sorted((c1, c2))
        tpair = sorted((c3, c4))
        if pair[1] - pair[0] != 1 or tpair[1] - tpair[0] != 1:
            raise ValueError("obs2 needs two adjacent column pairs")
        if tpair[0] != pair[1] + 1 and tpair[1] != pair[0] - 1:
            raise ValueError("obs2 pairs must form a run of four columns")
        if not 0 <= hi < height:
            raise ValueError("obs2 seed row is outside the geometry")
        seeds = [geom.flat((c3, hi)), geom.flat((c4, hi))]
        if any(cfg.bits[s] != 0 for s in seeds):
            raise ValueError("the two vertices above the target pair are not empty")
        targets = [c3, c4]
    else:
        raise ValueError("variant must be obs1 or obs2")
    if not 0 <= lo < hi <= height:
        raise ValueError("bad row window")
    for c in pair + targets:
        if not 0 <= c < geom.dims[0]:
            raise ValueError("column outside geometry")

    def seg(c):
        return box_region(geom, Box((c, lo), (1, hi - lo)))

    for c in pair:
        if (cfg.bits[seg(c).indices] != 0).any():
            raise ValueError("context pair is not empty over the window")
    tregions = [seg(c) for c in targets]
    if variant == "obs1" and (cfg.bits[tregions[0].indices] != 0).all():
        raise ValueError("target column has no empty site in the window")
    flippable = np.zeros(geom.n_sites, dtype=bool)
    vis = np.zeros(geom.n_sites, dtype=bool)
    for c in pair:
        vis |= seg(c).mask()
    for tr in tregions:
        flippable |= tr.mask()
        vis |= tr.mask()
    for s in seeds:
        vis[s] = True
    flips, out = _ordered_schedule(cfg.bits, geom, fam, flippable, visible=vis)
    if any((out[tr.indices] != 0).any() for tr in tregions):
        raise ValueError("column move cannot empty its targets")
    rec = _Recorder(cfg)
    rec.empty_sites(flips)
    p = rec.path()
    assert p.length <= sum(tr.size for tr in tregions)
    return p


# ---------------------------------------------------------- block plumbing


def _block_spec(model: str, dims) -> BlockSpec:
    # classification ignores q and A
    return BlockSpec(model, tuple(dims), 0.5, 1.0)


def _classify_box(cfg: Configuration, model: str, bx: Box) -> str:
    idx = box_region(cfg.geom, bx).indices
    sub = Configuration(Geometry(bx.dims), np.ascontiguousarray(cfg.bits[idx]))
    return classify_block(sub, _block_spec(model, bx.dims))


def _seed_flats(geom: Geometry, model: str, bx: Box) -> np.ndarray:
    mask = _seed_mask(_block_spec(model, bx.dims)).ravel()
    return box_region(geom, bx).indices[mask]


def _require_box_inside(geom: Geometry, bx: Box, what: str) -> None:
    for c, n, full in zip(bx.corner, bx.dims, geom.dims):
        if c < 0 or c + n > full:
            raise ValueError(f"{what} block does not fit in the geometry")


def _block_step(x: Box, y: Box):
    """(axis, direction) when y sits exactly one block step from x."""
    deltas = [yc - xc for xc, yc in zip(x.corner, y.corner)]
    hits = [a for a, dlt in enumerate(deltas) if dlt != 0]
    if len(hits) != 1 or abs(deltas[hits[0]]) != x.dims[hits[0]]:
        raise ValueError("blocks are not adjacent")
    return hits[0], (1 if deltas[hits[0]] > 0 else -1)


def _reflect_box(geom: Geometry, bx: Box, axis: int) -> Box:
    corner = list(bx.corner)
    corner[axis] = geom.dims[axis] - bx.corner[axis] - bx.dims[axis]
    return Box(tuple(corner), bx.dims)


def _reflect_vertices(geom: Geometry, verts: np.ndarray, axis: int) -> np.ndarray:
    if verts.size == 0:
        return verts.astype(np.int64)
    coords = np.array(np.unravel_index(verts, geom.dims))
    coords[axis] = geom.dims[axis] - 1 - coords[axis]
    return np.ravel_multi_index(tuple(coords), geom.dims).astype(np.int64)


def _reflected(builder, cfg: Configuration, x: Box, y: Box,
               axis: int) -> LegalPath:
    geom = cfg.geom
    arr = cfg.bits.reshape(geom.dims)
    rbits = np.ascontiguousarray(np.flip(arr, axis=axis)).ravel()
    p = builder(Configuration(geom, rbits),
                _reflect_box(geom, x, axis), _reflect_box(geom, y, axis))
    return LegalPath(cfg.copy(), _reflect_vertices(geom, p.vertices, axis),
                     p.values.copy())


# ------------------------------------------------------------- block paths


def path_B(cfg: Configuration, model: str, x: Box, y: Box) -> LegalPath:
    """Promotion path between adjacent blocks.

    The start must make block x good and its neighbor y (one block step
    away along one axis) super-good. The result is a legal path from the
    start to the start with x's promotion seed set emptied, flips confined
    to the two blocks.
    """
    if model == "fakf":
        raise NotImplementedError("promotion paths are built for fa2 and gg blocks")
    if model not in ("fa2", "gg"):
        raise ValueError(f"unknown block model {model!r}")
    geom = cfg.geom
    if geom.d != 2 or len(x.dims) != 2:
        raise NotImplementedError("promotion paths are two-dimensional")
    if tuple(x.dims) != tuple(y.dims):
        raise ValueError("blocks must have equal dims")
    _require_box_inside(geom, x, "x")
    _require_box_inside(geom, y, "y")
    axis, direction = _block_step(x, y)
    if _classify_box(cfg, model, x) == CLASS_NEITHER:
        raise ValueError("block x is not good")
    if _classify_box(cfg, model, y) != CLASS_SUPERGOOD:
        raise ValueError("block y is not super-good")
    if model == "fa2":
        p = _fa2_promotion(cfg, x, y, axis, direction)
    elif axis == 0:
        p = _gg_promotion_sideways(cfg, x, y)
    elif direction > 0:
        p = _gg_promotion_upward(cfg, x, y)
    else:
        p = _reflected(_gg_promotion_upward, cfg, x, y, axis=1)
    # seed sites already empty at the start shrink the sweep-and-restore
    # walk into retraced states; erase those loops
    p = p.loop_erased()
    expected = cfg.bits.copy()
    expected[_seed_flats(geom, model, x)] = 0
    assert np.array_equal(p.end().bits, expected)
    n1, n2 = x.dims
    assert p.length <= 16 * n1 * n2 * (n1 + n2)
    return p


def _fa2_promotion(cfg: Configuration, x: Box, y: Box,
                   axis: int, direction: int) -> LegalPath:
    geom = cfg.geom
    fam = make_family("fa_kf", 2, 2)
    n = x.dims[axis]
    rec = _Recorder(cfg)
    if direction < 0:
        # y's empty seed edges face away from x: march its emptiness over
        for t in range(1, n):
            _sweep(rec, fam, slice_region(geom, y, axis, t))
        order = range(n)
    else:
        order = range(n - 1, -1, -1)
    for t in order:
        _sweep(rec, fam, slice_region(geom, x, axis, t))
    skip = frozenset(int(v) for v in _seed_flats(geom, "fa2", x))
    rec.reverse_tail(0, skip=skip)
    p = rec.path()
    assert p.length <= (4 if direction < 0 else 2) * int(np.prod(x.dims))
    return p


def _gg_promotion_sideways(cfg: Configuration, x: Box, y: Box) -> LegalPath:
    geom = cfg.geom
    n2 = x.dims[1]
    o1 = x.corner[1]
    xs0, ys0 = x.corner[0], y.corner[0]
    step = 1 if xs0 > ys0 else -1
    starts = list(range(ys0, xs0, step)) + [xs0]
    regions = [box_region(geom, Box((c, o1), (2, n2))) for c in starts]
    return chain_schedule(cfg, make_family("gg"), regions)


def _gg_promotion_upward(cfg: Configuration, x: Box, y: Box) -> LegalPath:
    geom = cfg.geom
    fam = make_family("gg")
    n1, n2 = x.dims
    o0, o1 = x.corner
    top = y.corner[1] + n2
    rec = _Recorder(cfg)
    for i in range(1, n2 + 1):
        r = o1 + n2 - i
        row = cfg.bits[[geom.flat((o0 + c, r)) for c in range(n1)]]
        a = next((c for c in range(n1 - 1)
                  if row[c] == 0 and row[c + 1] == 0), None)
        if a is None:
            raise RuntimeError("good block lost its adjacent empty pair")
        regions = [box_region(geom, Box((o0 + c, r + 1), (2, top - r - 1)))
                   for c in range(a + 1)]
        regions += [box_region(geom, Box((o0 + c, r), (2, top - r)))
                    for c in range(a, -1, -1)]
        stage = chain_schedule(Configuration(geom, rec.bits.copy()), fam, regions)
        for v, val in zip(stage.vertices.tolist(), stage.values.tolist()):
            rec.flip(v, val)
    return rec.path()


def path_A(cfg: Configuration, model: str, x: Box,
           z: Sequence[int]) -> LegalPath:
    """Flip one site of a block sitting between two super-good neighbors.

    The blocks one step up and one step right of x must be super-good; x
    itself is unconstrained. The path ends at the start with z's value
    flipped and nothing else changed. No flip ever uses z's own state as a
    witness, so the construction is legal for either flip direction.
    """
    if model == "fakf":
        raise NotImplementedError("single-flip paths are built for fa2 and gg blocks")
    if model not in ("fa2", "gg"):
        raise ValueError(f"unknown block model {model!r}")
    geom = cfg.geom
    if geom.d != 2 or len(x.dims) != 2:
        raise NotImplementedError("single-flip paths are two-dimensional")
    n1, n2 = x.dims
    right = Box((x.corner[0] + n1, x.corner[1]), x.dims)
    upper = Box((x.corner[0], x.corner[1] + n2), x.dims)
    for what, bx in (("x", x), ("right neighbor", right),
                     ("upper neighbor", upper)):
        _require_box_inside(geom, bx, what)
    z = tuple(int(c) for c in z)
    if not x.contains(z):
        raise ValueError("target site is not in the block")
    for what, bx in (("right", right), ("upper", upper)):
        if _classify_box(cfg, model, bx) != CLASS_SUPERGOOD:
            raise ValueError(f"{what} neighbor block is not super-good")
    fam = (make_family("fa_kf", 2, 2) if model == "fa2"
           else make_family("gg"))
    zf = geom.flat(z)
    visible = np.ones(geom.n_sites, dtype=bool)
    visible[zf] = False
    rec = _Recorder(cfg)
    o0, o1 = x.corner
    zx, zy = z[0] - o0, z[1] - o1
    if model == "gg":
        # extend the upper block's seed emptiness across its whole width
        for j in range(2, n1):
            col = box_region(geom, Box((o0 + j, upper.corner[1]), (1, n2)))
            _sweep(rec, fam, col, visible=visible)
    for c in range(n1 - 1, zx, -1):
        _sweep(rec, fam, box_region(geom, Box((o0 + c, o1), (1, n2))),
               visible=visible)
    if zy < n2 - 1:
        seg = box_region(geom, Box((o0 + zx, o1 + zy + 1), (1, n2 - 1 - zy)))
        _sweep(rec, fam, seg, visible=visible)
    rec.flip(zf, 1 - int(cfg.bits[zf]))
    rec.reverse_tail(0, skip=frozenset((int(zf),)))
    p = rec.path()
    expected = cfg.bits.copy()
    expected[zf] = 1 - expected[zf]
    assert np.array_equal(rec.bits, expected)
    assert p.length <= 4 * n1 * n2 + 1
    return p


# ----------------------------------------------------------- input samplers


def sample_path_B_instance(model: str, dims, q: float, seed: int,
                           replica: int, axis: int = 0,
                           direction: int = 1):
    """Reproducible eligible start for path_B: returns (cfg, x, y).

    Lays two blocks one step apart on a tight geometry, forces y's
    promotion seed set empty, and redraws the whole layout until x is good
    and y super-good (the conditional product law).
    """
    dims = tuple(int(n) for n in dims)
    if axis not in (0, 1) or direction not in (-1, 1):
        raise ValueError("axis must be 0 or 1 and direction +1 or -1")
    full = list(dims)
    full[axis] *= 2
    geom = Geometry(tuple(full))
    lead = [0, 0]
    lead[axis] = dims[axis]
    if direction > 0:
        x, y = Box((0, 0), dims), Box(tuple(lead), dims)
    else:
        x, y = Box(tuple(lead), dims), Box((0, 0), dims)
    sflats = _seed_flats(geom, model, y)
    vkeys = geom.vertex_keys()
    for attempt in range(1024):
        rep = (int(replica) << 10) | attempt
        u = rng.uniforms_np(seed, rng.STREAM_AUX, rep, vkeys)
        bits = (u >= q).astype(np.uint8)
        bits[sflats] = 0
        cfg = Configuration(geom, bits)
        if (_classify_box(cfg, model, x) != CLASS_NEITHER
                and _classify_box(cfg, model, y) == CLASS_SUPERGOOD):
            return cfg, x, y
    raise RuntimeError("no eligible start found; q may be too extreme")


def sample_path_A_instance(model: str, dims, q: float, seed: int,
                           replica: int):
    """Reproducible eligible start for path_A: returns (cfg, x, z)."""
    dims = tuple(int(n) for n in dims)
    n1, n2 = dims
    geom = Geometry((2 * n1, 2 * n2))
    x = Box((0, 0), dims)
    right = Box((n1, 0), dims)
    upper = Box((0, n2), dims)
    forced = np.concatenate([_seed_flats(geom, model, right),
                             _seed_flats(geom, model, upper)])
    vkeys = geom.vertex_keys()
    zu = float(rng.uniforms_np(seed, rng.STREAM_CLOCK, int(replica),
                               vkeys[:1])[0])
    zi = min(int(zu * n1 * n2), n1 * n2 - 1)
    z = (zi // n2, zi % n2)
    for attempt in range(1024):
        rep = (int(replica) << 10) | attempt
        u = rng.uniforms_np(seed, rng.STREAM_AUX, rep, vkeys)
        bits = (u >= q).astype(np.uint8)
        bits[forced] = 0
        cfg = Configuration(geom, bits)
        if (_classify_box(cfg, model, right) == CLASS_SUPERGOOD
                and _classify_box(cfg, model, upper) == CLASS_SUPERGOOD):
            return cfg, x, z
    raise RuntimeError("no eligible start found; q may be too extreme")


# --------------------------------------------------------------- congestion


def congestion_constant(paths: Sequence[LegalPath], q: float,
                        mode: str = MODE_EXACT,
                        region_sizes: Sequence[int] | None = None
                        ) -> CongestionReport:
    """Congestion of a path family at vacancy density q.

    exact: replay every path and accumulate mu(start)/mu(state) on each
    visited configuration, endpoints included; the constant is the largest
    accumulated load. bounded: skip enumeration and return the product
    bound (2/q)^s, where s is the largest size total of three consecutive
    chain regions (pass region_sizes in chain order).
    """
    paths = list(paths)
    n_max = max((p.length for p in paths), default=0)
    if mode == MODE_BOUNDED:
        if region_sizes is None:
            raise ValueError("bounded mode needs region_sizes")
        return CongestionReport(congestion_bound_triple(region_sizes, q),
                                n_max, MODE_BOUNDED)
    if mode != MODE_EXACT:
        raise ValueError("mode must be exact or bounded")
    if not 0.0 < q < 1.0:
        raise ValueError("exact congestion needs 0 < q < 1")
    if len(paths) > _EXACT_CAP:
        raise ValueError("path family too large for exact enumeration")
    base = (1.0 - q) / q
    loads: dict[bytes, float] = {}
    for p in paths:
        bits = p.start.bits.copy()
        delta = 0
        key = bits.tobytes()
        loads[key] = loads.get(key, 0.0) + 1.0
        for v, val in zip(p.vertices.tolist(), p.values.tolist()):
            bits[v] = val
            delta += 1 if val else -1
            key = bits.tobytes()
            loads[key] = loads.get(key, 0.0) + base ** (-delta)
    rho = max(loads.values(), default=0.0)
    return CongestionReport(float(rho), n_max, MODE_EXACT)


def congestion_constant_oracle(paths: Sequence[LegalPath], q: float) -> float:
    """Independent congestion recomputation for cross-checking.

    Rescans the family per visited configuration and recounts occupancies
    from the raw configuration bytes instead of tracking deltas.
    """
    base = (1.0 - q) / q
    per: list[dict[bytes, float]] = []
    for p in paths:
        bits = p.start.bits.copy()
        s0 = int(bits.sum())
        d: dict[bytes, float] = {}
        key = bits.tobytes()
        d[key] = base ** (s0 - sum(key))
        for v, val in zip(p.vertices.tolist(), p.values.tolist()):
            bits[v] = val
            key = bits.tobytes()
            d[key] = base ** (s0 - sum(key))
        per.append(d)
    keys: set[bytes] = set()
    for d in per:
        keys.update(d)
    return max((sum(d.get(k, 0.0) for d in per) for k in keys), default=0.0)


def congestion_bound_triple(region_sizes: Sequence[int], q: float) -> float:
    """(2/q)^s with s the largest total of three consecutive region sizes."""
    sizes = [int(s) for s in region_sizes]
    if not sizes:
        return 1.0
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0,1]")
    worst = max(sum(sizes[max(0, i - 2):i + 1]) for i in range(len(sizes)))
    return (2.0 / q) ** worst


def poincare_path_bound(rho_a: float, n_a: float, rho_b: float, n_b: float,
                        lambda_phi_value: float, p2: float,
                        block_sites: int, d: int = 2) -> float:
    """Relaxation-time upper bound assembled from measured path statistics."""
    if not 0.0 < p2 <= 1.0:
        raise ValueError("p2 must be in (0,1]")
    lead = (lambda_phi_value / p2 ** 4) ** d
    return lead * max(rho_a * n_a * block_sites ** 2,
                      rho_b * n_b * block_sites)


# ------------------------------------------------------------------ dumps


def write_path_file(path: LegalPath, fh, grid_ref: str = "start") -> None:
    """Dump a path: a start-grid reference, then one flip per line."""
    geom = path.start.geom
    fh.write("# path v1\n")
    fh.write(f"grid {grid_ref}\n")
    for i, (v, val) in enumerate(zip(path.vertices.tolist(),
                                     path.values.tolist())):
        fh.write(f"{i} {geom.coords(int(v))} {int(val)}\n")


def read_path_file(fh, start: Configuration):
    """Parse a flip listing against a known start: (path, grid_ref)."""
    grid_ref = "start"
    verts: list[int] = []
    vals: list[int] = []
    for raw in fh:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("grid "):
            grid_ref = line[5:].strip()
            continue
        head, rest = line.split(maxsplit=1)
        coords_s, val_s = rest.rsplit(maxsplit=1)
        if int(head) != len(verts):
            raise ValueError("flip indices must count up from 0")
        verts.append(start.geom.flat(ast.literal_eval(coords_s)))
        vals.append(int(val_s))
    return LegalPath(start, np.array(verts, dtype=np.int64),
                     np.array(vals, dtype=np.uint8)), grid_ref
