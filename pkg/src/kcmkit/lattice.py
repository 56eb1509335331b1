"""Finite boxes of Z^d: geometry, site configurations, regions, grid files.

Conventions used everywhere in the package:

* coordinates are 0-based tuples, flat indices are C-order (last axis fastest);
* a configuration stores one byte per site, 1 = occupied, 0 = empty;
* boundary handling is a property of the geometry: a torus wraps, a free box
  either treats the outside as permanently occupied (conservative default)
  or as permanently empty (``outside_empty=True``).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import rng


@dataclass(frozen=True)
class Geometry:
    """A finite axis-aligned box (or torus) in Z^d."""

    dims: tuple[int, ...]
    torus: bool = False
    outside_empty: bool = False

    def __post_init__(self):
        if len(self.dims) == 0:
            raise ValueError("geometry needs at least one dimension")
        if any(int(n) <= 0 for n in self.dims):
            raise ValueError(f"dimensions must be positive, got {self.dims}")
        if self.torus and self.outside_empty:
            raise ValueError("a torus has no outside")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def flat(self, coords: Sequence[int]) -> int:
        """Flat index of a coordinate tuple (must lie inside the box)."""
        idx = 0
        for c, n in zip(coords, self.dims, strict=True):
            c = int(c)
            if not 0 <= c < n:
                raise IndexError(f"coordinate {tuple(coords)} outside {self.dims}")
            idx = idx * n + c
        return idx

    def coords(self, flat: int) -> tuple[int, ...]:
        out = []
        for n in reversed(self.dims):
            out.append(flat % n)
            flat //= n
        return tuple(reversed(out))

    def coord_columns(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays for all sites, in flat order."""
        grids = np.indices(self.dims).reshape(self.d, -1)
        return [grids[a] for a in range(self.d)]

    def vertex_keys(self) -> np.ndarray:
        """Coordinate-hash keys for every site (see rng.vertex_key)."""
        return rng.vertex_keys_np(self.coord_columns())

    def shift_flat(self, flat: int, offset: Sequence[int]) -> int:
        """Flat index of site + offset, or -1 if it leaves a free box."""
        c = list(self.coords(flat))
        for a, u in enumerate(offset):
            c[a] += int(u)
            if self.torus:
                c[a] %= self.dims[a]
            elif not 0 <= c[a] < self.dims[a]:
                return -1
        return self.flat(c)

    def neighbor_table(self, offsets: np.ndarray) -> np.ndarray:
        """(N, S) table of flat indices of site + offset_s.

        Out-of-box targets (free boundary) get the pad index N; callers index
        an (N+1)-long state array whose last slot encodes the outside.
        """
        n = self.n_sites
        cols = self.coord_columns()
        table = np.empty((n, len(offsets)), dtype=np.int64)
        for s, off in enumerate(offsets):
            shifted = []
            ok = np.ones(n, dtype=bool)
            for a in range(self.d):
                c = cols[a] + int(off[a])
                if self.torus:
                    c = c % self.dims[a]
                else:
                    ok &= (c >= 0) & (c < self.dims[a])
                    c = np.clip(c, 0, self.dims[a] - 1)
                shifted.append(c)
            idx = np.ravel_multi_index(shifted, self.dims)
            table[:, s] = np.where(ok, idx, n)
        return table


def neighbors(geom: Geometry, x) -> list[tuple[int, ...]]:
    """The <= 2d distinct l1-neighbors of x (wrapped on a torus, clipped on a
    free box)."""
    flat = _as_flat(geom, x)
    out = []
    for a in range(geom.d):
        for s in (+1, -1):
            off = [0] * geom.d
            off[a] = s
            w = geom.shift_flat(flat, off)
            if w >= 0:
                c = geom.coords(w)
                if c not in out:
                    out.append(c)
    return out


class Configuration:
    """Site configuration on a geometry; bits[i] = 1 occupied, 0 empty."""

    __slots__ = ("geom", "bits")

    def __init__(self, geom: Geometry, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=np.uint8).reshape(-1)
        if bits.size != geom.n_sites:
            raise ValueError(f"expected {geom.n_sites} sites, got {bits.size}")
        if bits.max(initial=0) > 1:
            raise ValueError("bits must be 0 or 1")
        self.geom = geom
        self.bits = bits

    # constructors -----------------------------------------------------------
    @classmethod
    def fully_occupied(cls, geom: Geometry) -> "Configuration":
        return cls(geom, np.ones(geom.n_sites, dtype=np.uint8))

    @classmethod
    def fully_empty(cls, geom: Geometry) -> "Configuration":
        return cls(geom, np.zeros(geom.n_sites, dtype=np.uint8))

    @classmethod
    def from_empty_sites(cls, geom: Geometry, sites: Iterable) -> "Configuration":
        cfg = cls.fully_occupied(geom)
        for v in sites:
            cfg.bits[_as_flat(geom, v)] = 0
        return cfg

    @classmethod
    def random(cls, geom: Geometry, q: float, seed: int,
               replica: int = 0) -> "Configuration":
        """Product measure: each site empty independently with probability q."""
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"q must be in [0,1], got {q}")
        u = rng.uniforms_np(seed, rng.STREAM_CONFIG, replica, geom.vertex_keys())
        return cls(geom, (u >= q).astype(np.uint8))

    # basic ops --------------------------------------------------------------
    def copy(self) -> "Configuration":
        return Configuration(self.geom, self.bits.copy())

    def is_empty(self, v) -> bool:
        return self.bits[_as_flat(self.geom, v)] == 0

    def count_empty(self) -> int:
        return int(self.bits.size - self.bits.sum())

    def empty_sites(self) -> list[tuple[int, ...]]:
        return [self.geom.coords(int(i)) for i in np.flatnonzero(self.bits == 0)]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration)
                and self.geom == other.geom
                and bool(np.array_equal(self.bits, other.bits)))

    def __hash__(self):
        raise TypeError("Configuration is mutable; hash bits.tobytes() instead")


def _as_flat(geom: Geometry, v) -> int:
    if isinstance(v, (int, np.integer)):
        return int(v)
    return geom.flat(v)


# ------------------------------------------------------------------- regions

@dataclass(frozen=True)
class Region:
    """A set of sites of a geometry, kept as sorted flat indices."""

    geom: Geometry
    indices: np.ndarray = field(compare=False)

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.geom.n_sites):
            raise ValueError("region index outside geometry")
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.geom.n_sites, dtype=bool)
        m[self.indices] = True
        return m

    def contains(self, v) -> bool:
        return bool(np.isin(_as_flat(self.geom, v), self.indices))

    def union(self, other: "Region") -> "Region":
        _check_same_geom(self, other)
        return Region(self.geom, np.union1d(self.indices, other.indices))

    def minus(self, other: "Region") -> "Region":
        _check_same_geom(self, other)
        return Region(self.geom, np.setdiff1d(self.indices, other.indices))

    def coords_list(self) -> list[tuple[int, ...]]:
        return [self.geom.coords(int(i)) for i in self.indices]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Region) and self.geom == other.geom
                and bool(np.array_equal(self.indices, other.indices)))


def _check_same_geom(a: Region, b: Region):
    if a.geom != b.geom:
        raise ValueError("regions live on different geometries")


@dataclass(frozen=True)
class Box:
    """Axis-aligned sub-box of a geometry: corner plus extents."""

    corner: tuple[int, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.corner) != len(self.dims):
            raise ValueError("corner and dims must have the same length")
        if any(int(n) <= 0 for n in self.dims):
            raise ValueError("box extents must be positive")
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))

    @property
    def d(self) -> int:
        return len(self.dims)

    def shifted(self, offset: Sequence[int]) -> "Box":
        return Box(tuple(c + int(u) for c, u in zip(self.corner, offset)),
                   self.dims)

    def contains(self, coords: Sequence[int]) -> bool:
        return all(c0 <= c < c0 + n for c, c0, n in
                   zip(coords, self.corner, self.dims, strict=True))


def box_region(geom: Geometry, box: Box) -> Region:
    """All sites of the box (which must lie inside the geometry)."""
    for c0, n, ng in zip(box.corner, box.dims, geom.dims, strict=True):
        if c0 < 0 or c0 + n > ng:
            raise ValueError(f"box {box} does not fit in geometry {geom.dims}")
    axes = [np.arange(c0, c0 + n) for c0, n in zip(box.corner, box.dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.ravel_multi_index([m.reshape(-1) for m in mesh], geom.dims)
    return Region(geom, idx)


def slice_region(geom: Geometry, box: Box, axis: int, j: int) -> Region:
    """j-th hyperplane of the box orthogonal to `axis` (j is box-relative)."""
    if not 0 <= j < box.dims[axis]:
        raise ValueError(f"slice index {j} outside box extent {box.dims[axis]}")
    sub = Box(tuple(c0 + (j if a == axis else 0)
                    for a, c0 in enumerate(box.corner)),
              tuple(1 if a == axis else n for a, n in enumerate(box.dims)))
    return box_region(geom, sub)

def frame_region(geom: Geometry, box: Box, axis: int, j: int) -> Region:
    """Sites of the slice having some other coordinate at the box minimum."""
    sl = slice_region(geom, box, axis, j)
    keep = []
    for i in sl.indices:
        c = geom.coords(int(i))
        if any(c[a] == box.corner[a] for a in range(box.d) if a != axis):
            keep.append(i)
    return Region(geom, np.asarray(keep, dtype=np.int64))


def edge_region(geom: Geometry, box: Box, axis: int) -> Region:
    """The box edge along `axis`: all other coordinates at their minimum."""
    sub = Box(box.corner, tuple(n if a == axis else 1
                                for a, n in enumerate(box.dims)))
    return box_region(geom, sub)


def cross_region(geom: Geometry, box: Box, center: Sequence[int]) -> Region:
    """Union over axes of the full line of the box through `center`."""
    center = tuple(int(c) for c in center)
    if not box.contains(center):
        raise ValueError(f"center {center} outside box {box}")
    out = None
    for a in range(box.d):
        sub = Box(tuple(center[i] if i != a else box.corner[i]
                        for i in range(box.d)),
                  tuple(1 if i != a else box.dims[i] for i in range(box.d)))
        r = box_region(geom, sub)
        out = r if out is None else out.union(r)
    return out


def region(geom: Geometry, kind: str, **kw) -> Region:
    """Dispatch on a region kind name.

    slice(box, axis, j) / frame(box, axis, j) / edge(box, axis) /
    cross(box, center) / box(corner, dims).
    """
    if kind == "slice":
        return slice_region(geom, kw["box"], kw["axis"], kw["j"])
    if kind == "frame":
        return frame_region(geom, kw["box"], kw["axis"], kw["j"])
    if kind == "edge":
        return edge_region(geom, kw["box"], kw["axis"])
    if kind == "cross":
        return cross_region(geom, kw["box"], kw["center"])
    if kind == "box":
        return box_region(geom, Box(kw["corner"], kw["dims"]))
    raise ValueError(f"unknown region kind {kind!r}")


def random_configuration(geom: Geometry, q: float, seed: int,
                         replica: int = 0) -> Configuration:
    """Product-Bernoulli sample: each site empty independently w.p. q."""
    return Configuration.random(geom, q, seed, replica)


# ----------------------------------------------------------------- grid files

def write_grid(cfg: Configuration, fh) -> None:
    """Text grid: header `d n1 .. nd boundary`, then row-major 0/1 lines."""
    geom = cfg.geom
    boundary = ("torus" if geom.torus
                else "free-empty" if geom.outside_empty else "free")
    close = False
    if isinstance(fh, str):
        fh, close = open(fh, "w"), True
    try:
        fh.write(f"{geom.d} {' '.join(map(str, geom.dims))} {boundary}\n")
        last = geom.dims[-1]
        flat = cfg.bits
        for row_start in range(0, flat.size, last):
            fh.write("".join(map(str, flat[row_start:row_start + last])) + "\n")
    finally:
        if close:
            fh.close()


def read_grid(fh) -> Configuration:
    close = False
    if isinstance(fh, str):
        fh, close = open(fh), True
    try:
        header = fh.readline().split()
        if len(header) < 3:
            raise ValueError("grid header must be: d n1 .. nd boundary")
        d = int(header[0])
        if len(header) != d + 2:
            raise ValueError(f"grid header promises d={d} but has "
                             f"{len(header) - 2} extents")
        dims = tuple(int(x) for x in header[1:1 + d])
        boundary = header[1 + d]
        if boundary not in ("torus", "free", "free-empty"):
            raise ValueError(f"unknown boundary token {boundary!r}")
        geom = Geometry(dims, torus=(boundary == "torus"),
                        outside_empty=(boundary == "free-empty"))
        digits = []
        for line in fh:
            line = line.strip()
            if line:
                digits.append(line)
        flat = np.frombuffer("".join(digits).encode(), dtype=np.uint8) - ord("0")
        if flat.size != geom.n_sites:
            raise ValueError(f"grid body has {flat.size} sites, "
                             f"geometry needs {geom.n_sites}")
        if flat.max(initial=0) > 1:
            raise ValueError("grid body must contain only 0/1")
        return Configuration(geom, flat)
    finally:
        if close:
            fh.close()


def grid_to_string(cfg: Configuration) -> str:
    buf = io.StringIO()
    write_grid(cfg, buf)
    return buf.getvalue()


def grid_from_string(text: str) -> Configuration:
    return read_grid(io.StringIO(text))
