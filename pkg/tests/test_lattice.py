import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kcmkit.lattice import (Box, Configuration, Geometry, Region, box_region,
                            cross_region, edge_region, frame_region,
                            grid_from_string, grid_to_string, neighbors,
                            read_grid, slice_region, write_grid)


# ---------------------------------------------------------------- geometry

def test_geometry_validation():
    with pytest.raises(ValueError):
        Geometry(())
    with pytest.raises(ValueError):
        Geometry((0, 3))
    with pytest.raises(ValueError):
        Geometry((3,), torus=True, outside_empty=True)


def test_flat_coords_roundtrip():
    g = Geometry((3, 4, 5))
    for flat in range(g.n_sites):
        assert g.flat(g.coords(flat)) == flat


def test_neighbors_torus_wrap():
    g = Geometry((4, 4), torus=True)
    assert sorted(neighbors(g, (0, 0))) == sorted([(1, 0), (3, 0), (0, 1), (0, 3)])


def test_neighbors_free_corner():
    g = Geometry((3, 3))
    assert sorted(neighbors(g, (0, 0))) == sorted([(1, 0), (0, 1)])


def test_neighbors_degenerate_wrap_dedup():
    g = Geometry((2,), torus=True)
    assert neighbors(g, (0,)) == [(1,)]


def test_neighbors_symmetric():
    g = Geometry((3, 5), torus=True)
    for x in range(g.n_sites):
        cx = g.coords(x)
        for cy in neighbors(g, cx):
            assert cx in neighbors(g, cy)


# ------------------------------------------------------------------ regions

def test_edge_region_size_and_content():
    g = Geometry((3, 3, 3))
    b = Box((0, 0, 0), (3, 3, 3))
    e = edge_region(g, b, axis=1)
    assert e.size == 3
    assert e.coords_list() == [(0, 0, 0), (0, 1, 0), (0, 2, 0)]


def test_slice_region():
    g = Geometry((3, 3))
    b = Box((0, 0), (3, 3))
    s = slice_region(g, b, axis=1, j=2)
    assert s.size == 3
    assert all(c[1] == 2 for c in s.coords_list())


def test_cross_region_size():
    # |cross| = sum n_i - (d-1)
    g = Geometry((3, 3))
    b = Box((0, 0), (3, 3))
    c = cross_region(g, b, (2, 2))
    assert c.size == 3 + 3 - 1


def test_frame_region():
    g = Geometry((3, 3))
    b = Box((0, 0), (3, 3))
    f = frame_region(g, b, axis=0, j=1)
    # slice x0=1 has 3 sites; the frame keeps those with x1 at the corner
    assert f.coords_list() == [(1, 0)]


def test_region_constructors_stay_inside_box():
    g = Geometry((6, 6))
    b = Box((1, 2), (4, 3))
    whole = box_region(g, b)
    for r in (slice_region(g, b, 0, 2), frame_region(g, b, 0, 2),
              edge_region(g, b, 1), cross_region(g, b, (2, 3))):
        assert np.isin(r.indices, whole.indices).all()
    assert edge_region(g, b, 1).size == b.dims[1]
    assert slice_region(g, b, 0, 2).size == b.dims[1]


def test_region_ops():
    g = Geometry((4,))
    a = Region(g, np.array([0, 1, 2]))
    b = Region(g, np.array([2, 3]))
    assert a.union(b).size == 4
    assert a.minus(b).coords_list() == [(0,), (1,)]
    with pytest.raises(ValueError):
        Region(g, np.array([7]))


# ----------------------------------------------------------- configurations

def test_random_configuration_extremes():
    g = Geometry((5, 5))
    assert Configuration.random(g, 0.0, seed=1).count_empty() == 0
    assert Configuration.random(g, 1.0, seed=1).count_empty() == 25


def test_random_configuration_binomial_concentration():
    g = Geometry((64, 64))
    cfg = Configuration.random(g, 0.5, seed=12345)
    frac = cfg.count_empty() / g.n_sites
    sd = 0.5 / 64.0  # sqrt(pq/N)
    assert abs(frac - 0.5) <= 4 * sd


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), qlo=st.floats(0, 1), qhi=st.floats(0, 1))
def test_coupled_monotonicity(seed, qlo, qhi):
    if qlo > qhi:
        qlo, qhi = qhi, qlo
    g = Geometry((8, 8))
    lo = Configuration.random(g, qlo, seed=seed)
    hi = Configuration.random(g, qhi, seed=seed)
    # empty set at the smaller q is contained in the empty set at the larger
    assert ((lo.bits == 0) <= (hi.bits == 0)).all()


def test_configuration_validation():
    g = Geometry((2, 2))
    with pytest.raises(ValueError):
        Configuration(g, np.array([1, 0, 1]))
    with pytest.raises(ValueError):
        Configuration(g, np.array([1, 0, 2, 0]))


# --------------------------------------------------------------- grid files

def test_grid_roundtrip_bit_exact():
    g = Geometry((3, 5), torus=True)
    cfg = Configuration.random(g, 0.37, seed=9)
    text = grid_to_string(cfg)
    back = grid_from_string(text)
    assert back.geom == cfg.geom
    assert np.array_equal(back.bits, cfg.bits)
    assert grid_to_string(back) == text


def test_grid_roundtrip_all_boundaries():
    for kwargs in ({"torus": True}, {}, {"outside_empty": True}):
        g = Geometry((4, 2), **kwargs)
        cfg = Configuration.random(g, 0.5, seed=3)
        assert grid_from_string(grid_to_string(cfg)) == cfg


def test_grid_rejects_malformed():
    with pytest.raises(ValueError):
        grid_from_string("2 3 torus\n010\n101\n")  # header says d=2, one extent
    with pytest.raises(ValueError):
        grid_from_string("1 3 wrapped\n010\n")
    with pytest.raises(ValueError):
        grid_from_string("1 4 free\n010\n")  # wrong site count
    with pytest.raises(ValueError):
        grid_from_string("1 3 free\n012\n")


def test_grid_file_io(tmp_path):
    g = Geometry((2, 2))
    cfg = Configuration.from_empty_sites(g, [(0, 1)])
    path = str(tmp_path / "g.grid")
    write_grid(cfg, path)
    assert read_grid(path) == cfg
