"""Parity tests: the compiled core and the pure fallback must agree exactly."""

import numpy as np
import pytest

from kcmkit import _pure
from kcmkit.families import make_family, tables_for
from kcmkit.lattice import Configuration, Geometry

core = pytest.importorskip("kcmkit._core")


def _random_bits(geom, q, seed):
    return Configuration.random(geom, q, seed=seed).bits


FAMS = [
    ("fa_kf(2,2)", make_family("fa_kf", d=2, k=2), Geometry((8, 8), torus=True)),
    ("gg", make_family("gg"), Geometry((9, 7), torus=True)),
    ("east2", make_family("east", d=2), Geometry((6, 6))),
    ("fa1f-free-empty", make_family("fa_kf", d=2, k=1),
     Geometry((5, 5), outside_empty=True)),
    ("unconstrained", make_family("unconstrained", d=2), Geometry((4, 4), torus=True)),
    ("ne", make_family("north_east"), Geometry((6, 6), torus=True)),
]


@pytest.mark.parametrize("label,fam,geom", FAMS, ids=[f[0] for f in FAMS])
def test_closure_parity(label, fam, geom):
    t = tables_for(geom, fam)
    for seed in range(25):
        bits = _random_bits(geom, 0.35, seed)
        b1, r1 = core.closure(bits, t)
        b2, r2 = _pure.closure(bits, t)
        assert np.array_equal(b1, b2)
        assert np.array_equal(r1, r2)


def test_closure_parity_with_masks():
    fam = make_family("fa_kf", d=2, k=2)
    geom = Geometry((8, 8), torus=True)
    t = tables_for(geom, fam)
    rng = np.random.default_rng(0)
    for _ in range(25):
        bits = (rng.random(64) > 0.4).astype(np.uint8)
        flip = rng.random(64) > 0.3
        vis = rng.random(64) > 0.2
        b1, r1 = core.closure(bits, t, flip, vis)
        b2, r2 = _pure.closure(bits, t, flip, vis)
        assert np.array_equal(b1, b2)
        assert np.array_equal(r1, r2)


@pytest.mark.parametrize("label,fam,geom", FAMS[:4], ids=[f[0] for f in FAMS[:4]])
def test_kcm_run_parity_bit_identical(label, fam, geom):
    t = tables_for(geom, fam)
    vkeys = geom.vertex_keys()
    for seed in (1, 7):
        bits = _random_bits(geom, 0.3, seed + 100)
        edges = np.array([0.0, 1.0, 3.0, 7.5])
        a = core.kcm_run(bits, t, vkeys, seed, 0, 0.3, 7.5,
                         target=0, batch_edges=edges, log_events=True)
        b = _pure.kcm_run(bits, t, vkeys, seed, 0, 0.3, 7.5,
                          target=0, batch_edges=edges, log_events=True)
        assert np.array_equal(a["bits"], b["bits"])
        assert a["t_end"] == b["t_end"]
        assert a["rings"] == b["rings"]
        assert a["legal_updates"] == b["legal_updates"]
        assert a["flips"] == b["flips"]
        assert a["t_target_empty"] == b["t_target_empty"]
        assert a["t_target_first_legal"] == b["t_target_first_legal"]
        assert np.array_equal(a["batch_integrals"], b["batch_integrals"])
        for u, v in zip(a["events"], b["events"]):
            assert np.array_equal(u, v)
        assert a["status"] == b["status"]


def test_kcm_run_parity_stop_and_cap():
    fam = make_family("east", d=1)
    geom = Geometry((12,), torus=True)
    t = tables_for(geom, fam)
    vkeys = geom.vertex_keys()
    bits = np.ones(12, dtype=np.uint8)
    bits[3] = 0
    a = core.kcm_run(bits, t, vkeys, 5, 2, 0.4, 1e9, target=7,
                     stop_when_target_empty=True)
    b = _pure.kcm_run(bits, t, vkeys, 5, 2, 0.4, 1e9, target=7,
                      stop_when_target_empty=True)
    assert a["status"] == b["status"] == "target"
    assert a["t_target_empty"] == b["t_target_empty"] > 0
    assert np.array_equal(a["bits"], b["bits"])
    a = core.kcm_run(bits, t, vkeys, 5, 2, 0.4, 1e9, max_events=500)
    b = _pure.kcm_run(bits, t, vkeys, 5, 2, 0.4, 1e9, max_events=500)
    assert a["status"] == b["status"] == "max_events"
    assert a["rings"] == b["rings"] == 500
    assert a["t_end"] == b["t_end"]


def test_crossing_parity():
    rng = np.random.default_rng(3)
    grids = rng.random((60, 9, 13)) < 0.55
    for axis in (0, 1):
        assert np.array_equal(core.crossing_batch(grids, axis),
                              _pure.crossing_batch(grids, axis))


def test_crossing_known_cases():
    g = np.zeros((1, 3, 3), dtype=bool)
    g[0, :, 1] = True
    assert core.crossing_batch(g, 0)[0]
    assert not core.crossing_batch(g, 1)[0]
    assert _pure.crossing_batch(g, 0)[0]
    assert not _pure.crossing_batch(g, 1)[0]
    full = np.ones((1, 2, 2), dtype=bool)
    assert core.crossing_batch(full, 0)[0] and core.crossing_batch(full, 1)[0]
