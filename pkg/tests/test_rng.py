import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kcmkit.rng import (STREAM_CLOCK, STREAM_CONFIG, hash_key, mix64, uniform,
                        uniforms_np, uniforms_replicas_np, vertex_key,
                        vertex_keys_np)


def test_mix64_known_good():
    # reference outputs of splitmix64 when stepped from seed 0
    assert mix64(0) == 0xE220A8397B1DCDAF
    assert mix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert mix64(2 * 0x9E3779B97F4A7C15 % 2**64) == 0x06C45D188009454F
    assert 0 <= mix64((1 << 64) - 1) < (1 << 64)


def test_uniform_range_and_determinism():
    vals = [uniform(7, STREAM_CONFIG, 0, vertex_key((i,)), 0) for i in range(1000)]
    assert all(0.0 < v < 1.0 for v in vals)
    again = [uniform(7, STREAM_CONFIG, 0, vertex_key((i,)), 0) for i in range(1000)]
    assert vals == again
    assert len(set(vals)) > 990


def test_streams_are_independent():
    vk = vertex_key((3, 4))
    a = uniform(1, STREAM_CONFIG, 0, vk, 0)
    b = uniform(1, STREAM_CLOCK, 0, vk, 0)
    assert a != b


def test_vertex_key_uses_coordinates_not_flat_index():
    # same coordinates must hash identically regardless of grid size
    assert vertex_key((2, 5)) == vertex_key((2, 5))
    assert vertex_key((2, 5)) != vertex_key((5, 2))
    assert vertex_key((1,)) != vertex_key((1, 0))


def test_numpy_scalar_agreement():
    coords = np.array([[0, 1, 2, 3], [5, 5, 5, 5]], dtype=np.int64)
    vks = vertex_keys_np([coords[0], coords[1]])
    for i in range(4):
        assert int(vks[i]) == vertex_key((int(coords[0, i]), int(coords[1, i])))
    us = uniforms_np(99, STREAM_CONFIG, 2, vks, 7)
    for i in range(4):
        assert us[i] == uniform(99, STREAM_CONFIG, 2, int(vks[i]), 7)


def test_replica_matrix_rows_match_single_calls():
    vks = vertex_keys_np([np.arange(6), np.zeros(6, dtype=np.int64)])
    mat = uniforms_replicas_np(5, STREAM_CONFIG, 3, vks, 0)
    assert mat.shape == (3, 6)
    row1 = uniforms_np(5, STREAM_CONFIG, 1, vks, 0)
    assert np.array_equal(mat[1], row1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 5), st.integers(0, 1000))
def test_uniform_in_open_interval(seed, stream, replica):
    u = uniform(seed, stream, replica, vertex_key((replica,)), 0)
    assert 0.0 < u < 1.0
