import numpy as np
import pytest
from conftest import random_cmap, random_masks
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import words_from_masks

from aperture_planner.visibility import (
    WORD_DTYPES,
    CodedVisibilityMap,
    LazyMasks,
    assemble_matrix,
    build_coded_map,
    decode,
    integrate_forward,
    integrate_reciprocal_lowres,
    magnitude,
)


def test_matrix_shape_examples():
    V = assemble_matrix([np.ones((2, 2), dtype=bool)])
    assert V.shape == (4, 1)
    assert V.dense().all()
    with pytest.raises(ValueError):
        assemble_matrix([np.ones((2, 2)), np.ones((3, 3))])


def test_full_size_matrix_stays_virtual():
    lazy = LazyMasks(lambda n: np.zeros((512, 512), dtype=bool), 4225, (512, 512))
    V = assemble_matrix(lazy)
    assert V.shape == (262144, 4225)
    assert V.n_entries > 1e9
    with pytest.raises(MemoryError):
        V.dense()
    assert V.rows([0, 5]).shape == (2, 4225)


def test_forward_integration_examples():
    a = np.array([[1, 0], [0, 0]], dtype=bool)
    b = np.array([[0, 1], [0, 0]], dtype=bool)
    assert np.array_equal(integrate_forward([a, b], [1, 0]).values, a)
    out = integrate_forward([a, b], [1, 1])
    assert np.array_equal(out.values, [[0.5, 0.5], [0, 0]]) and out.Z == 2
    assert np.array_equal(integrate_forward([a, a, a], [1, 1, 1]).values, a)
    with pytest.raises(ValueError):
        integrate_forward([a, b], [0, 0])


def test_single_pixel_selection_is_a_row_of_the_matrix(rng):
    masks = random_masks(rng, 81, 16, 16)
    V = assemble_matrix(list(masks))
    p = np.zeros(256, dtype=bool)
    p[37] = True
    sky = integrate_reciprocal_lowres(V, p)
    assert sky.values.shape == (9, 9)
    assert np.array_equal(sky.values.ravel(), V.dense()[37].astype(float))


def test_reciprocal_integration_unrolled(rng):
    masks = random_masks(rng, 16, 8, 8)
    V = assemble_matrix(list(masks))
    full = integrate_reciprocal_lowres(V, np.ones(64))
    assert np.allclose(full.values.ravel(), masks.reshape(16, -1).mean(axis=1))
    ones = assemble_matrix([np.ones((8, 8), dtype=bool)] * 4)
    assert np.all(integrate_reciprocal_lowres(ones, rng.random(64) < 0.3).values == 1)


def test_coded_map_examples():
    one = build_coded_map([np.ones((3, 3), dtype=bool)])
    assert np.all(one.planes == 1)
    masks = [np.zeros((2, 2), dtype=bool) for _ in range(4)]
    masks[1][0, 0] = masks[3][0, 0] = True
    cmap = build_coded_map(masks, L=8)
    assert cmap.code_at(0, 0) == 10
    assert magnitude(cmap)[0, 0] == 2 and magnitude(cmap)[1, 1] == 0


def test_batch_plane_count():
    masks = [np.zeros((4, 4), dtype=bool)] * 240
    assert build_coded_map(masks, L=24).B == 10
    assert build_coded_map(masks[:21], L=24).B == 1
    assert build_coded_map(masks[:21], L=8).B == 3


def test_twenty_one_points_span_two_million_codes():
    masks = [np.zeros((1, 1), dtype=bool)] * 21
    cmap = build_coded_map(masks)
    assert 2**cmap.K == 2_097_152 and cmap.planes.dtype == np.uint32


def test_decode_examples():
    m = [np.eye(3, dtype=bool), np.ones((3, 3), dtype=bool), np.zeros((3, 3), dtype=bool)]
    cmap = build_coded_map(m)
    assert np.array_equal(decode(cmap, 1).data, m[1])
    zero = build_coded_map([np.zeros((3, 3), dtype=bool)] * 5)
    assert not decode(zero, 4).data.any()
    with pytest.raises(IndexError):
        decode(cmap, 3)


def test_words_match_oracle(rng):
    cmap, masks = random_cmap(rng, 30, 4, 5, L=16)
    oracle = words_from_masks(masks.tolist())
    assert [cmap.code_at(r, c) for r in range(4) for c in range(5)] == oracle


def test_constructor_validation():
    with pytest.raises(ValueError):
        CodedVisibilityMap(np.zeros((1, 2, 2)), K=30, L=24)
    with pytest.raises(ValueError):
        build_coded_map([np.zeros((2, 2))], L=12)


@settings(max_examples=60, deadline=None)
@given(
    K=st.integers(1, 130),
    L=st.sampled_from(sorted(WORD_DTYPES)),
    rows=st.integers(1, 9),
    cols=st.integers(1, 9),
    seed=st.integers(0, 2**32 - 1),
)
def test_decode_roundtrip_and_magnitude(K, L, rows, cols, seed):
    rng = np.random.default_rng(seed)
    cmap, masks = random_cmap(rng, K, rows, cols, L=L)
    assert cmap.B == -(-K // L)
    for k in range(K):
        assert np.array_equal(decode(cmap, k).data, masks[k])
    assert np.array_equal(magnitude(cmap), sum(decode(cmap, k).data.astype(int) for k in range(K)))
    bits = cmap.bits_of(cmap.words())
    assert np.array_equal(bits.T.reshape(K, rows, cols), masks)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_forward_integration_is_a_convex_combination(n, seed):
    rng = np.random.default_rng(seed)
    masks = random_masks(rng, n, 6, 6)
    p = rng.random(n) < 0.5
    p[rng.integers(n)] = True
    out = integrate_forward(list(masks), p).values
    assert np.all((out >= 0) & (out <= 1))
    assert np.allclose(out, masks[p].mean(axis=0))
    assert np.array_equal(out == 1, masks[p].all(axis=0))
