import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptmask.heatmap import (HeatmapStack, KeypointSet, Visibility, decode_maps, decode_peaks,
                               responsiveness, synthesize_targets)


def one_joint(x, y, v=Visibility.VISIBLE):
    return KeypointSet(np.array([[x, y]]), np.array([v]))


def test_peak_at_nearest_cell():
    stack = synthesize_targets(one_joint(128, 128), sigma=2, out_size=(64, 64), stride=4)
    m = stack.maps[0]
    assert m[32, 32] == 1.0
    assert np.unravel_index(np.argmax(m), m.shape) == (32, 32)


def test_not_labeled_joint_gives_zero_map():
    stack = synthesize_targets(one_joint(128, 128, Visibility.NOT_LABELED), 2, (64, 64), 4)
    assert not stack.maps.any()
    assert stack.maps.shape == (1, 64, 64)


def test_gaussian_value_two_cells_off_peak():
    stack = synthesize_targets(one_joint(128, 128), 2, (64, 64), 4)
    expected = math.exp(-(2 ** 2) / (2 * 2 ** 2))
    assert stack.maps[0][32, 34] == pytest.approx(expected, rel=1e-6)
    assert stack.maps[0][34, 32] == pytest.approx(expected, rel=1e-6)
    assert expected == pytest.approx(0.6065, abs=1e-4)


def test_joint_on_last_pixel_snaps_to_edge_cell():
    m = synthesize_targets(one_joint(191, 255), 2, (64, 48), 4).maps[0]
    assert m[63, 47] == 1.0


def test_truncated_beyond_three_sigma():
    m = synthesize_targets(one_joint(128, 128), 2, (64, 64), 4).maps[0]
    ys, xs = np.mgrid[0:64, 0:64]
    far = (xs - 32) ** 2 + (ys - 32) ** 2 > 36
    assert not m[far].any()
    assert m[32, 38] > 0


@pytest.mark.parametrize("sigma,stride,size", [(0, 4, (8, 8)), (-1, 4, (8, 8)),
                                               (2, 0, (8, 8)), (2, 4, (0, 8)), (2, 4, (8, 0))])
def test_parameter_errors(sigma, stride, size):
    with pytest.raises(ValueError):
        synthesize_targets(one_joint(1, 1), sigma, size, stride)


def test_responsiveness_of_zero_stack():
    assert responsiveness(HeatmapStack(np.zeros((5, 8, 8)))).tolist() == [0.0] * 5


def test_responsiveness_of_targets_is_one():
    kps = KeypointSet.all_visible(np.random.default_rng(0).uniform(10, 180, size=(17, 2)))
    stack = synthesize_targets(kps, 2, (64, 48), 4)
    assert responsiveness(stack).tolist() == [1.0] * 17


def test_responsiveness_planted_maxima():
    rng = np.random.default_rng(3)
    maps = rng.uniform(0, 0.1, size=(3, 20, 30))
    planted = [0.2, 0.9, 0.5]
    for j, v in enumerate(planted):
        maps[j, rng.integers(20), rng.integers(30)] = v
    oracle = [max(max(row) for row in maps[j].tolist()) for j in range(3)]
    assert responsiveness(HeatmapStack(maps)).tolist() == oracle == planted


def test_decode_round_trip_single_joint():
    stack = synthesize_targets(one_joint(128, 128), 2, (64, 64), 4)
    dec = decode_peaks(stack, stride=4)
    assert np.abs(dec.coords[0] - [128, 128]).max() <= 0.25 * 4
    assert dec.visibility.tolist() == [Visibility.VISIBLE]


def test_decode_uniform_map_ties_to_origin():
    dec = decode_peaks(HeatmapStack(np.full((1, 10, 10), 0.3)), stride=4)
    assert dec.coords[0].tolist() == [0.0, 0.0]


def test_decode_two_peaks_picks_larger():
    m = np.zeros((1, 64, 64))
    m[0, 10, 10] = 0.9
    m[0, 50, 50] = 0.899
    flat = m.reshape(-1)
    best = max(range(len(flat)), key=lambda i: (flat[i], -i))
    oracle = (best % 64, best // 64)
    dec = decode_peaks(HeatmapStack(m), stride=1)
    assert tuple(dec.coords[0]) == oracle == (10, 10)


def test_decode_quarter_offset_toward_larger_neighbour():
    m = np.zeros((1, 9, 9))
    m[0, 4, 4] = 1.0
    m[0, 4, 5] = 0.5
    m[0, 3, 4] = 0.2
    coords, scores = decode_maps(m, stride=2)
    assert coords[0].tolist() == [(4 + 0.25) * 2, (4 - 0.25) * 2]
    assert scores[0] == 1.0


def test_decode_does_not_assume_unit_range():
    m = np.full((2, 6, 6), -3.0)
    m[0, 2, 3] = 4.5
    m[1, 5, 0] = -0.5
    coords, scores = decode_maps(m, stride=1)
    assert scores.tolist() == [4.5, -0.5]
    assert coords[1].tolist() == [0.0, 5.0]


def test_round_trip_random_keypoints():
    rng = np.random.default_rng(11)
    stride = 4
    for _ in range(100):
        sigma = rng.uniform(1, 4)
        coords = rng.uniform(0, [191, 255], size=(17, 2))
        coords[0] = [191, 255]
        vis = rng.choice([0, 1, 2], size=17)
        kps = KeypointSet(coords, vis)
        dec = decode_peaks(synthesize_targets(kps, sigma, (64, 48), stride), stride)
        err = np.abs(dec.coords - coords).max(axis=1)
        assert np.all(err[vis > 0] <= stride / 2 + 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 191), st.floats(0, 255), st.sampled_from([0, 1, 2])),
                min_size=1, max_size=17),
       st.floats(1, 4))
def test_responsiveness_one_iff_labeled(joints, sigma):
    coords = np.array([(x, y) for x, y, _ in joints])
    vis = np.array([v for _, _, v in joints])
    resp = responsiveness(synthesize_targets(KeypointSet(coords, vis), sigma, (64, 48), 4))
    assert resp.tolist() == [1.0 if v > 0 else 0.0 for v in vis]


@settings(max_examples=30, deadline=None)
@given(st.integers(14, 33), st.integers(14, 33), st.floats(0.5, 4))
def test_gaussian_symmetric_about_peak(cx, cy, sigma):
    m = synthesize_targets(one_joint(cx, cy), sigma, (48, 48), 1).maps[0]
    r = int(math.ceil(3 * sigma)) + 1
    patch = m[cy - r:cy + r + 1, cx - r:cx + r + 1]
    assert np.array_equal(patch, patch[::-1, :])
    assert np.array_equal(patch, patch[:, ::-1])
    assert np.array_equal(patch, patch.T)


def test_keypointset_length_mismatch():
    with pytest.raises(ValueError):
        KeypointSet(np.zeros((3, 2)), np.zeros(2))


def test_stack_indexing():
    stack = HeatmapStack(np.zeros((4, 5, 6)), sample_id="a")
    assert stack.K == 4 and stack.size == (5, 6)
    assert [h.joint_id for h in stack] == [0, 1, 2, 3]
