import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptmask.heatmap import KeypointSet, Visibility
from adaptmask.metrics import (COCO_SIGMAS, MPII_GROUPS, OKS_THRESHOLDS, OksParams, PckParams,
                               UndefinedMetricError, average_precision, oks, pck, pck_correct)
from oracles import ap_brute_force, oks_direct


def kps(coords, vis=None):
    coords = np.asarray(coords, dtype=np.float64)
    if vis is None:
        vis = np.full(len(coords), Visibility.VISIBLE)
    return KeypointSet(coords, vis)


# ------------------------------------------------------------------------ OKS

def test_oks_perfect():
    g = kps(np.random.default_rng(0).uniform(0, 100, (17, 2)))
    assert oks(g, g, OksParams(COCO_SIGMAS, 900.0)) == 1.0


def test_oks_one_sigma_displacement():
    area, sigma = 400.0, 0.1
    d = math.sqrt(area) * sigma
    val = oks(kps([[d, 0.0]]), kps([[0.0, 0.0]]), OksParams([sigma], area))
    assert val == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert val == pytest.approx(0.6065, abs=1e-4)


def test_oks_unlabeled_joint_excluded():
    gt = kps([[0, 0], [10, 10]], [Visibility.NOT_LABELED, Visibility.VISIBLE])
    pred = kps([[1000, 1000], [10, 10]])
    assert oks(pred, gt, OksParams([0.05, 0.05], 100.0)) == 1.0


def test_oks_occluded_joint_counts_by_default_not_in_strict_mode():
    gt = kps([[0, 0], [10, 10]], [Visibility.INVISIBLE, Visibility.VISIBLE])
    pred = kps([[1000, 1000], [10, 10]])
    params = OksParams([0.05, 0.05], 100.0)
    assert oks(pred, gt, params) == pytest.approx(0.5)
    assert oks(pred, gt, params, strict=True) == 1.0


def test_oks_undefined_and_param_errors():
    with pytest.raises(UndefinedMetricError):
        oks(kps([[0, 0]]), kps([[0, 0]], [0]), OksParams([0.05], 10.0))
    with pytest.raises(UndefinedMetricError):
        oks(kps([[0, 0]]), kps([[0, 0]], [1]), OksParams([0.05], 10.0), strict=True)
    with pytest.raises(ValueError):
        OksParams([0.0], 10.0)
    with pytest.raises(ValueError):
        OksParams([0.1], 0.0)


def test_oks_matches_direct_formula():
    rng = np.random.default_rng(1)
    for _ in range(100):
        K = int(rng.integers(1, 18))
        gt = rng.uniform(0, 200, (K, 2))
        pred = gt + rng.normal(0, rng.uniform(0.5, 20), (K, 2))
        vis = rng.choice([0, 1, 2], K)
        vis[rng.integers(K)] = 2
        sig = rng.uniform(0.02, 0.12, K)
        area = rng.uniform(100, 40000)
        for strict in (False, True):
            got = oks(kps(pred), kps(gt, vis), OksParams(sig, area), strict=strict)
            assert abs(got - oks_direct(pred, gt, vis, sig, area, strict)) <= 1e-12


@settings(max_examples=100)
@given(st.floats(-500, 500), st.floats(-500, 500), st.integers(0, 2 ** 31))
def test_oks_translation_invariant(tx, ty, seed):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 100, (5, 2))
    pred = gt + rng.normal(0, 5, (5, 2))
    params = OksParams(np.full(5, 0.07), 2500.0)
    shift = np.array([tx, ty])
    a = oks(kps(pred), kps(gt), params)
    b = oks(kps(pred + shift), kps(gt + shift), params)
    assert abs(a - b) < 1e-9


def test_oks_monotone_in_single_joint_error():
    gt = np.zeros((3, 2))
    params = OksParams([0.05, 0.08, 0.1], 900.0)
    vals = []
    for d in np.linspace(0, 40, 50):
        pred = gt.copy()
        pred[1, 0] = d
        vals.append(oks(kps(pred), kps(gt), params))
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# ------------------------------------------------------------------------- AP

def test_ap_perfect():
    r = average_precision([(0.9, 1.0), (0.2, 1.0), (0.5, 1.0)])
    assert (r.ap, r.ap50, r.ap75, r.ar) == (1.0, 1.0, 1.0, 1.0)


def test_ap_all_at_point_six():
    r = average_precision([(s, 0.6) for s in (0.9, 0.8, 0.3)])
    assert r.ap50 == 1.0 and r.ap75 == 0.0
    assert r.ap == pytest.approx(0.3, abs=1e-12)


def test_ap_single_instance_below_lowest_threshold():
    r = average_precision([(0.7, 0.49)])
    assert r == (0.0, 0.0, 0.0, 0.0)


def test_ap_empty():
    with pytest.raises(UndefinedMetricError):
        average_precision([])


def test_thresholds_are_exact_grid():
    assert OKS_THRESHOLDS.tolist() == [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]


def test_ap_matches_brute_force():
    rng = np.random.default_rng(2)
    for trial in range(50):
        n = int(rng.integers(1, 40))
        scores = rng.random(n)
        if trial % 5 == 0:
            scores = np.round(scores, 1)  # ties
        inst = list(zip(scores.tolist(), rng.random(n).tolist()))
        aps, recalls = ap_brute_force(inst, OKS_THRESHOLDS.tolist())
        r = average_precision(inst)
        assert abs(r.ap - float(np.mean(aps))) <= 1e-9
        assert abs(r.ap50 - aps[0]) <= 1e-9 and abs(r.ap75 - aps[5]) <= 1e-9
        assert abs(r.ar - float(np.mean(recalls))) <= 1e-9


def test_ap_hand_example_with_interpolation():
    # order by score: hit, miss, hit at every threshold up to 0.7
    inst = [(0.9, 0.8), (0.8, 0.1), (0.7, 0.75)]
    r = average_precision(inst, thresholds=[0.5])
    # recall points 0..0.33 -> 1.0, 0.34..0.66 -> 2/3, above -> 0
    expected = (34 * 1.0 + 33 * (2 / 3)) / 101
    assert r.ap == pytest.approx(expected, abs=1e-12)
    assert r.ar == pytest.approx(2 / 3)


# ------------------------------------------------------------------------ PCK

HEAD = ((0.0, 0.0), (6.0, 8.0))  # diagonal 10


def test_pck_perfect_prediction():
    g = kps(np.random.default_rng(3).uniform(0, 50, (16, 2)))
    res = pck([g], [g], PckParams(0.5), head_rects=[HEAD])
    assert all(v == 1.0 for v in res.values())
    assert set(res) == {"head", "shoulder", "elbow", "wrist", "hip", "knee", "ankle", "total"}


def test_pck_exact_threshold_is_incorrect():
    g = kps(np.random.default_rng(4).uniform(0, 50, (16, 2)))
    p = kps(g.coords + [5.0, 0.0])  # 0.5 * 10 exactly
    assert pck([p], [g], PckParams(0.5), head_rects=[HEAD])["total"] == 0.0
    q = kps(g.coords + [4.999999, 0.0])
    assert pck([q], [g], PckParams(0.5), head_rects=[HEAD])["total"] == 1.0


def test_pck_half_displaced():
    g = kps(np.random.default_rng(5).uniform(0, 50, (16, 2)))
    coords = g.coords.copy()
    grouped = sorted(i for idx in MPII_GROUPS.values() for i in idx)
    far = grouped[::2]
    coords[far] += 100.0  # 10 * scale
    res = pck([kps(coords)], [g], PckParams(0.5), head_rects=[HEAD])
    assert res["total"] == 0.5


def test_pck_missing_head_rect():
    g = kps(np.zeros((16, 2)))
    with pytest.raises(ValueError):
        pck([g], [g], PckParams(0.5))


def test_pck_params_validation():
    with pytest.raises(ValueError):
        PckParams(0.0)
    with pytest.raises(ValueError):
        PckParams(0.5, "elbow-length")


def test_pck_total_is_weighted_group_mean():
    rng = np.random.default_rng(6)
    gts, preds, rects = [], [], []
    for _ in range(30):
        c = rng.uniform(0, 60, (16, 2))
        v = rng.choice([0, 1, 2], 16, p=[0.2, 0.2, 0.6])
        gts.append(kps(c, v))
        preds.append(kps(c + rng.normal(0, 4, (16, 2))))
        rects.append(HEAD)
    res = pck(preds, gts, PckParams(0.5), head_rects=rects)
    counts = {g: sum(int(gt.visibility[list(idx)].astype(bool).sum()) for gt in gts)
              for g, idx in MPII_GROUPS.items()}
    weighted = sum(res[g] * counts[g] for g in counts) / sum(counts.values())
    assert res["total"] == pytest.approx(weighted, abs=1e-12)


def test_pck_bbox_diagonal_and_unknown_layout():
    gt = kps([[0, 0], [3, 4]])
    pred = kps([[2.4, 0], [3, 4]])
    res = pck([pred], [gt], PckParams(0.5, "bbox-diagonal"), bboxes=[(0, 0, 3, 4)])
    assert res == {"total": 1.0}
    res = pck([kps([[2.5, 0], [3, 4]])], [gt], PckParams(0.5, "bbox-diagonal"))
    assert res == {"total": 0.5}


def test_pck_correct_masks_unlabeled():
    gt = kps([[0, 0], [1, 1]], [0, 2])
    correct, counted = pck_correct([gt], [gt], PckParams(0.5), head_rects=[HEAD])
    assert counted.tolist() == [[False, True]] and correct.tolist() == [[True, True]]
