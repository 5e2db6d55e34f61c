import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from maco.boxes import Box, boxes_mask
from maco.errors import MetricError, ParameterError
from maco.metrics import auc, cnr, miou, pointing_game


# -- CNR ---------------------------------------------------------------------------


def test_cnr_identical_distributions_is_zero():
    score_map = np.full((8, 8), 0.5)  # exactly representable: means match bit for bit
    assert cnr(score_map, Box(2, 2, 3, 3)) == 0.0


def test_cnr_degenerate_variance_guard():
    score_map = np.zeros((8, 8))
    box = Box(2, 2, 3, 3)
    score_map[2:5, 2:5] = 1.0
    value = cnr(score_map, box)
    assert np.isfinite(value) and value > 1e5  # 1/sqrt(eps) scale


def test_cnr_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    for _ in range(25):
        score_map = rng.standard_normal((6, 7))
        box = Box(int(rng.integers(0, 4)), int(rng.integers(0, 3)), 3, 3)
        assert cnr(score_map, box) == pytest.approx(
            oracles.cnr(score_map.tolist(), box), abs=1e-12
        )


def test_cnr_rejects_box_covering_whole_map():
    with pytest.raises(MetricError):
        cnr(np.zeros((4, 4)), Box(0, 0, 4, 4))


def test_cnr_rejects_out_of_bounds_box():
    with pytest.raises(ParameterError):
        cnr(np.zeros((4, 4)), Box(2, 2, 4, 4))


def test_cnr_affine_invariance():
    rng = np.random.default_rng(1)
    score_map = rng.standard_normal((10, 10))
    box = Box(1, 2, 4, 5)
    base = cnr(score_map, box)
    for a, b in [(2.0, 0.0), (0.5, 3.0), (17.0, -4.0)]:
        assert cnr(a * score_map + b, box) == pytest.approx(base, abs=1e-9)


# -- mIoU --------------------------------------------------------------------------


def test_miou_indicator_of_majority_box_is_one():
    # box covers >50% of pixels, so every quantile threshold lands on 1.0
    score_map = np.zeros((8, 8))
    box = Box(0, 0, 8, 5)
    score_map[boxes_mask(score_map.shape, [box])] = 1.0
    assert miou(score_map, [box]) == 1.0


def test_miou_disjoint_indicator_is_zero():
    score_map = np.zeros((8, 8))
    score_map[:, :5] = 1.0  # majority region on the left
    box = Box(6, 0, 2, 8)   # box on the right
    assert miou(score_map, [box]) == 0.0


def test_miou_half_overlap_hand_computed():
    score_map = np.zeros((8, 8))
    score_map[:, :5] = 1.0                 # 40 predicted pixels at every threshold
    box = Box(3, 0, 3, 8)                  # 24 true pixels, 16 shared
    assert miou(score_map, [box]) == pytest.approx(16.0 / 48.0, rel=1e-12)


def test_miou_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        score_map = rng.standard_normal((9, 9))
        boxes = [Box(1, 1, 4, 3), Box(5, 4, 3, 4)]
        assert miou(score_map, boxes) == pytest.approx(
            oracles.miou(score_map.tolist(), boxes), abs=1e-12
        )


def test_miou_invariant_under_monotone_transform():
    rng = np.random.default_rng(3)
    score_map = rng.standard_normal((12, 12))
    boxes = [Box(2, 3, 5, 4)]
    base = miou(score_map, boxes)
    for transform in (np.tanh, lambda m: m**3, lambda m: np.exp(0.5 * m), lambda m: 10 * m - 3):
        assert miou(transform(score_map), boxes) == base


def test_miou_rejects_empty_thresholds_and_boxes():
    with pytest.raises(ParameterError):
        miou(np.zeros((4, 4)), [Box(0, 0, 2, 2)], quantiles=())
    with pytest.raises(ParameterError):
        miou(np.zeros((4, 4)), [])


# -- pointing game -------------------------------------------------------------------


def test_pointing_game_peak_inside():
    score_map = np.zeros((8, 8))
    score_map[3, 4] = 5.0
    assert pointing_game(score_map, [Box(3, 2, 3, 3)]) == 1


def test_pointing_game_peak_outside():
    score_map = np.zeros((8, 8))
    score_map[0, 7] = 5.0
    assert pointing_game(score_map, [Box(0, 2, 3, 3)]) == 0


def test_pointing_game_constant_map_tie_rule():
    score_map = np.ones((8, 8))
    assert pointing_game(score_map, [Box(0, 0, 2, 2)]) == 1  # (0,0) inside
    assert pointing_game(score_map, [Box(3, 3, 3, 3)]) == 0  # (0,0) outside


def test_pointing_game_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    for _ in range(25):
        score_map = rng.standard_normal((7, 7))
        boxes = [Box(int(rng.integers(0, 4)), int(rng.integers(0, 4)), 3, 3)]
        assert pointing_game(score_map, boxes) == oracles.pointing_game(score_map.tolist(), boxes)


# -- AUC -----------------------------------------------------------------------------


def test_auc_perfect_separation():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_all_equal_scores():
    assert auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_auc_six_elements_with_tie():
    scores = [0.1, 0.4, 0.4, 0.6, 0.7, 0.2]
    labels = [0, 1, 0, 1, 1, 0]
    assert auc(scores, labels) == oracles.auc_pair_counting(scores, labels)


def test_auc_rejects_single_class():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(min_value=0, max_value=4), st.integers(min_value=0, max_value=1)),
        min_size=2,
        max_size=20,
    )
)
def test_auc_equals_pair_counting_exhaustively(pairs):
    scores = [p[0] / 4.0 for p in pairs]
    labels = [p[1] for p in pairs]
    assume(0 < sum(labels) < len(labels))
    assert auc(scores, labels) == oracles.auc_pair_counting(scores, labels)
