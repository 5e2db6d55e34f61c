import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maco.errors import DimensionError, ParameterError
from maco.patching import (
    downsample,
    partition,
    partition_batch,
    reassemble,
    sample_mask,
    scatter_rows,
    select_patches,
)


def test_partition_counts_64():
    grid = partition(np.zeros((64, 64)), 8)
    assert grid.n_total == 64
    assert grid.patches.shape == (64, 64)


def test_partition_full_scale_grid():
    grid = partition(np.zeros((224, 224)), 16)
    assert grid.n_total == 196


def test_partition_reassemble_round_trip():
    rng = np.random.default_rng(0)
    image = rng.random((32, 32))
    assert np.array_equal(reassemble(partition(image, 8)), image)


def test_partition_rejects_indivisible():
    with pytest.raises(DimensionError):
        partition(np.zeros((30, 30)), 8)
    with pytest.raises(DimensionError):
        partition(np.zeros((32, 16)), 8)


def test_partition_batch_matches_single():
    rng = np.random.default_rng(1)
    images = rng.random((3, 16, 16))
    batched = partition_batch(images, 4)
    for i in range(3):
        assert np.array_equal(batched[i], partition(images[i], 4).patches)


def test_sample_mask_counts():
    plan = sample_mask(64, 0.75, np.random.default_rng(0))
    assert plan.n_sampled == 16 and plan.n_masked == 48
    assert plan.position_map.sum() == 16


def test_sample_mask_full_scale_default_ratio():
    plan = sample_mask(196, 0.75, np.random.default_rng(0))
    assert plan.n_sampled == 49


def test_sample_mask_deterministic_for_fixed_seed():
    a = sample_mask(64, 0.75, np.random.default_rng(42))
    b = sample_mask(64, 0.75, np.random.default_rng(42))
    assert np.array_equal(a.sampled, b.sampled)
    assert np.array_equal(a.masked, b.masked)
    assert np.array_equal(a.position_map, b.position_map)


def test_sample_mask_rejects_degenerate_ratio():
    with pytest.raises(ParameterError):
        sample_mask(64, 1.0, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        sample_mask(4, 0.99, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from([0.25, 0.5, 0.75]))
def test_sample_mask_partition_property(seed, ratio):
    plan = sample_mask(64, ratio, np.random.default_rng(seed))
    together = np.sort(np.concatenate([plan.sampled, plan.masked]))
    assert np.array_equal(together, np.arange(64))
    assert plan.n_sampled + plan.n_masked == 64
    assert plan.position_map.sum() == plan.n_sampled
    assert set(np.nonzero(plan.position_map)[0]) == set(plan.sampled)


def test_sampling_is_uniform_over_many_plans():
    rng = np.random.default_rng(7)
    counts = np.zeros(64)
    n = 10_000
    for _ in range(n):
        counts[sample_mask(64, 0.75, rng).sampled] += 1
    freq = counts / n
    assert np.all(np.abs(freq - 0.25) <= 0.02)


def test_downsample_constant():
    out = downsample(np.full((8, 8), 3.5), 2)
    assert out.shape == (4, 4) and (out == 3.5).all()


def test_downsample_block_mean():
    assert downsample(np.array([[0.0, 2.0], [4.0, 6.0]]), 2).tolist() == [[3.0]]


def test_downsample_identity_at_ratio_one():
    rng = np.random.default_rng(2)
    image = rng.random((6, 6))
    assert np.array_equal(downsample(image, 1), image)


def test_downsample_rejects_indivisible():
    with pytest.raises(DimensionError):
        downsample(np.zeros((9, 9)), 2)


def test_select_all_patches_keeps_order():
    grid = partition(np.arange(64.0).reshape(8, 8), 4)
    plan = sample_mask(4, 0.5, np.random.default_rng(0))
    # plan sampling everything: build one by hand
    from maco.patching import MaskPlan

    full = MaskPlan(
        n_total=4,
        sampled=np.arange(4),
        masked=np.array([], dtype=np.int64),
        position_map=np.ones(4),
    )
    rows, idx = select_patches(grid, full)
    assert np.array_equal(rows, grid.patches)
    assert np.array_equal(idx, np.arange(4))


def test_select_single_patch():
    grid = partition(np.arange(64.0).reshape(8, 8), 4)
    from maco.patching import MaskPlan

    plan = MaskPlan(
        n_total=4,
        sampled=np.array([0]),
        masked=np.array([1, 2, 3]),
        position_map=np.array([1.0, 0.0, 0.0, 0.0]),
    )
    rows, _ = select_patches(grid, plan)
    assert np.array_equal(rows[0], grid.patches[0])


def test_select_scatter_round_trip():
    rng = np.random.default_rng(3)
    grid = partition(rng.random((16, 16)), 4)
    plan = sample_mask(grid.n_total, 0.5, rng)
    rows, idx = select_patches(grid, plan)
    scattered = scatter_rows(rows, idx, grid.n_total)
    assert np.array_equal(scattered[plan.sampled], grid.patches[plan.sampled])
    assert (scattered[plan.masked] == 0).all()


def test_select_rejects_count_mismatch():
    grid = partition(np.zeros((16, 16)), 4)
    plan = sample_mask(64, 0.75, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        select_patches(grid, plan)
