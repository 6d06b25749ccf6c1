"""Silhouette screening, alignment, and cropping."""
import numpy as np
import pytest

from seqmasks.errors import InvalidInputError
from seqmasks.masks import (
    align_silhouette,
    column_mass_center,
    crop_silhouette,
    foreground_ratio,
    is_effective,
    pool_mask,
)


def loop_ratio(mask):
    """Independent pixel-by-pixel count."""
    ones = 0
    h, w = mask.shape
    for r in range(h):
        for c in range(w):
            ones += int(mask[r, c])
    return ones / (h * w)


def loop_mass_center(grid):
    total, moment = 0.0, 0.0
    h, w = grid.shape
    for r in range(h):
        for c in range(w):
            total += grid[r, c]
            moment += grid[r, c] * c
    return moment / total


class TestForegroundRatio:
    def test_all_ones(self):
        assert foreground_ratio(np.ones((10, 10), dtype=np.uint8)) == 1.0

    def test_all_zeros(self):
        assert foreground_ratio(np.zeros((10, 10), dtype=np.uint8)) == 0.0

    def test_1500_of_10000(self):
        m = np.zeros((100, 100), dtype=np.uint8)
        m.flat[:1500] = 1
        assert foreground_ratio(m) == pytest.approx(loop_ratio(m)) == pytest.approx(0.15)

    def test_random_against_loop(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            m = (rng.random((17, 23)) < 0.4).astype(np.uint8)
            assert foreground_ratio(m) == pytest.approx(loop_ratio(m), abs=1e-12)

    def test_rejects_non_binary(self):
        with pytest.raises(InvalidInputError):
            foreground_ratio(np.full((4, 4), 2))

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            foreground_ratio(np.zeros((0, 5), dtype=np.uint8))


class TestIsEffective:
    def test_boundary_is_effective(self):
        m = np.zeros((100, 100), dtype=np.uint8)
        m.flat[:1500] = 1  # exactly 15%
        assert is_effective(m, 0.15) is True

    def test_just_under(self):
        m = np.zeros((100, 100), dtype=np.uint8)
        m.flat[:1499] = 1
        assert is_effective(m, 0.15) is False

    def test_all_ones_any_threshold(self):
        m = np.ones((6, 9), dtype=np.uint8)
        for thr in (0.01, 0.5, 0.99):
            assert is_effective(m, thr)

    def test_threshold_bounds(self):
        m = np.ones((4, 4), dtype=np.uint8)
        for bad in (0.0, 1.0, 1.1, -0.2):
            with pytest.raises(InvalidInputError):
                is_effective(m, bad)


class TestAlignSilhouette:
    def test_empty_mask_errors(self):
        with pytest.raises(InvalidInputError):
            align_silhouette(np.zeros((32, 32), dtype=np.uint8))

    def test_output_shape_and_range(self):
        rng = np.random.default_rng(0)
        m = (rng.random((50, 40)) < 0.5).astype(np.uint8)
        out = align_silhouette(m)
        assert out.shape == (64, 64)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_mass_center_at_32(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = np.zeros((128, 96), dtype=np.uint8)
            r0, c0 = int(rng.integers(0, 60)), int(rng.integers(0, 40))
            blob = rng.random((int(rng.integers(20, 60)), int(rng.integers(10, 50)))) < 0.7
            m[r0:r0 + blob.shape[0], c0:c0 + blob.shape[1]] = blob
            if not m.any():
                continue
            out = align_silhouette(m)
            assert abs(loop_mass_center(out) - 32.0) <= 0.5 + 1e-9
            # full bounding-box height
            rows = np.flatnonzero(out.any(axis=1))
            assert rows[0] == 0 and rows[-1] == 63

    def test_centered_full_height_idempotent(self):
        m = np.zeros((64, 64), dtype=np.uint8)
        m[:, 22:42] = 1  # full-height bar, width 20
        out = align_silhouette(m)
        assert abs(column_mass_center(out) - 32.0) <= 0.5 + 1e-9
        # rescaled self: still a solid bar of width 20
        assert out.sum() == pytest.approx(64 * 20, rel=0.02)

    def test_wide_blob_cropped(self):
        m = np.zeros((20, 200), dtype=np.uint8)
        m[5:15, :] = 1  # much wider than tall
        out = align_silhouette(m)
        assert out.shape == (64, 64)
        assert abs(column_mass_center(out) - 32.0) <= 0.5 + 1e-9


class TestCropSilhouette:
    def test_all_ones(self):
        out = crop_silhouette(np.ones((64, 64), dtype=np.float32))
        assert out.shape == (64, 44)
        assert (out == 1).all()

    def test_column_shift(self):
        a = np.zeros((64, 64), dtype=np.float32)
        a[:, 10] = 0.7
        out = crop_silhouette(a)
        assert (out[:, 0] == np.float32(0.7)).all()
        assert out[:, 1:].sum() == 0

    def test_slicing_oracle(self):
        rng = np.random.default_rng(11)
        a = rng.random((64, 64)).astype(np.float32)
        out = crop_silhouette(a)
        np.testing.assert_array_equal(out, a[:, 10:54])

    def test_wrong_shape(self):
        with pytest.raises(InvalidInputError):
            crop_silhouette(np.ones((64, 60)))


class TestAlignThenCrop:
    def test_pipeline_contract(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = np.zeros((90, 70), dtype=np.uint8)
            blob = rng.random((40, 25)) < 0.6
            m[10:50, 20:45] = blob
            if not m.any():
                continue
            aligned = align_silhouette(m)
            out = crop_silhouette(aligned)
            assert out.shape == (64, 44)
            assert out.min() >= 0.0 and out.max() <= 1.0
            assert abs(loop_mass_center(aligned) - 32.0) <= 0.5 + 1e-9


class TestPoolMask:
    def test_all_ones_and_zeros(self):
        assert (pool_mask(np.ones((256, 128))) == 1).all()
        assert (pool_mask(np.zeros((256, 128))) == 0).all()

    def test_cells_are_block_means(self):
        rng = np.random.default_rng(2)
        m = rng.random((256, 128)).astype(np.float32)
        out = pool_mask(m)
        for r in range(16):
            for c in range(8):
                block = m[r * 16:(r + 1) * 16, c * 16:(c + 1) * 16]
                assert out[r, c] == pytest.approx(block.mean(), abs=1e-6)
                assert block.min() - 1e-6 <= out[r, c] <= block.max() + 1e-6
