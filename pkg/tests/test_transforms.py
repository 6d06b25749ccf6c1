"""Sequence augmentation and channel standardization."""
import numpy as np
import pytest
import torch

from seqmasks.errors import InvalidInputError
from seqmasks.transforms import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    augment_pair,
    denormalize_frames,
    eval_pair,
    normalize_frames,
)


class ForcedRng:
    """Feeds fixed decisions into the crop/flip draws."""

    def __init__(self, crop, flip, top=0, left=0):
        self._uniforms = iter([0.0 if crop else 1.0, 0.0 if flip else 1.0])
        self._ints = iter([top, left])

    def random(self):
        return next(self._uniforms)

    def integers(self, low, high):
        return next(self._ints)


def toy_sequence(t=3, h=64, w=32, seed=0):
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 256, size=(t, h, w, 3), dtype=np.uint8)
    masks = (rng.random((t, h, w)) < 0.5).astype(np.uint8)
    return frames, masks


class TestAugmentPair:
    def test_no_crop_no_flip_is_resize_and_block_means(self):
        frames, masks = toy_sequence()
        f, m = augment_pair(frames, masks, ForcedRng(crop=False, flip=False))
        assert f.shape == (3, 3, 256, 128)
        assert m.shape == (3, 16, 8)
        f2, m2 = eval_pair(frames, masks)
        assert torch.equal(f, f2) and torch.equal(m, m2)
        # each mask cell is the mean of its 16x16 block of the resized mask
        big = torch.nn.functional.interpolate(
            torch.from_numpy(masks).float().unsqueeze(1), size=(256, 128),
            mode="bilinear", align_corners=False,
        )
        want = big[0, 0, :16, :16].mean()
        assert m[0, 0, 0].item() == pytest.approx(want.item(), abs=1e-6)

    def test_flip_mirror_identity(self):
        frames, masks = toy_sequence()
        plain, _ = augment_pair(frames, masks, ForcedRng(crop=False, flip=False))
        flipped, _ = augment_pair(frames, masks, ForcedRng(crop=False, flip=True))
        assert torch.equal(flipped, torch.flip(plain, dims=(-1,)))
        for c in range(128):
            assert torch.equal(flipped[..., c], plain[..., 127 - c])

    def test_all_ones_mask_any_crop(self):
        frames, _ = toy_sequence()
        ones = np.ones(frames.shape[:3], dtype=np.uint8)
        for top, left in ((0, 0), (5, 3), (13, 6)):
            _, m = augment_pair(frames, ones, ForcedRng(crop=True, flip=False, top=top, left=left))
            np.testing.assert_allclose(m.numpy(), 1.0, atol=1e-6)

    def test_all_zeros_mask(self):
        frames, _ = toy_sequence()
        zeros = np.zeros(frames.shape[:3], dtype=np.uint8)
        _, m = augment_pair(frames, zeros, ForcedRng(crop=True, flip=True, top=2, left=1))
        assert torch.all(m == 0)

    def test_shared_decision_across_frames(self):
        # identical frames must come out identical whatever the draw did
        frames, masks = toy_sequence(t=1)
        frames = np.repeat(frames, 4, axis=0)
        masks = np.repeat(masks, 4, axis=0)
        rng = np.random.default_rng(123)
        f, m = augment_pair(frames, masks, rng)
        for t in range(1, 4):
            assert torch.equal(f[t], f[0])
            assert torch.equal(m[t], m[0])

    def test_deterministic_given_seed(self):
        frames, masks = toy_sequence()
        a = augment_pair(frames, masks, np.random.default_rng(42))
        b = augment_pair(frames, masks, np.random.default_rng(42))
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])

    def test_crop_window_within_margin(self):
        frames, masks = toy_sequence()
        f, _ = augment_pair(frames, masks, ForcedRng(crop=True, flip=False, top=13, left=6))
        assert f.shape == (3, 3, 256, 128)

    def test_mismatched_inputs(self):
        frames, masks = toy_sequence()
        with pytest.raises(InvalidInputError):
            augment_pair(frames, masks[:, :32], np.random.default_rng(0))


class TestNormalizeFrames:
    def test_mean_pixel_maps_to_zero(self):
        for c, mean_c in enumerate(IMAGENET_MEAN):
            x = torch.zeros(1, 3, 2, 2)
            x[0, c] = mean_c
            out = normalize_frames(x)
            np.testing.assert_allclose(out[0, c].numpy(), 0.0, atol=1e-6)

    def test_zero_pixel(self):
        out = normalize_frames(torch.zeros(1, 3, 2, 2))
        for c in range(3):
            want = -IMAGENET_MEAN[c] / IMAGENET_STD[c]
            np.testing.assert_allclose(out[0, c].numpy(), want, atol=1e-6)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        x = torch.from_numpy(rng.random((2, 3, 8, 8)).astype(np.float32))
        back = denormalize_frames(normalize_frames(x))
        np.testing.assert_allclose(back.numpy(), x.numpy(), atol=1e-6)

    def test_uint8_input(self):
        frames = np.full((2, 4, 4, 3), 255, dtype=np.uint8)
        out = normalize_frames(frames)
        assert out.shape == (2, 3, 4, 4)
        for c in range(3):
            want = (1.0 - IMAGENET_MEAN[c]) / IMAGENET_STD[c]
            np.testing.assert_allclose(out[:, c].numpy(), want, atol=1e-6)
