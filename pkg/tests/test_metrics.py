import math

import numpy as np
import pytest

from foveasplat.metrics import psnr, ssim

from oracles import ssim_reference


def test_psnr_identical_is_inf():
    a = np.random.default_rng(0).uniform(size=(16, 16, 3))
    assert psnr(a, a.copy()) == math.inf


def test_psnr_half_error():
    a = np.zeros((8, 8))
    # MSE 0.25 -> 10 log10(4)
    assert psnr(a, a + 0.5) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_region_ignores_outside():
    a = np.zeros((8, 8, 3))
    b = a.copy()
    b[:, 4:] = 1.0
    mask = np.zeros((8, 8), dtype=bool)
    mask[:, :4] = True
    assert psnr(a, b, region=mask) == math.inf
    assert psnr(a, b, region=~mask) == 0.0


def test_psnr_errors():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 4)), region=np.zeros((4, 4), dtype=bool))
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 4)), region=np.ones((3, 4), dtype=bool))


def test_ssim_identical_is_one():
    a = np.random.default_rng(1).uniform(size=(24, 20, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_negated_structure():
    # zero-mean checkerboard: every 8x8 window has mean 0, so only the
    # structure term matters and it is -1 up to the stabilising constant
    y, x = np.mgrid[0:16, 0:16]
    a = 0.5 * np.where((x + y) % 2, 1.0, -1.0)
    val = ssim(a, -a)
    assert val == pytest.approx((-0.5 + 0.03 ** 2) / (0.5 + 0.03 ** 2), abs=1e-12)
    assert val < -0.99


def test_ssim_matches_window_loop():
    rng = np.random.default_rng(2)
    a = rng.uniform(size=(20, 23, 3))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert abs(ssim(a, b) - ssim_reference(a, b)) < 1e-6


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(ValueError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)))
