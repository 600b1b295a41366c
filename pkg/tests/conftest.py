"""Shared fixtures and finite-difference helpers."""

import numpy as np
import pytest

from scwave.waveform import FrameConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_frame():
    """Frame with every feature switched on but only a few hundred symbols."""
    return FrameConfig(k=2, n=256, q=4, n_p=2, n_r=1, n_cp=16, m=4)


def central_diff(f, x, idx, step=1e-5):
    """Central difference of scalar ``f`` w.r.t. ``x.flat[idx]`` (x is modified and restored)."""
    orig = x.flat[idx]
    x.flat[idx] = orig + step
    hi = f()
    x.flat[idx] = orig - step
    lo = f()
    x.flat[idx] = orig
    return (hi - lo) / (2 * step)
