import sys
from pathlib import Path

import numpy as np
import pytest

from altdebias import autodiff, datasets

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def finite_checks():
    autodiff.FINITE_CHECKS = True
    yield
    autodiff.FINITE_CHECKS = False


def make_raw_digits(count, seed):
    return datasets.synthesize_glyphs(count, seed)


@pytest.fixture(scope="session")
def small_multi_color():
    """Small multi-color dataset pair shared across tests (glyph-sourced)."""
    raw_train = datasets.synthesize_glyphs(3000, 11)
    raw_test = datasets.synthesize_glyphs(4000, 12)
    config = datasets.DatasetConfig("multi_color", (0.95, 0.9), seed=7,
                                    train_count=3000, test_count=1200)
    return datasets.generate_biased(raw_train, raw_test, config)


def gradcheck(build_loss, values, h=1e-4, tol=1e-3):
    """Central finite differences against the analytic gradient.

    ``build_loss`` maps a float64 ndarray to a scalar Tensor rebuilt from a
    fresh leaf; returns the max elementwise relative error.
    """
    values = np.asarray(values, dtype=np.float64)
    leaf = autodiff.Tensor(values.copy(), requires_grad=True)
    build_loss(leaf).backward()
    analytic = leaf.grad.copy()
    worst = 0.0
    flat = values.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        up = build_loss(autodiff.Tensor(bumped.reshape(values.shape))).item()
        bumped[i] -= 2 * h
        down = build_loss(autodiff.Tensor(bumped.reshape(values.shape))).item()
        fd = (up - down) / (2 * h)
        a = analytic.reshape(-1)[i]
        scale = max(abs(fd), abs(a), 1e-8)
        worst = max(worst, abs(fd - a) / scale)
    return worst
