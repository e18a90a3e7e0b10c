import numpy as np
import pytest

from kandiff.imaging import save_png


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_pairs(root, n=2, size=48, gamma=2.5, seed=0):
    """Synthetic paired set: high is a smooth colour field, low = high ** gamma."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    for i in range(n):
        f = r.uniform(1, 3, (3, 2))
        ph = r.uniform(0, 2 * np.pi, (3,))
        high = np.stack([0.5 + 0.5 * np.sin(2 * np.pi * (f[c, 0] * xx + f[c, 1] * yy) + ph[c]) for c in range(3)])
        high = 0.1 + 0.85 * high
        save_png(root / "high" / f"img{i}.png", high)
        save_png(root / "low" / f"img{i}.png", high**gamma)
    return root


@pytest.fixture
def toy_data(tmp_path):
    return write_pairs(tmp_path / "data")
