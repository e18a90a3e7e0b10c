import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kandiff.diffusion import make_schedule
from kandiff.enhance import enhance_dir, enhance_image, pad_to_multiple, padded_size
from kandiff.imaging import ImageBuffer, load_png, save_png
from kandiff.unet import DenoiserConfig, DenoiserNet


@given(st.integers(1, 500), st.sampled_from([1, 2, 4, 8, 16]))
def test_padded_size_is_smallest_multiple(n, d):
    p = padded_size(n, d)
    assert p % d == 0 and n <= p < n + d


def test_fifty_pads_to_next_multiple_of_four():
    assert padded_size(50, 4) == 52
    assert padded_size(96, 4) == 96


def test_pad_replicates_edges(rng):
    x = rng.uniform(0, 1, (3, 5, 6))
    y, (h, w) = pad_to_multiple(x, 4)
    assert y.shape == (3, 8, 8) and (h, w) == (5, 6)
    np.testing.assert_array_equal(y[:, :5, :6], x)
    np.testing.assert_array_equal(y[:, 7, :6], x[:, 4])


@pytest.fixture(scope="module")
def tiny():
    return DenoiserNet(DenoiserConfig(base_channels=8, seed=1)), make_schedule(5)


def test_enhance_restores_exact_input_size(tiny, rng):
    net, s = tiny
    out = enhance_image(net, s, ImageBuffer(rng.uniform(0, 1, (3, 50, 50))))
    assert out.data.shape == (3, 50, 50)
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_grayscale_input_is_expanded(tiny, rng):
    net, s = tiny
    assert enhance_image(net, s, ImageBuffer(rng.uniform(0, 1, (1, 8, 8)))).data.shape == (3, 8, 8)


def test_directory_enhancement_is_deterministic(tiny, tmp_path, rng):
    net, s = tiny
    for i in range(3):
        save_png(tmp_path / "in" / f"{i}.png", rng.uniform(0, 1, (3, 12, 10)))
    a = enhance_dir(net, s, tmp_path / "in", tmp_path / "a", seed=7)
    b = enhance_dir(net, s, tmp_path / "in", tmp_path / "b", seed=7)
    assert len(a.written) == len(b.written) == 3 and not a.failed
    for pa, pb in zip(a.written, b.written):
        assert pa.read_bytes() == pb.read_bytes()
        assert load_png(pa).data.shape == (3, 12, 10)


def test_bad_file_is_skipped(tiny, tmp_path, rng):
    net, s = tiny
    save_png(tmp_path / "in" / "good.png", rng.uniform(0, 1, (3, 8, 8)))
    (tmp_path / "in" / "bad.png").write_bytes(b"broken")
    summary = enhance_dir(net, s, tmp_path / "in", tmp_path / "out")
    assert [p.name for p in summary.written] == ["good.png"] and "bad.png" in summary.failed


def test_empty_input_directory(tiny, tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        enhance_dir(*tiny, tmp_path / "empty", tmp_path / "out")
