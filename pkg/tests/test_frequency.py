import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kandiff.frequency import (
    FreqLossConfig,
    fft,
    fft2,
    fft2_array,
    freq_loss,
    ifft,
    ifft2_array,
    spectrum,
    wrap_angle,
)
from kandiff.gradcheck import check_grad
from kandiff.tensor import DimensionError, Tensor
from kandiff.verify import naive_dft2


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_fft_matches_numpy_any_length(n, seed):
    x = np.random.default_rng(seed).standard_normal(n) + 1j * np.random.default_rng(seed + 1).standard_normal(n)
    np.testing.assert_allclose(fft(x), np.fft.fft(x), atol=1e-10)
    np.testing.assert_allclose(ifft(fft(x)), x, atol=1e-12)


def test_fft2_matches_naive_dft_16x16(rng):
    x = rng.standard_normal((16, 16))
    assert np.max(np.abs(fft2_array(x) - naive_dft2(x))) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_parseval_and_roundtrip(h, w, seed):
    x = np.random.default_rng(seed).standard_normal((2, h, w))
    z = fft2_array(x)
    energy = np.sum(x * x)
    assert abs(energy - np.sum(np.abs(z) ** 2) / (h * w)) <= 1e-9 * max(energy, 1.0)
    assert np.max(np.abs(ifft2_array(z).real - x)) < 1e-9


def test_real_input_spectrum_is_hermitian(rng):
    x = rng.standard_normal((8, 6))
    z = fft2_array(x)
    flipped = np.conj(np.roll(np.flip(z, (0, 1)), 1, axis=(0, 1)))
    np.testing.assert_allclose(z, flipped, atol=1e-12)


def test_pad_mode_pads_to_power_of_two(rng):
    x = Tensor(rng.standard_normal((3, 5, 6)))
    re, im = fft2(x, mode="pad")
    assert re.shape == (3, 8, 8)
    padded = np.zeros((3, 8, 8))
    padded[:, :5, :6] = x.data
    np.testing.assert_allclose(re.data + 1j * im.data, np.fft.fft2(padded), atol=1e-12)
    with pytest.raises(ValueError):
        fft2(x, mode="bogus")


def test_amplitude_and_phase_recompose(rng):
    x = rng.standard_normal((8, 8))
    s = spectrum(Tensor(x))
    np.testing.assert_allclose(s.amp.data * np.exp(1j * s.pha.data), np.fft.fft2(x), atol=1e-12)
    assert s.pha.data.min() >= -np.pi and s.pha.data.max() <= np.pi


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.integers(-5, 5))
def test_wrap_angle_range_and_periodicity(d, k):
    a = wrap_angle(Tensor(np.array(d))).data
    b = wrap_angle(Tensor(np.array(d + 2 * np.pi * k))).data
    assert -np.pi < a <= np.pi + 1e-12
    assert abs(np.angle(np.exp(1j * (a - b)))) < 1e-9


def test_fft2_gradient(rng):
    for shape in ((2, 8, 8), (5, 6)):
        x = Tensor(rng.standard_normal(shape), requires_grad=True)
        r = rng.standard_normal(shape)
        assert check_grad(lambda v: fft2(v)[0] * r + fft2(v)[1] * r**2, [x]) < 1e-7


def test_freq_loss_zero_on_identical_and_positive_otherwise(rng):
    x = Tensor(rng.uniform(-1, 1, (3, 16, 16)))
    assert float(freq_loss(x, x).data) == 0.0
    y = Tensor(rng.uniform(-1, 1, (3, 16, 16)))
    assert float(freq_loss(x, y).data) > 0


def test_freq_loss_gradient_matches_fd(rng):
    x = Tensor(rng.uniform(-1, 1, (2, 8, 8)), requires_grad=True)
    y = Tensor(rng.uniform(-1, 1, (2, 8, 8)))
    cfg = FreqLossConfig(0.01, 0.01)
    assert check_grad(lambda v: freq_loss(v, y, cfg), [x]) < 1e-4


def test_freq_loss_weights_scale_terms(rng):
    x, y = Tensor(rng.uniform(-1, 1, (8, 8))), Tensor(rng.uniform(-1, 1, (8, 8)))
    amp = float(freq_loss(x, y, FreqLossConfig(1.0, 0.0)).data)
    pha = float(freq_loss(x, y, FreqLossConfig(0.0, 1.0)).data)
    both = float(freq_loss(x, y, FreqLossConfig(0.3, 0.7)).data)
    assert np.isclose(both, 0.3 * amp + 0.7 * pha)
    sx, sy = spectrum(x), spectrum(y)
    assert np.isclose(amp, np.mean(np.abs(sx.amp.data - sy.amp.data)))


def test_freq_loss_rejects_bad_input():
    with pytest.raises(DimensionError):
        freq_loss(Tensor(np.zeros((4, 4))), Tensor(np.zeros((4, 5))))
    with pytest.raises(ValueError):
        FreqLossConfig(gamma_amp=-1)
