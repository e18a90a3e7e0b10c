import numpy as np
import pytest

from kandiff import functional as F
from kandiff.gradcheck import check_grad
from kandiff.nn import Conv2d, GroupNorm, Linear, Module
from kandiff.tensor import DimensionError, Tensor


def naive_conv(x, k, stride, pad_mode):
    n, cin, h, w = x.shape
    cout, _, kh, _ = k.shape
    p = kh // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="edge" if pad_mode == "replicate" else "constant")
    ho, wo = (h + 2 * p - kh) // stride + 1, (w + 2 * p - kh) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride : i * stride + kh, j * stride : j * stride + kh]
                    out[b, o, i, j] = np.sum(patch * k[o])
    return out


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("mode", ["zeros", "replicate"])
@pytest.mark.parametrize("ksize", [1, 3])
def test_conv2d_matches_loop_oracle(stride, mode, ksize, rng):
    x = rng.standard_normal((2, 3, 7, 6))
    k = rng.standard_normal((4, 3, ksize, ksize))
    out = F.conv2d(Tensor(x), Tensor(k), stride=stride, padding_mode=mode).data
    np.testing.assert_allclose(out, naive_conv(x, k, stride, mode), atol=1e-12)


def test_conv2d_accepts_unbatched_input(rng):
    x, k = rng.standard_normal((3, 5, 5)), rng.standard_normal((2, 3, 3, 3))
    np.testing.assert_allclose(F.conv2d(Tensor(x), Tensor(k)).data, F.conv2d(Tensor(x[None]), Tensor(k)).data[0])


def test_conv2d_channel_mismatch_raises(rng):
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 5, 3, 3))))


def test_depthwise_matches_per_channel_conv(rng):
    x = rng.standard_normal((2, 3, 6, 5))
    k = rng.standard_normal((3, 3, 3))
    out = F.depthwise_conv2d(Tensor(x), Tensor(k)).data
    for c in range(3):
        ref = naive_conv(x[:, c : c + 1], k[c][None, None], 1, "replicate")
        np.testing.assert_allclose(out[:, c : c + 1], ref, atol=1e-12)


def test_depthwise_does_not_mix_channels(rng):
    x = np.zeros((1, 3, 5, 5))
    x[0, 1] = rng.standard_normal((5, 5))
    out = F.depthwise_conv2d(Tensor(x), Tensor(rng.standard_normal((3, 3, 3)))).data
    assert np.all(out[0, 0] == 0) and np.all(out[0, 2] == 0)


def test_group_norm_matches_formula(rng):
    x = rng.standard_normal((2, 8, 3, 3)) * 3 + 1
    w, b = rng.standard_normal(8), rng.standard_normal(8)
    out = F.group_norm(Tensor(x), 4, Tensor(w), Tensor(b)).data
    g = x.reshape(2, 4, -1)
    ref = ((g - g.mean(-1, keepdims=True)) / np.sqrt(g.var(-1, keepdims=True) + 1e-5)).reshape(x.shape)
    np.testing.assert_allclose(out, ref * w[:, None, None] + b[:, None, None], atol=1e-12)


def test_upsample_and_pad_forward():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    up = F.upsample_nearest2x(Tensor(x)).data
    np.testing.assert_array_equal(up[0, 0], np.repeat(np.repeat(x[0, 0], 2, 0), 2, 1))
    np.testing.assert_array_equal(F.pad2d(Tensor(x), 1, "replicate").data, np.pad(x, ((0, 0),) * 2 + ((1, 1),) * 2, "edge"))
    np.testing.assert_array_equal(F.pad2d(Tensor(x), 2, "zeros").data, np.pad(x, ((0, 0),) * 2 + ((2, 2),) * 2))


def test_functional_gradients(rng):
    x = Tensor(rng.standard_normal((2, 4, 6, 6)), requires_grad=True)
    k = Tensor(rng.standard_normal((3, 4, 3, 3)), requires_grad=True)
    dk = Tensor(rng.standard_normal((4, 3, 3)), requires_grad=True)
    w, b = Tensor(rng.standard_normal(4), requires_grad=True), Tensor(rng.standard_normal(4), requires_grad=True)
    r = rng.standard_normal((2, 3, 3, 3))
    r2 = rng.standard_normal((2, 4, 6, 6))
    assert check_grad(lambda a, kk: F.conv2d(a, kk, stride=2) * r, [x, k]) < 1e-6
    assert check_grad(lambda a, kk: F.depthwise_conv2d(a, kk) ** 2, [x, dk]) < 1e-6
    assert check_grad(lambda a, ww, bb: F.group_norm(a, 2, ww, bb) * r2, [x, w, b]) < 1e-6
    assert check_grad(lambda a: F.upsample_nearest2x(a) ** 2, [x]) < 1e-6
    assert check_grad(lambda a: F.pad2d(a, 2, "replicate") ** 2, [x]) < 1e-6


def test_linear_matches_matmul(rng):
    x, w, b = rng.standard_normal((5, 3)), rng.standard_normal((2, 3)), rng.standard_normal(2)
    np.testing.assert_allclose(F.linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w.T + b)


def test_module_names_and_state_dict_roundtrip():
    class Net(Module):
        def __init__(self):
            r = np.random.default_rng(0)
            self.conv = Conv2d(3, 4, 3, rng=r, dtype=np.float64)
            self.blocks = [Linear(4, 4, rng=r, dtype=np.float64), GroupNorm(4, 2, np.float64)]

    a, b = Net(), Net()
    names = [n for n, _ in a.named_parameters()]
    assert "conv.weight" in names and "blocks.0.weight" in names and "blocks.1.bias" in names
    for p in b.parameters():
        p.data = p.data + 1
    b.load_state_dict(a.state_dict())
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_load_state_dict_lists_mismatches():
    r = np.random.default_rng(0)
    a = Conv2d(3, 4, 3, rng=r, dtype=np.float64)
    bad = {"weight": np.zeros((4, 3, 1, 1)), "bias": np.zeros(4)}
    with pytest.raises(ValueError, match="weight"):
        a.load_state_dict(bad)
