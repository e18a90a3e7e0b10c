"""Self-check suite run by ``kandiff verify``.

Each check compares the implementation against an independent oracle (finite
differences, a naive DFT, a recursive Cox-de Boor evaluation, a loop-based KAN
layer, closed-form diffusion identities) and reports the measured error next to
its tolerance. ``quick`` runs the cheap subset; ``full`` adds whole-network
gradient checks and a small fitting experiment.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import functional as F
from . import tensor as T
from .diffusion import _phase2, make_schedule, q_sample, reverse_mean_step, sample
from .frequency import FreqLossConfig, fft2, fft2_array, freq_loss, ifft2_array, magnitude
from .gradcheck import check_directional, check_grad
from .kan import KanBlock, SplineGrid, bspline_basis, init_kan_layer, kan_layer_forward
from .optim import Adam
from .tensor import Tensor
from .unet import DenoiserConfig, DenoiserNet, freeze_uncertainty

__all__ = ["CheckResult", "CHECKS", "FAULTS", "run_checks", "format_result", "format_report",
           "naive_dft2", "naive_bspline", "naive_kan_layer"]

GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float
    detail: str = ""


# -- oracles -------------------------------------------------------------------

def naive_dft2(x: np.ndarray) -> np.ndarray:
    """Textbook double sum over the last two axes."""
    m, n = x.shape[-2:]
    rows, cols = np.arange(m)[:, None], np.arange(n)[None, :]
    out = np.zeros(x.shape, dtype=np.complex128)
    for k in range(m):
        for l in range(n):
            phase = np.exp(-2j * np.pi * (k * rows / m + l * cols / n))
            out[..., k, l] = np.sum(x * phase, axis=(-2, -1))
    return out


def naive_bspline(x: float, grid: SplineGrid) -> np.ndarray:
    """All basis values at scalar ``x`` by the recursive definition."""
    t = grid.knots()

    def b(i, k):
        if k == 0:
            return 1.0 if t[i] <= x < t[i + 1] else 0.0
        left = (x - t[i]) / (t[i + k] - t[i]) * b(i, k - 1)
        right = (t[i + k + 1] - x) / (t[i + k + 1] - t[i + 1]) * b(i + 1, k - 1)
        return left + right

    return np.array([b(i, grid.order) for i in range(grid.num_basis)])


def naive_kan_layer(coef, base_w, spline_w, grid: SplineGrid, x: np.ndarray) -> np.ndarray:
    """``out[t, q] = sum_p w_b silu(x_p) + w_s sum_i c_i B_i(x_p)`` with explicit loops."""
    n_out, n_in = base_w.shape
    out = np.zeros((x.shape[0], n_out))
    for t in range(x.shape[0]):
        for q in range(n_out):
            acc = 0.0
            for p in range(n_in):
                v = x[t, p]
                silu = v / (1.0 + math.exp(-v))
                basis = naive_bspline(min(max(v, grid.t_min), grid.t_max - 1e-15), grid)
                acc += base_w[q, p] * silu + spline_w[q, p] * float(coef[q, p] @ basis)
            out[t, q] = acc
    return out


# -- helpers -------------------------------------------------------------------

def _rand(rng, *shape, lo=-1.0, hi=1.0, grad=True) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=grad)


def _worst(cases) -> tuple[float, str]:
    worst, where = 0.0, ""
    for name, fn, inputs in cases:
        err = check_grad(fn, inputs)
        if err >= worst:
            worst, where = err, name
    return worst, f"worst: {where}"


# -- checks --------------------------------------------------------------------

def check_grad_elementwise() -> tuple[float, str]:
    rng = np.random.default_rng(1)
    a, b = _rand(rng, 3, 4), _rand(rng, 4)
    pos = _rand(rng, 3, 4, lo=0.5, hi=2.0)
    away = Tensor(rng.choice([-1, 1], size=(3, 4)) * rng.uniform(0.2, 1.0, (3, 4)), requires_grad=True)
    mask = rng.random((3, 4)) > 0.5
    cases = [
        ("add", T.add, [a, b]),
        ("sub", T.sub, [a, b]),
        ("mul", T.mul, [a, b]),
        ("div", T.div, [a, pos]),
        ("neg", T.neg, [a]),
        ("exp", T.exp, [a]),
        ("log", T.log, [pos]),
        ("sqrt", T.sqrt, [pos]),
        ("abs", T.absolute, [away]),
        ("sin", T.sin, [a]),
        ("cos", T.cos, [a]),
        ("tanh", T.tanh, [a]),
        ("sigmoid", T.sigmoid, [a]),
        ("silu", T.silu, [a]),
        ("power", lambda x: T.power(x, 2.5), [pos]),
        ("clamp", lambda x: T.clamp(x, -0.1, 0.1), [away]),
        ("atan2", T.atan2, [a, pos]),
        ("where", lambda x, y: T.where_mask(mask, x, y), [a, pos]),
    ]
    return _worst(cases)


def check_grad_structural() -> tuple[float, str]:
    rng = np.random.default_rng(2)
    a = _rand(rng, 2, 3, 4)
    m1, m2 = _rand(rng, 2, 3, 4), _rand(rng, 4, 5)
    idx = np.array([0, 2, 2, 1])
    cases = [
        ("sum", lambda x: T.tsum(x, axis=1) * T.tsum(x, axis=1), [a]),
        ("mean", lambda x: T.mean(x, axis=(0, 2), keepdims=True) * x, [a]),
        ("reshape", lambda x: T.reshape(x, (6, 4)) @ T.reshape(x, (4, 6)), [a]),
        ("transpose", lambda x: T.transpose(x, (2, 0, 1)) * T.transpose(x, (2, 0, 1)), [a]),
        ("getitem", lambda x: x[:, 1:, ::2] * x[:, 1:, ::2], [a]),
        ("gather", lambda x: x[:, idx] * x[:, idx], [a]),
        ("concat", lambda x, y: T.concat([x, y * x], axis=1), [a, m1]),
        ("stack", lambda x, y: T.stack([x, y * y], axis=0), [a, m1]),
        ("matmul", lambda x, y: T.matmul(x, y) * T.matmul(x, y), [m1, m2]),
    ]
    return _worst(cases)


def check_grad_functional() -> tuple[float, str]:
    rng = np.random.default_rng(3)
    x = _rand(rng, 2, 3, 6, 6)
    k3, k1 = _rand(rng, 4, 3, 3, 3), _rand(rng, 4, 3, 1, 1)
    bias = _rand(rng, 4)
    dw = _rand(rng, 3, 3, 3)
    gx = _rand(rng, 2, 8, 4, 4)
    gw, gb = _rand(rng, 8), _rand(rng, 8)
    lw, lb = _rand(rng, 5, 4), _rand(rng, 5)
    lx = _rand(rng, 3, 4)
    w = Tensor(rng.standard_normal((2, 4, 6, 6)))
    cases = [
        ("conv_replicate", lambda a, k, b: F.conv2d(a, k, b) * w, [x, k3, bias]),
        ("conv_zeros_s2", lambda a, k: F.conv2d(a, k, stride=2, padding_mode="zeros") ** 2, [x, k3]),
        ("conv_1x1", lambda a, k: F.conv2d(a, k) * w, [x, k1]),
        ("depthwise", lambda a, k: F.depthwise_conv2d(a, k) ** 2, [x, dw]),
        ("pad_replicate", lambda a: F.pad2d(a, 2, "replicate") ** 2, [x]),
        ("pad_zeros", lambda a: F.pad2d(a, 1, "zeros") ** 2, [x]),
        ("upsample", lambda a: F.upsample_nearest2x(a) ** 2, [x]),
        ("group_norm", lambda a, g, b: F.group_norm(a, 4, g, b) * w[:, :1, :4, :4], [gx, gw, gb]),
        ("linear", lambda a, ww, b: F.linear(a, ww, b) ** 2, [lx, lw, lb]),
    ]
    return _worst(cases)


def check_grad_kan() -> tuple[float, str]:
    rng = np.random.default_rng(4)
    grid = SplineGrid()
    x = _rand(rng, 6, 3, lo=-1.4, hi=1.4)
    layer = init_kan_layer(3, 2, grid, seed=5, dtype=np.float64)
    r = Tensor(rng.standard_normal((6, grid.num_basis * 3)))
    params = [x, layer.coefficients, layer.base_weight, layer.spline_weight]
    block = KanBlock(4, 2, grid, rng=np.random.default_rng(6), dtype=np.float64)
    bx = _rand(rng, 1, 4, 4, 4, lo=-0.8, hi=0.8)
    bw = Tensor(rng.standard_normal((1, 4, 4, 4)))
    cases = [
        ("bspline_basis", lambda v: bspline_basis(v, grid).reshape((6, -1)) * r, [x]),
        ("kan_layer", lambda v, c, b, s: kan_layer_forward(layer, v) ** 2, params),
    ]
    worst, where = _worst(cases)
    err = check_directional(lambda v, *_: block(v) * bw, [bx] + block.parameters(), directions=3)
    if err >= worst:
        worst, where = err, "worst: kan_block"
    return worst, where


def check_grad_frequency() -> tuple[float, str]:
    rng = np.random.default_rng(7)
    x8, x6 = _rand(rng, 2, 8, 8), _rand(rng, 6, 6)
    y8 = Tensor(rng.uniform(-1, 1, (2, 8, 8)))
    x5 = _rand(rng, 5, 7)
    r1, r2 = Tensor(rng.standard_normal((2, 8, 8))), Tensor(rng.standard_normal((6, 6)))

    def fft_mix(r):
        return lambda v: fft2(v)[0] * r + fft2(v)[1] * (r * r)

    cfg = FreqLossConfig(gamma_amp=0.7, gamma_pha=0.3)
    cases = [
        ("fft2_radix2", fft_mix(r1), [x8]),
        ("fft2_direct", fft_mix(r2), [x6]),
        ("fft2_pad", lambda v: fft2(v, "pad")[0] ** 2 + fft2(v, "pad")[1], [x5]),
        ("magnitude", lambda v: magnitude(*fft2(v)) * r1, [x8]),
        ("phase", lambda v: T.atan2(fft2(v)[1], fft2(v)[0]) * r1, [x8]),
        ("freq_loss", lambda v: freq_loss(v, y8, cfg), [x8]),
    ]
    return _worst(cases)


def check_partition_of_unity() -> tuple[float, str]:
    grid = SplineGrid()
    x = np.random.default_rng(8).uniform(grid.t_min, grid.t_max, 1000)
    x[:3] = (grid.t_min, grid.t_max, 0.0)
    basis = bspline_basis(Tensor(x), grid).data
    return float(np.max(np.abs(basis.sum(axis=-1) - 1.0))), "1000 points, endpoints included"


def check_basis_vs_recursion() -> tuple[float, str]:
    grid = SplineGrid()
    x = np.random.default_rng(9).uniform(-0.999, 0.999, 200)
    fast = bspline_basis(Tensor(x), grid).data
    slow = np.stack([naive_bspline(v, grid) for v in x])
    return float(np.max(np.abs(fast - slow))), "200 points"


def check_kan_oracle() -> tuple[float, str]:
    rng = np.random.default_rng(10)
    layer = init_kan_layer(4, 3, SplineGrid(), seed=11, dtype=np.float64)
    layer.spline_weight.data = rng.uniform(0.5, 1.5, (3, 4))
    x = rng.uniform(-1.3, 1.3, (16, 4))
    fast = kan_layer_forward(layer, Tensor(x)).data
    slow = naive_kan_layer(layer.coefficients.data, layer.base_weight.data, layer.spline_weight.data,
                           layer.grid, x)
    return float(np.max(np.abs(fast - slow))), "16 tokens, 4 -> 3"


def check_fft_vs_dft() -> tuple[float, str]:
    rng = np.random.default_rng(12)
    worst = 0.0
    for shape in ((16, 16), (2, 12, 10)):
        x = rng.standard_normal(shape)
        worst = max(worst, float(np.max(np.abs(fft2_array(x) - naive_dft2(x)))))
    return worst, "16x16 radix-2 and 12x10 direct"


def check_fft_identities() -> tuple[float, str]:
    rng = np.random.default_rng(13)
    worst = 0.0
    for shape in ((16, 16), (9, 12)):
        x = rng.standard_normal(shape)
        z = fft2_array(x)
        parseval = abs(np.sum(x * x) - np.sum(np.abs(z) ** 2) / x.size) / np.sum(x * x)
        roundtrip = np.max(np.abs(ifft2_array(z).real - x))
        worst = max(worst, float(parseval), float(roundtrip))
    return worst, "Parseval (relative) and inverse round trip"


def check_freq_loss_zero() -> tuple[float, str]:
    x = Tensor(np.random.default_rng(14).uniform(-1, 1, (3, 16, 16)))
    return abs(float(freq_loss(x, x).data)), "loss(x, x)"


def check_schedule_ratio() -> tuple[float, str]:
    worst = 0.0
    for kind in ("linear", "cosine"):
        s = make_schedule(200, 1e-4, 2e-2, kind)
        ts = np.arange(1, s.T + 1)
        ratio = s.alpha_bar(ts) / s.alpha_bar(ts - 1)
        worst = max(worst, float(np.max(np.abs(ratio - s.alpha(ts)))))
    return worst, "abar_t / abar_{t-1} vs alpha_t, both schedule kinds"


def check_reverse_step_t1() -> tuple[float, str]:
    rng = np.random.default_rng(15)
    s = make_schedule(50)
    x0, eps = rng.uniform(-1, 1, (2, 3, 8, 8)), rng.standard_normal((2, 3, 8, 8))
    x1 = q_sample(x0, 1, eps, s)
    rec = reverse_mean_step(x1, Tensor(eps), 1, s).data
    return float(np.max(np.abs(rec - x0))), "x0 from x1 with the true noise"


def _flipped_step(x_t, eps_hat, t, sched):
    # the coefficient sign inverted
    alpha, abar = sched.alpha(t), sched.alpha_bar(t)
    return (T._as_tensor(x_t) + T._as_tensor(eps_hat) * ((1.0 - alpha) / math.sqrt(1.0 - abar))) \
        * (1.0 / math.sqrt(alpha))


FAULTS: dict[str, Callable] = {"reverse-sign": _flipped_step}


def check_teacher_forcing(reverse_step=None) -> tuple[float, str]:
    rng = np.random.default_rng(16)
    s = make_schedule(5, 1e-2, 0.3)
    x0 = rng.uniform(-1, 1, (1, 3, 8, 8))

    def oracle(x_t, y, abar):
        ab = float(np.asarray(abar).reshape(-1)[0])
        return Tensor((x_t.data - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)), None

    out = sample(oracle, np.zeros_like(x0), s, seed=3, clip=False, reverse_step=reverse_step)
    return float(np.max(np.abs(out - x0))), "T=5, true noise fed at every step"


def check_grad_denoiser() -> tuple[float, str]:
    cfg = DenoiserConfig(base_channels=8, dtype="float64", seed=3)
    net = DenoiserNet(cfg)
    rng = np.random.default_rng(17)
    x = Tensor(rng.standard_normal((1, 3, 16, 16)), requires_grad=True)
    y = Tensor(rng.uniform(-1, 1, (1, 3, 16, 16)), requires_grad=True)
    r1, r2 = Tensor(rng.standard_normal((1, 3, 16, 16))), Tensor(rng.standard_normal((1, 3, 16, 16)))

    def loss(*_):
        eps, u = net(x, y, 0.4)
        return (eps * r1).sum() + (u * r2).sum()

    params = [x, y] + net.parameters()
    worst = check_directional(loss, params, directions=3, rng=rng)
    kan = net.kan_blocks()[0].layers[0]
    for p in (kan.coefficients, kan.base_weight, net.in_conv.weight, net.uncertainty.parameters()[0]):
        worst = max(worst, check_grad(loss, [p], max_coords=6, rng=rng))
    return worst, f"{sum(p.size for p in net.parameters())} parameters, 16x16"


def check_grad_phase2() -> tuple[float, str]:
    cfg = DenoiserConfig(base_channels=8, dtype="float64", seed=4)
    net = DenoiserNet(cfg)
    # the loss treats the log-variance as a constant weight; zeroing the head's
    # last conv makes it constant for finite differences too
    for p in net.uncertainty.conv2.parameters():
        p.data[...] = 0.0
    freeze_uncertainty(net)
    rng = np.random.default_rng(18)
    x0, y = rng.uniform(-1, 1, (2, 3, 8, 8)), rng.uniform(-1, 1, (2, 3, 8, 8))
    s = make_schedule(20)
    fcfg = FreqLossConfig(0.5, 0.5)
    params = [p for p in net.parameters() if not p.frozen]

    def loss(*_):
        return _phase2(net, x0, y, s, fcfg, np.random.default_rng(5))[0]

    return check_directional(loss, params, directions=3, rng=rng), "phase-2 objective, frozen head"


def check_sin3x() -> tuple[float, str]:
    """A single KAN edge fits sin(3x); a trained affine map cannot."""
    x = np.linspace(-1, 1, 256)[:, None]
    target = Tensor(np.sin(3 * x))
    layer = init_kan_layer(1, 1, SplineGrid(), seed=0, dtype=np.float64)
    lin_w, lin_b = T.Parameter(np.zeros((1, 1))), T.Parameter(np.zeros(1))
    xs = Tensor(x)

    def fit(params, model, steps, lr):
        opt = Adam(params, lr=lr)
        for _ in range(steps):
            opt.zero_grad()
            loss = ((model() - target) ** 2).mean()
            loss.backward()
            opt.step()
        return float(((model() - target) ** 2).mean().data)

    kan_mse = fit(layer.parameters(), lambda: kan_layer_forward(layer, xs), 1500, 0.05)
    lin_mse = fit([lin_w, lin_b], lambda: F.linear(xs, lin_w, lin_b), 1500, 0.05)
    ok = lin_mse > 1e-1
    return (kan_mse if ok else math.inf), f"kan mse {kan_mse:.2e}, affine mse {lin_mse:.3f}"


# name -> (function, tolerance, levels)
CHECKS: dict[str, tuple[Callable, float, tuple[str, ...]]] = {
    "grad.elementwise": (check_grad_elementwise, GRAD_TOL, ("quick", "full")),
    "grad.structural": (check_grad_structural, GRAD_TOL, ("quick", "full")),
    "grad.functional": (check_grad_functional, GRAD_TOL, ("quick", "full")),
    "grad.kan": (check_grad_kan, GRAD_TOL, ("quick", "full")),
    "grad.frequency": (check_grad_frequency, GRAD_TOL, ("quick", "full")),
    "spline.partition_of_unity": (check_partition_of_unity, 1e-12, ("quick", "full")),
    "spline.recursion_oracle": (check_basis_vs_recursion, 1e-12, ("quick", "full")),
    "kan.loop_oracle": (check_kan_oracle, 1e-12, ("quick", "full")),
    "fft.dft_oracle": (check_fft_vs_dft, 1e-6, ("quick", "full")),
    "fft.parseval_roundtrip": (check_fft_identities, 1e-9, ("quick", "full")),
    "freq.self_loss": (check_freq_loss_zero, 1e-12, ("quick", "full")),
    "schedule.ratio": (check_schedule_ratio, 1e-12, ("quick", "full")),
    "diffusion.reverse_t1": (check_reverse_step_t1, 1e-10, ("quick", "full")),
    "diffusion.teacher_forcing": (check_teacher_forcing, 1e-4, ("quick", "full")),
    "grad.denoiser": (check_grad_denoiser, GRAD_TOL, ("full",)),
    "grad.phase2_objective": (check_grad_phase2, GRAD_TOL, ("full",)),
    "kan.sin3x_fit": (check_sin3x, 1e-3, ("full",)),
}


def run_checks(level: str = "quick", only=None, fault: str | None = None,
               on_result: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    """Run every check registered for ``level``.

    ``fault`` names an entry of :data:`FAULTS` to inject into the sampling
    check; the suite is then expected to fail.
    """
    if level not in ("quick", "full"):
        raise ValueError(f"level must be quick or full, got {level!r}")
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {sorted(FAULTS)}")
    results = []
    for name, (fn, tol, levels) in CHECKS.items():
        if level not in levels or (only and name not in only):
            continue
        t0 = time.perf_counter()
        try:
            if name == "diffusion.teacher_forcing" and fault:
                value, detail = fn(FAULTS[fault])
            else:
                value, detail = fn()
            passed = bool(np.isfinite(value) and value < tol)
        except Exception as exc:  # a crashing check is a failed check
            value, detail, passed = math.nan, f"{type(exc).__name__}: {exc}", False
        res = CheckResult(name, value, tol, passed, time.perf_counter() - t0, detail)
        results.append(res)
        if on_result:
            on_result(res)
    return results


def format_result(r: CheckResult) -> str:
    status = "PASS" if r.passed else "FAIL"
    return f"{status}\t{r.name}\t{r.value:.3e}\t{r.tol:.0e}\t{r.seconds:.2f}s\t{r.detail}"


def format_report(results: list[CheckResult]) -> str:
    lines = ["status\tcheck\terror\ttolerance\ttime\tdetail"] + [format_result(r) for r in results]
    failed = sum(not r.passed for r in results)
    total = sum(r.seconds for r in results)
    lines.append(f"#summary\t{len(results) - failed}/{len(results)} passed\t{total:.1f}s")
    return "\n".join(lines) + "\n"
