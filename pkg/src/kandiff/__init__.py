"""KAN-augmented conditional diffusion for low-light image enhancement, on numpy."""

import os

# Single-threaded BLAS keeps float reductions in a fixed order, so seeded runs
# repeat bit for bit. Only effective if numpy has not been imported yet.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from .config import RunConfig, load_config  # noqa: E402
from .diffusion import NoiseSchedule, make_schedule, q_sample, reverse_mean_step, sample  # noqa: E402
from .frequency import FreqLossConfig, fft2, freq_loss, spectrum  # noqa: E402
from .kan import KanBlock, KanLayer, SplineGrid, bspline_basis, init_kan_layer, kan_layer_forward  # noqa: E402
from .metrics import MetricReport, psnr, ssim  # noqa: E402
from .tensor import ContractError, DimensionError, Parameter, Tensor, no_grad  # noqa: E402
from .unet import DenoiserConfig, DenoiserNet  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "load_config",
    "NoiseSchedule",
    "make_schedule",
    "q_sample",
    "reverse_mean_step",
    "sample",
    "FreqLossConfig",
    "fft2",
    "freq_loss",
    "spectrum",
    "KanBlock",
    "KanLayer",
    "SplineGrid",
    "bspline_basis",
    "init_kan_layer",
    "kan_layer_forward",
    "MetricReport",
    "psnr",
    "ssim",
    "ContractError",
    "DimensionError",
    "Parameter",
    "Tensor",
    "no_grad",
    "DenoiserConfig",
    "DenoiserNet",
]
