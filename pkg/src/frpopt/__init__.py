"""First-order regular perturbation (FRP) models of single-span fiber
nonlinearity: SSFM reference channel, integral kernels, and kernels learned by
normalized batch gradient descent."""

from .frontend import Pulse, Waveform, generate_symbols, matched_filter_downsample, modulate
from .kernels import (
    KernelTensor,
    QuadratureConfig,
    compute_kernel,
    compute_kernel_tensor,
    dispersed_pulse,
    max_relative_change,
)
from .metrics import SnrReport, nonlinear_snr, snr_gap
from .model import FrpConfig, frp_feature, frp_predict
from .nbgd import NbgdConfig, TrainBatch, least_squares_oracle, nbgd_fit, rmse_gradient, rmse_objective
from .ssfm import FiberParams, SsfmConfig, cdc, propagate, run_link

__version__ = "0.1.0"
