"""
Numerical substrate: tensors, reverse-mode differentiation, network kernels, FFT and SGD.
"""

from medpatch.core.tensor import Tape, Tensor, backward, get_default_dtype, no_tape, set_default_dtype
from medpatch.core import ops
from medpatch.core.nn import activation, conv_nd, dense, normalize, pool_nd, transpose_conv_nd
from medpatch.core.fft import fft_nd, ifft_nd
from medpatch.core.optim import ParamStore, clip_grad_norm, sgd_step

__all__ = [
    "Tape", "Tensor", "backward", "no_tape", "get_default_dtype", "set_default_dtype", "ops",
    "activation", "conv_nd", "dense", "normalize", "pool_nd", "transpose_conv_nd",
    "fft_nd", "ifft_nd", "ParamStore", "clip_grad_norm", "sgd_step",
]
