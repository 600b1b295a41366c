from . import autodiff
from .autodiff import CTensor, Tensor
from .buffers import convolve, correlate_valid, dft, downsample, idft, upsample
from .optim import AdamState, ParamSet, adam_step

__all__ = [
    "AdamState", "CTensor", "ParamSet", "Tensor", "adam_step", "autodiff",
    "convolve", "correlate_valid", "dft", "downsample", "idft", "upsample",
]
