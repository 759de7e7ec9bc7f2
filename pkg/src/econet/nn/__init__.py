from .layers import (BatchNorm, Conv3d, DegenerateBatchError, Dropout, Linear,
                     ReLU, he_uniform, replicate_pad)
from .loss import PROB_CLAMP, softmax, weighted_softmax_ce
from .optim import AdamState, LrSchedule, adam_step, init_adam

__all__ = [
    "AdamState", "BatchNorm", "Conv3d", "DegenerateBatchError", "Dropout",
    "Linear", "LrSchedule", "PROB_CLAMP", "ReLU", "adam_step", "he_uniform",
    "init_adam", "replicate_pad", "softmax", "weighted_softmax_ce",
]
