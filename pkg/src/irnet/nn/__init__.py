from .layers import (
    AvgPool2d,
    BatchNorm,
    BinaryConv2d,
    BinaryLinear,
    Context,
    Conv2d,
    Flatten,
    Hardtanh,
    Linear,
    MaxPool2d,
    Residual,
)
from .model import (
    ARCHITECTURES,
    LayerSpec,
    Model,
    architecture_specs,
    count_ops,
    soft_forward_mode,
)
from .train import SGD, TrainState, cross_entropy, evaluate, predict_logits, sgd_step, train_epoch

__all__ = [
    "ARCHITECTURES", "AvgPool2d", "BatchNorm", "BinaryConv2d", "BinaryLinear", "Context", "Conv2d",
    "Flatten", "Hardtanh", "LayerSpec", "Linear", "MaxPool2d", "Model", "Residual", "SGD",
    "TrainState", "architecture_specs", "count_ops", "cross_entropy", "evaluate", "predict_logits",
    "sgd_step", "soft_forward_mode", "train_epoch",
]
