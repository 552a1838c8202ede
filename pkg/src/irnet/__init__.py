"""Binary neural networks: Libra parameter binarization, error decay estimator, XNOR-popcount inference."""

from .arms import ARMS, get_arm
from .bitkernel.export import PackedModel, export_model, packed_infer
from .bitkernel.gemm import packed_gemm, xnor_popcount_dot
from .bitkernel.packing import PackedBitTensor, pack, unpack
from .checkpoint import create_state, load_checkpoint, load_packed, save_checkpoint, save_packed
from .config import RunConfig
from .ede import EdeParams, EdeSchedule, ede_g, ede_grad, schedule_at, ste_clip_grad, ste_identity_grad
from .errors import (
    ConfigError,
    DegenerateWeightsError,
    DimensionError,
    DomainError,
    FormatError,
    IRNetError,
)
from .libra import (
    BinarizedWeights,
    EntropyReport,
    StandardizedWeights,
    bernoulli_entropy,
    binarize_activations,
    brute_force_shift,
    libra_pb,
    quantization_error,
    shift_scale,
    sign_binarize,
    standardize,
)

__version__ = "0.1.0"

__all__ = [
    "ARMS", "BinarizedWeights", "ConfigError", "DegenerateWeightsError", "DimensionError",
    "DomainError", "EdeParams", "EdeSchedule", "EntropyReport", "FormatError", "IRNetError",
    "PackedBitTensor", "PackedModel", "RunConfig", "StandardizedWeights", "bernoulli_entropy",
    "binarize_activations", "brute_force_shift", "create_state", "ede_g", "ede_grad", "export_model",
    "get_arm", "libra_pb", "load_checkpoint", "load_packed", "pack", "packed_gemm", "packed_infer",
    "quantization_error", "save_checkpoint", "save_packed", "schedule_at", "shift_scale",
    "sign_binarize", "standardize", "ste_clip_grad", "ste_identity_grad", "unpack", "xnor_popcount_dot",
]
