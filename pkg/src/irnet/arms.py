"""Ablation arms: how each configuration binarizes weights and estimates gradients."""

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class Arm:
    name: str
    label: str
    binary: bool
    quantizer: str
    estimator: str


ARMS = {
    a.name: a
    for a in (
        Arm("full_precision", "FP", False, "sign", "ste_identity"),
        Arm("vanilla_sign", "Binary", True, "sign", "ste_clip"),
        Arm("libra_no_std", "Libra-PB (without weight standardization)", True, "libra_no_std", "ste_clip"),
        Arm("libra_no_shift", "Libra-PB (without bit-shift scales)", True, "libra_no_shift", "ste_clip"),
        Arm("libra", "Libra-PB", True, "libra", "ste_clip"),
        Arm("ede_only", "EDE", True, "sign", "ede"),
        Arm("irnet", "IR-Net (Libra-PB & EDE)", True, "libra", "ede"),
    )
}


def get_arm(name: str) -> Arm:
    try:
        return ARMS[name]
    except KeyError:
        raise ConfigError(f"unknown ablation arm {name!r}; choose from {sorted(ARMS)}") from None
