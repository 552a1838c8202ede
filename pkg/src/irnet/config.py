"""Run configuration files.

Grammar: an INI-style text file with ``[section]`` headers and one
``key = value`` per line; ``#`` starts a comment line. Sections and keys are
fixed (see ``SCHEMA``); anything unknown is an error. Lists are comma
separated, booleans are ``true``/``false``.

Example::

    [model]
    architecture = lenet
    arm = irnet

    [train]
    epochs = 5
    seed = 0
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

from .arms import ARMS, get_arm
from .ede import ESTIMATORS
from .errors import ConfigError

SCHEMA = {
    "model": ("architecture", "arm", "estimator", "full_jacobian"),
    "data": ("dataset", "path", "train_limit", "test_limit", "augment"),
    "train": ("epochs", "batch_size", "seed", "lr", "momentum", "weight_decay", "decay_binary",
              "lr_milestones", "lr_gamma"),
    "ede": ("t_min", "t_max"),
    "output": ("dir", "checkpoint_every"),
}


@dataclass
class RunConfig:
    architecture: str = "lenet"
    arm: str = "irnet"
    estimator: str = ""  # empty: the arm's default
    full_jacobian: bool = False
    dataset: str = "mnist"
    path: str = ""  # empty: $IRNET_DATA
    train_limit: int = 0  # 0: whole split
    test_limit: int = 0
    augment: str = "auto"  # auto: on for cifar10 only
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_binary: bool = False
    lr_milestones: tuple = field(default_factory=tuple)
    lr_gamma: float = 0.1
    t_min: float = 0.1
    t_max: float = 10.0
    dir: str = "runs/default"
    checkpoint_every: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        get_arm(self.arm)
        if self.estimator and self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}; choose from {ESTIMATORS}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.t_min <= self.t_max:
            raise ConfigError("need 0 < t_min <= t_max")
        if self.augment not in ("auto", "true", "false"):
            raise ConfigError("augment must be auto, true or false")
        self.lr_milestones = tuple(int(m) for m in self.lr_milestones)

    @property
    def effective_estimator(self):
        return self.estimator or get_arm(self.arm).estimator

    @property
    def effective_augment(self):
        if self.augment == "auto":
            return self.dataset == "cifar10"
        return self.augment == "true"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # ------------------------------------------------------------------
    # text form

    def to_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_format(getattr(self, key))}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                           inline_comment_prefixes=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        values = {}
        types = {f.name: f for f in dataclasses.fields(cls)}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[key] = _parse(raw, types[key], cls)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(raw: str, f: dataclasses.Field, cls):
    raw = raw.strip()
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {f.name}") from None
    return raw


ARM_NAMES = tuple(ARMS)
