"""Training checkpoints and packed model files on top of the IRBN container.

A checkpoint stores everything needed to resume or evaluate a run: the
architecture, the latent weights, batchnorm statistics, optimizer velocity
and the random generator state. Latent weights are stored as float64 so a
resumed run continues bit-identically.

A packed model file stores only the deployment form: sign words and shifts
for binary layers, float32 arrays for batchnorm and full-precision layers.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .arms import get_arm
from .bitkernel.export import PackedLayer, PackedModel, export_model
from .bitkernel.packing import PackedBitTensor
from .ede import EdeSchedule
from .errors import FormatError
from .nn.model import LayerSpec, Model
from .nn.train import SGD, TrainState
from .serialize import KIND_CHECKPOINT, KIND_PACKED, read_container, write_container
from .tensor import DTYPE

# --------------------------------------------------------------------------
# random generator state <-> JSON


def rng_state_to_json(rng: np.random.Generator) -> dict:
    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, np.ndarray):
            return {"__uint64__": [int(x) for x in v.ravel()]}
        if isinstance(v, np.integer):
            return int(v)
        return v

    return conv(rng.bit_generator.state)


def rng_from_json(state: dict) -> np.random.Generator:
    def conv(v):
        if isinstance(v, dict):
            if "__uint64__" in v:
                return np.array(v["__uint64__"], dtype=np.uint64)
            return {k: conv(x) for k, x in v.items()}
        return v

    state = conv(state)
    if state.get("bit_generator") != "Philox":
        raise FormatError(f"unsupported bit generator {state.get('bit_generator')!r}")
    bg = np.random.Philox()
    bg.state = state
    return np.random.Generator(bg)


# --------------------------------------------------------------------------
# checkpoints


def _layer_arrays(layer):
    arrays = {k: np.asarray(v, dtype=DTYPE) for k, v in layer.params.items()}
    if layer.kind == "batchnorm":
        arrays["running_mean"] = layer.running_mean
        arrays["running_var"] = layer.running_var
    return arrays


def checkpoint_bytes(state: TrainState) -> bytes:
    model = state.model
    opt = state.optimizer
    descriptor = {
        "format": "checkpoint",
        "specs": [s.to_dict() for s in model.specs],
        "input_shape": list(model.input_shape),
        "quantizer": model.quantizer,
        "binary": model.binary,
        "full_jacobian": model.full_jacobian,
        "estimator": state.estimator,
        "schedule": {"total_epochs": state.schedule.total_epochs, "t_min": state.schedule.t_min,
                     "t_max": state.schedule.t_max},
        "epoch": state.epoch,
        "batch_size": state.batch_size,
        "lr_milestones": list(state.lr_milestones),
        "lr_gamma": state.lr_gamma,
        "augment": state.augment,
        "optimizer": {"lr": opt.lr, "momentum": opt.momentum, "weight_decay": opt.weight_decay,
                      "decay_binary": opt.decay_binary},
        "rng": rng_state_to_json(state.rng),
        "meta": state.meta,
    }
    records = [(l.kind, l.name, _layer_arrays(l)) for l in model.iter_layers()]
    records.append(("optimizer", "sgd", dict(opt.velocity)))
    return write_container(KIND_CHECKPOINT, descriptor, records)


def save_checkpoint(state: TrainState, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(state))
    return path


def checkpoint_from_bytes(data: bytes) -> TrainState:
    _, d, records = read_container(data, expected_kind=KIND_CHECKPOINT)
    try:
        model = Model([LayerSpec(**s) for s in d["specs"]], d["input_shape"], rng=None,
                      quantizer=d["quantizer"], full_jacobian=d["full_jacobian"], binary=d["binary"])
        by_name = {name: (kind, arrays) for kind, name, arrays in records}
        for layer in model.iter_layers():
            kind, arrays = by_name.pop(layer.name)
            if kind != layer.kind:
                raise FormatError(f"record {layer.name} has kind {kind}, model expects {layer.kind}")
            for k in layer.params:
                layer.params[k] = arrays[k].astype(DTYPE)
            if layer.kind == "batchnorm":
                layer.running_mean = arrays["running_mean"].astype(DTYPE)
                layer.running_var = arrays["running_var"].astype(DTYPE)
        kind, velocity = by_name.pop("sgd")
        if by_name:
            raise FormatError(f"unexpected records {sorted(by_name)}")
        o = d["optimizer"]
        opt = SGD(o["lr"], o["momentum"], o["weight_decay"], o["decay_binary"])
        opt.velocity = {k: v.astype(DTYPE) for k, v in velocity.items()}
        s = d["schedule"]
        return TrainState(
            model=model,
            optimizer=opt,
            rng=rng_from_json(d["rng"]),
            schedule=EdeSchedule(s["total_epochs"], s["t_min"], s["t_max"]),
            estimator=d["estimator"],
            epoch=d["epoch"],
            batch_size=d["batch_size"],
            lr_milestones=tuple(d["lr_milestones"]),
            lr_gamma=d["lr_gamma"],
            augment=d["augment"],
            meta=d["meta"],
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint is missing {exc}") from None


def load_checkpoint(path) -> TrainState:
    return checkpoint_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# packed model files


def packed_bytes(model: PackedModel) -> bytes:
    records = []
    for layer in model.iter_layers():
        arrays = {k: np.asarray(v, dtype=np.float32) for k, v in layer.arrays.items() if k != "eps"}
        if "eps" in layer.arrays:
            arrays["eps"] = np.asarray(layer.arrays["eps"], dtype=np.float64)
        if layer.weights is not None:
            arrays["words"] = layer.weights.words.astype(np.uint64)
            arrays["logical_len"] = np.asarray(layer.weights.logical_len, dtype=np.int64)
            arrays["shifts"] = layer.shifts.astype(np.int64)
        records.append((layer.kind, layer.name, arrays))
    descriptor = {
        "format": "packed",
        "specs": [s.to_dict() for s in model.specs],
        "input_shape": list(model.input_shape),
        "metadata": model.metadata,
    }
    return write_container(KIND_PACKED, descriptor, records)


def save_packed(model: PackedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(packed_bytes(model))
    return path


def packed_from_bytes(data: bytes) -> PackedModel:
    _, d, records = read_container(data, expected_kind=KIND_PACKED)
    it = iter(records)

    def build(spec):
        try:
            kind, name, arrays = next(it)
        except StopIteration:
            raise FormatError("packed model has fewer records than layers") from None
        if kind != spec.kind:
            raise FormatError(f"record {name} has kind {kind}, descriptor expects {spec.kind}")
        layer = PackedLayer(kind, name, spec)
        if "words" in arrays:
            layer.weights = PackedBitTensor(arrays["words"].astype(np.uint64), int(arrays["logical_len"]))
            layer.shifts = arrays["shifts"].astype(np.int64)
        layer.arrays = {k: v.astype(DTYPE) for k, v in arrays.items()
                        if k not in ("words", "logical_len", "shifts")}
        layer.children = [build(s) for s in spec.body]
        return layer

    try:
        specs = [LayerSpec(**s) for s in d["specs"]]
        layers = [build(s) for s in specs]
        if next(it, None) is not None:
            raise FormatError("packed model has more records than layers")
        return PackedModel(tuple(d["input_shape"]), specs, layers, d.get("metadata", {}))
    except KeyError as exc:
        raise FormatError(f"packed model is missing {exc}") from None


def load_packed(path) -> PackedModel:
    return packed_from_bytes(Path(path).read_bytes())


def load_any(path):
    """A :class:`PackedModel` from either a packed file or a checkpoint."""
    data = Path(path).read_bytes()
    if len(data) > 6 and data[:4] == b"IRBN" and data[6] == KIND_CHECKPOINT:
        state = checkpoint_from_bytes(data)
        return export_model(state.model, np.float32, metadata=state.meta), state
    return packed_from_bytes(data), None


# --------------------------------------------------------------------------
# run construction


def create_state(config, input_shape, num_classes) -> TrainState:
    """A fresh :class:`TrainState` for a :class:`~irnet.config.RunConfig`."""
    from .nn.model import architecture_specs
    from .tensor import make_rng

    arm = get_arm(config.arm)
    rng = make_rng(config.seed)
    specs = architecture_specs(config.architecture, input_shape, num_classes)
    model = Model(specs, input_shape, rng, arm.quantizer, config.full_jacobian, arm.binary)
    opt = SGD(config.lr, config.momentum, config.weight_decay, config.decay_binary)
    meta = {"arm": arm.name, "architecture": config.architecture, "dataset": config.dataset,
            "seed": config.seed, "epochs": config.epochs}
    return TrainState(model, opt, rng, EdeSchedule(max(config.epochs, 1), config.t_min, config.t_max),
                      config.effective_estimator, 0, config.batch_size, tuple(config.lr_milestones),
                      config.lr_gamma, config.effective_augment, meta)
