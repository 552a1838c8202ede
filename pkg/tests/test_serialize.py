import json
import struct

import numpy as np
import pytest

from irnet.bitkernel.export import export_model, packed_infer
from irnet.checkpoint import (
    checkpoint_bytes,
    checkpoint_from_bytes,
    create_state,
    load_any,
    packed_bytes,
    packed_from_bytes,
    rng_from_json,
    rng_state_to_json,
    save_checkpoint,
    save_packed,
)
from irnet.config import RunConfig
from irnet.errors import FormatError
from irnet.nn.train import predict_logits, train_epoch
from irnet.serialize import KIND_CHECKPOINT, KIND_PACKED, MAGIC, file_kind, read_container, write_container
from irnet.tensor import make_rng


def tiny_state(arm="irnet", seed=0):
    cfg = RunConfig(architecture="lenet", arm=arm, epochs=3, seed=seed, batch_size=16)
    return create_state(cfg, (1, 28, 28), 10)


def tiny_data(n=32, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 1, 28, 28)), rng.integers(0, 10, n)


class TestContainer:
    def test_roundtrip(self):
        arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([2**64 - 1], np.uint64),
                  "c": np.array(7, np.int64)}
        data = write_container(KIND_PACKED, {"x": [1, 2]}, [("batchnorm", "0", arrays)])
        kind, desc, recs = read_container(data)
        assert kind == KIND_PACKED and desc == {"x": [1, 2]}
        (rk, name, got), = recs
        assert (rk, name) == ("batchnorm", "0")
        for k in arrays:
            assert got[k].dtype == arrays[k].dtype and np.array_equal(got[k], arrays[k])

    def test_header_layout(self):
        data = write_container(KIND_CHECKPOINT, {}, [])
        assert data[:4] == MAGIC
        assert struct.unpack_from("<H", data, 4)[0] == 1
        assert data[6] == KIND_CHECKPOINT
        (n,) = struct.unpack_from("<I", data, 7)
        assert json.loads(data[11 : 11 + n]) == {}

    def test_bad_magic(self):
        data = b"XXXX" + write_container(KIND_PACKED, {}, [])[4:]
        with pytest.raises(FormatError, match="magic.*offset 0"):
            read_container(data)

    def test_bad_version(self):
        data = bytearray(write_container(KIND_PACKED, {}, []))
        data[4] = 9
        with pytest.raises(FormatError, match="version"):
            read_container(bytes(data))

    def test_truncated(self):
        data = write_container(KIND_PACKED, {}, [("flatten", "3", {"a": np.ones(10)})])
        with pytest.raises(FormatError, match="truncated") as info:
            read_container(data[:-5])
        assert info.value.offset is not None

    def test_trailing_bytes(self):
        data = write_container(KIND_PACKED, {}, []) + b"\0"
        with pytest.raises(FormatError, match="trailing"):
            read_container(data)

    def test_wrong_kind(self):
        with pytest.raises(FormatError):
            read_container(write_container(KIND_PACKED, {}, []), expected_kind=KIND_CHECKPOINT)

    def test_unknown_tag(self):
        data = bytearray(write_container(KIND_PACKED, {}, [("flatten", "x", {})]))
        data[data.index(b"\x01\x00x") - 1] = 200
        with pytest.raises(FormatError, match="tag"):
            read_container(bytes(data))

    def test_unsupported_dtype(self):
        with pytest.raises(FormatError):
            write_container(KIND_PACKED, {}, [("flatten", "x", {"a": np.ones(2, np.complex64)})])

    def test_file_kind(self, tmp_path):
        p = tmp_path / "m.irbn"
        p.write_bytes(write_container(KIND_CHECKPOINT, {}, []))
        assert file_kind(p) == KIND_CHECKPOINT
        (tmp_path / "junk").write_bytes(b"nope")
        with pytest.raises(FormatError):
            file_kind(tmp_path / "junk")


class TestRngState:
    def test_roundtrip_continues_stream(self):
        rng = make_rng(5)
        rng.standard_normal(7)
        state = json.loads(json.dumps(rng_state_to_json(rng)))
        clone = rng_from_json(state)
        assert np.array_equal(rng.standard_normal(20), clone.standard_normal(20))


class TestCheckpoint:
    def test_bytes_stable_and_resume_exact(self):
        x, y = tiny_data()
        st = tiny_state()
        train_epoch(st, x, y)
        data = checkpoint_bytes(st)
        resumed = checkpoint_from_bytes(data)
        assert checkpoint_bytes(resumed) == data
        train_epoch(st, x, y)
        train_epoch(resumed, x, y)
        assert checkpoint_bytes(st) == checkpoint_bytes(resumed)

    def test_self_describing(self, tmp_path):
        st = tiny_state("libra_no_shift")
        path = save_checkpoint(st, tmp_path / "c.irbn")
        packed, state = load_any(path)
        assert state.meta["arm"] == "libra_no_shift"
        assert state.model.quantizer == "libra_no_shift"
        assert state.estimator == "ste_clip"
        x, _ = tiny_data(4)
        np.testing.assert_allclose(predict_logits(state.model, x), predict_logits(st.model, x), atol=0)

    def test_full_precision_arm(self):
        st = tiny_state("full_precision")
        back = checkpoint_from_bytes(checkpoint_bytes(st))
        assert not back.model.binary_layers()

    def test_truncated_checkpoint(self):
        data = checkpoint_bytes(tiny_state())
        with pytest.raises(FormatError):
            checkpoint_from_bytes(data[: len(data) // 2])


class TestPackedFile:
    def test_roundtrip_float32(self, tmp_path):
        st = tiny_state()
        x, y = tiny_data()
        train_epoch(st, x, y)
        pm = export_model(st.model, np.float32, metadata={"arm": "irnet"})
        data = packed_bytes(pm)
        back = packed_from_bytes(data)
        assert packed_bytes(back) == data
        assert back.metadata == {"arm": "irnet"}
        t1, t2 = {}, {}
        assert np.array_equal(packed_infer(pm, x, trace=t1), packed_infer(back, x, trace=t2))
        for k in t1:
            assert np.array_equal(t1[k], t2[k])
        save_packed(back, tmp_path / "m.irbn")
        assert file_kind(tmp_path / "m.irbn") == KIND_PACKED

    def test_float32_close_to_float64(self):
        st = tiny_state()
        x, y = tiny_data()
        train_epoch(st, x, y)
        a = packed_infer(export_model(st.model, np.float64), x)
        b = packed_infer(export_model(st.model, np.float32), x)
        assert np.max(np.abs(a - b)) < 1e-3

    def test_packed_is_smaller(self):
        st = tiny_state()
        assert len(packed_bytes(export_model(st.model, np.float32))) * 10 < len(checkpoint_bytes(st))

    def test_record_kind_mismatch(self):
        pm = export_model(tiny_state().model, np.float32)
        pm.specs[1].kind = "avgpool"
        data = packed_bytes(pm)
        with pytest.raises(FormatError, match="kind"):
            packed_from_bytes(data)
