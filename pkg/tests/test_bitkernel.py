import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irnet.bitkernel.export import export_model, model_size_report, packed_infer
from irnet.bitkernel.gemm import (
    apply_shifts,
    packed_gemm,
    popcount_hw,
    popcount_portable,
    xnor_popcount_dot,
    xnor_popcount_matrix,
)
from irnet.bitkernel.packing import PackedBitTensor, pack, pack_signs, tail_mask, unpack
from irnet.errors import DimensionError, DomainError, IRNetError
from irnet.nn.layers import Context
from irnet.nn.model import LayerSpec, Model, architecture_specs
from irnet.nn.train import predict_logits
from irnet.tensor import make_rng


def pm1(rng, shape):
    return np.where(rng.random(shape) < 0.5, -1.0, 1.0)


class TestPacking:
    def test_lsb_first(self):
        p = pack([1, -1, 1])
        assert p.logical_len == 3 and p.word_count == 1
        assert int(p.words[0, 0]) == 0b101

    def test_roundtrip(self):
        x = pm1(np.random.default_rng(0), 1000)
        assert np.array_equal(unpack(pack(x))[0], x)

    def test_exact_word(self):
        p = pack(np.ones(64))
        assert p.word_count == 1 and int(p.words[0, 0]) == 2**64 - 1

    def test_padding_zero(self):
        p = pack(np.ones(70))
        assert p.word_count == 2 and int(p.words[0, 1]) == 0b111111

    def test_non_binary(self):
        with pytest.raises(DomainError):
            pack([1.0, 0.5])
        with pytest.raises(DomainError):
            pack([1.0, 0.0])

    def test_pack_signs_matches_pack(self):
        x = np.random.default_rng(1).normal(size=(5, 77))
        x[0, 3] = 0.0
        assert np.array_equal(pack_signs(x).words, pack(np.where(x >= 0, 1, -1)).words)

    def test_zero_entries_absent(self):
        p = pack([1, 0, -1], allow_zero=True)
        assert p.valid is not None
        assert unpack(p)[0].tolist() == [1.0, 0.0, -1.0]

    def test_tail_mask(self):
        assert int(tail_mask(3)[0]) == 0b111
        assert int(tail_mask(64)[0]) == 2**64 - 1
        assert tail_mask(65).shape == (2,)

    @given(st.lists(st.sampled_from([-1.0, 1.0]), min_size=1, max_size=300))
    def test_roundtrip_property(self, xs):
        x = np.array(xs)
        assert np.array_equal(unpack(pack(x))[0], x)


class TestDot:
    def test_hand_example(self):
        assert xnor_popcount_dot(pack([1, -1, 1]), pack([1, 1, -1])) == -1

    def test_self_dot(self):
        a = pack(pm1(np.random.default_rng(0), 64))
        assert xnor_popcount_dot(a, a) == 64

    def test_antipodal(self):
        x = pm1(np.random.default_rng(1), 129)
        assert xnor_popcount_dot(pack(x), pack(-x)) == -129

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            xnor_popcount_dot(pack([1, 1]), pack([1, 1, 1]))

    def test_exact_against_float(self):
        rng = np.random.default_rng(2)
        for n in list(range(1, 200)) + [255, 256, 257, 300]:
            a, b = pm1(rng, n), pm1(rng, n)
            assert xnor_popcount_dot(pack(a), pack(b)) == int(a @ b)

    def test_garbage_padding_is_masked(self):
        rng = np.random.default_rng(3)
        for n in (1, 7, 63, 65, 100, 191):
            a, b = pm1(rng, n), pm1(rng, n)
            pa, pb = pack(a), pack(b)
            rem = n % 64
            wa, wb = pa.words.copy(), pb.words.copy()
            if rem:
                junk = np.uint64(rng.integers(0, 2**63)) << np.uint64(rem)
                wa[0, -1] |= junk
                wb[0, -1] |= ~junk & ~tail_mask(n)[-1]
            ca, cb = PackedBitTensor(wa, n), PackedBitTensor(wb, n)
            assert xnor_popcount_dot(ca, cb) == int(a @ b)
            assert xnor_popcount_matrix(ca, cb)[0, 0] == int(a @ b)

    def test_popcount_backends_agree(self):
        w = np.random.default_rng(4).integers(0, 2**63, size=1000, dtype=np.uint64)
        w = w | (w << np.uint64(1))
        assert np.array_equal(popcount_hw(w), popcount_portable(w))
        ref = np.array([bin(int(v)).count("1") for v in w])
        assert np.array_equal(popcount_portable(w), ref)

    def test_dot_with_portable_popcount(self):
        rng = np.random.default_rng(5)
        a, b = pm1(rng, 150), pm1(rng, 150)
        assert xnor_popcount_dot(pack(a), pack(b), popcount_portable) == int(a @ b)


class TestGemm:
    def test_matches_float_oracle(self):
        rng = np.random.default_rng(6)
        w, a = pm1(rng, (16, 128)), pm1(rng, (128, 9))
        s = rng.integers(-3, 4, size=16)
        got = packed_gemm(pack(w), pack(a.T), s)
        assert np.array_equal(got, (w @ a) * np.ldexp(1.0, s)[:, None])

    def test_unit_case(self):
        rng = np.random.default_rng(7)
        w, a = pm1(rng, (1, 70)), pm1(rng, (1, 70))
        d = xnor_popcount_dot(pack(w), pack(a))
        assert packed_gemm(pack(w), pack(a), [2])[0, 0] == d * 4
        assert packed_gemm(pack(w), pack(a), [0])[0, 0] == d

    def test_backends_agree_with_absent_entries(self):
        rng = np.random.default_rng(8)
        w = pm1(rng, (5, 90))
        a = pm1(rng, (7, 90)) * (rng.random((7, 90)) < 0.8)
        pw, pa = pack(w), pack(a, allow_zero=True)
        ref = (w @ a.T).astype(np.int64)
        assert np.array_equal(xnor_popcount_matrix(pw, pa, "numba"), ref)
        assert np.array_equal(xnor_popcount_matrix(pw, pa, "numpy"), ref)
        full = pack(pm1(rng, (7, 90)))
        assert np.array_equal(xnor_popcount_matrix(pw, full, "numba"), xnor_popcount_matrix(pw, full, "numpy"))

    def test_dimension_checks(self):
        rng = np.random.default_rng(9)
        with pytest.raises(DimensionError):
            packed_gemm(pack(pm1(rng, (2, 8))), pack(pm1(rng, (2, 9))))
        with pytest.raises(DimensionError):
            packed_gemm(pack(pm1(rng, (2, 8))), pack(pm1(rng, (3, 8))), [0, 0, 0])

    def test_shift_exactness(self):
        dots = np.arange(-50, 51, dtype=np.int64).reshape(1, -1).repeat(61, axis=0)
        shifts = np.arange(-30, 31)
        out = apply_shifts(dots, shifts)
        back = np.ldexp(out, -shifts[:, None])
        assert np.array_equal(back, dots.astype(float))

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(1, 9), n=st.integers(1, 200), cols=st.integers(1, 9), seed=st.integers(0, 2**16))
    def test_gemm_property(self, m, n, cols, seed):
        rng = np.random.default_rng(seed)
        w, a = pm1(rng, (m, n)), pm1(rng, (cols, n))
        assert np.array_equal(xnor_popcount_matrix(pack(w), pack(a)), (w @ a.T).astype(np.int64))


def small_cnn_specs():
    return [
        LayerSpec("fp_conv", 1, 8, 3, 1, 1), LayerSpec("batchnorm", 8), LayerSpec("hardtanh"),
        LayerSpec("binary_conv", 8, 8, 3, 1, 1), LayerSpec("maxpool", kernel=2),
        LayerSpec("batchnorm", 8), LayerSpec("hardtanh"),
        LayerSpec("residual", 8, 16, stride=2, body=[
            LayerSpec("binary_conv", 8, 16, 3, 2, 1), LayerSpec("batchnorm", 16), LayerSpec("hardtanh"),
            LayerSpec("binary_conv", 16, 16, 3, 1, 1), LayerSpec("batchnorm", 16)]),
        LayerSpec("hardtanh"), LayerSpec("flatten"),
        LayerSpec("binary_linear", 16 * 2 * 2, 12), LayerSpec("batchnorm", 12), LayerSpec("hardtanh"),
        LayerSpec("fp_linear", 12, 4),
    ]


def warmed_model(specs, shape, seed=0):
    m = Model(specs, shape, make_rng(seed))
    rng = np.random.default_rng(seed)
    for _ in range(3):
        m.forward(rng.normal(size=(16,) + shape), Context(training=True))
    return m


class TestExport:
    def test_cross_path_equivalence(self):
        m = warmed_model(small_cnn_specs(), (1, 8, 8))
        x = np.random.default_rng(1).normal(size=(40, 1, 8, 8))
        t_train, t_packed = {}, {}
        ref = predict_logits(m, x, trace=t_train)
        got = packed_infer(export_model(m), x, trace=t_packed)
        assert set(t_train) == set(t_packed) == {l.name for l in m.binary_layers()}
        for k in t_train:
            assert np.array_equal(t_train[k], t_packed[k]), k
        assert np.max(np.abs(ref - got)) <= 1e-6
        assert np.array_equal(ref.argmax(1), got.argmax(1))

    def test_binary_layers_store_no_floats(self):
        pm = export_model(warmed_model(small_cnn_specs(), (1, 8, 8)))
        for layer in pm.iter_layers():
            if layer.kind.startswith("binary"):
                assert layer.arrays == {}
                assert layer.weights.words.dtype == np.uint64
                assert layer.shifts.dtype == np.int64

    def test_zero_input_deterministic(self):
        pm = export_model(warmed_model(small_cnn_specs(), (1, 8, 8)))
        z = np.zeros((3, 1, 8, 8))
        a, b = packed_infer(pm, z), packed_infer(pm, z)
        assert np.array_equal(a, b)
        assert np.array_equal(a[0], a[1])

    def test_input_shape_checked(self):
        pm = export_model(warmed_model(small_cnn_specs(), (1, 8, 8)))
        with pytest.raises(DimensionError):
            packed_infer(pm, np.zeros((1, 1, 9, 9)))

    def test_degenerate_layer(self):
        m = warmed_model(small_cnn_specs(), (1, 8, 8))
        m.layers[3].params["weight"][2] = 0.5
        with pytest.raises(IRNetError):
            export_model(m)

    def test_full_precision_arm_exports(self):
        m = Model(small_cnn_specs(), (1, 8, 8), make_rng(0), binary=False)
        x = np.random.default_rng(2).normal(size=(5, 1, 8, 8))
        pm = export_model(m)
        assert all(l.weights is None for l in pm.iter_layers())
        np.testing.assert_allclose(packed_infer(pm, x), predict_logits(m, x), atol=1e-12)

    def test_resnet20_size(self):
        m = Model(architecture_specs("resnet20", (3, 32, 32), 10), (3, 32, 32), make_rng(0))
        rep = model_size_report(export_model(m))
        binary = sum(l.params["weight"].size for l in m.binary_layers())
        assert rep["binary_params"] == binary
        # every binary filter row is packed into whole 64-bit words
        words = sum(l.out_channels * -(-l.params["weight"][0].size // 64) for l in m.binary_layers())
        assert rep["packed_weight_bytes"] == 8 * words
        assert rep["packed_weight_bytes"] <= binary / 8 * 1.15
        assert 27 <= rep["binary_compression"] <= 32
