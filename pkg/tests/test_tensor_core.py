import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from symcodec.errors import FormatError, InvariantError, ShapeError
from symcodec.tensor_core import (
    ModelBundle,
    WeightTensor,
    bundle_from_bytes,
    bundle_to_bytes,
    frobenius_distance,
    load_bundle,
    save_bundle,
)


def test_round_trip_single_layer(tmp_path):
    bundle = ModelBundle(((0, WeightTensor.from_flat(1, 1, 3, np.arange(9))),))
    path = tmp_path / "one.symw"
    save_bundle(bundle, path)
    back = load_bundle(path)
    assert len(back) == 1
    lid, w = back.layers[0]
    assert lid == 0 and w == bundle.layers[0][1]
    assert path.read_bytes() == bundle_to_bytes(back)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.symw"
    path.write_bytes(b"XXXX" + bundle_to_bytes(ModelBundle())[4:])
    with pytest.raises(FormatError):
        load_bundle(path)


def test_bad_version():
    buf = bytearray(bundle_to_bytes(ModelBundle()))
    buf[4] = 7
    with pytest.raises(FormatError):
        bundle_from_bytes(bytes(buf))


def test_truncated():
    buf = bundle_to_bytes(ModelBundle(((3, WeightTensor.zeros(2, 2, 3)),)))
    with pytest.raises(FormatError):
        bundle_from_bytes(buf[:-1])


def test_even_k_rejected():
    with pytest.raises(InvariantError):
        WeightTensor(np.zeros((1, 1, 4, 4)))


def test_even_k_on_disk():
    good = bundle_to_bytes(ModelBundle(((0, WeightTensor.zeros(1, 1, 3)),)))
    # patch k (offset 10 file header + 10 into layer header) to 4 and pad data
    buf = bytearray(good[:20]) + (4).to_bytes(2, "little") + bytes(16 * 4)
    with pytest.raises(InvariantError):
        bundle_from_bytes(bytes(buf))


def test_empty_bundle(tmp_path):
    path = tmp_path / "empty.symw"
    save_bundle(ModelBundle(), path)
    raw = path.read_bytes()
    assert raw == b"SYMW" + (1).to_bytes(2, "little") + (0).to_bytes(4, "little")
    assert len(load_bundle(path)) == 0


def test_layers_in_id_order():
    a, b = WeightTensor.zeros(1, 1, 1), WeightTensor.from_flat(1, 1, 1, [2.0])
    raw = bundle_to_bytes(ModelBundle(((1, a), (5, b))))
    assert int.from_bytes(raw[10:12], "little") == 1
    assert int.from_bytes(raw[10 + 12 + 4 : 10 + 12 + 6], "little") == 5
    with pytest.raises(InvariantError):
        ModelBundle(((5, b), (1, a)))
    with pytest.raises(InvariantError):
        ModelBundle(((1, a), (1, b)))


def test_payload_section_size():
    raw = bundle_to_bytes(ModelBundle(((0, WeightTensor.zeros(2, 3, 5)),)))
    assert len(raw) - 10 - 12 == 600


def test_nan_rejected():
    with pytest.raises(InvariantError):
        WeightTensor.from_flat(1, 1, 1, [np.nan])


def test_frobenius_examples():
    z, o = WeightTensor.zeros(1, 1, 3), WeightTensor.from_flat(1, 1, 3, np.ones(9))
    assert frobenius_distance(o, o) == 0.0
    assert frobenius_distance(z, o) == 3.0
    with pytest.raises(ShapeError):
        frobenius_distance(z, WeightTensor.zeros(1, 1, 5))


def test_tensor_is_immutable():
    w = WeightTensor.zeros(1, 1, 3)
    with pytest.raises(ValueError):
        w.data[0, 0, 0, 0] = 1.0


finite32 = st.floats(-1e6, 1e6, width=32, allow_nan=False)


@st.composite
def bundles(draw):
    n = draw(st.integers(0, 3))
    layers = []
    lid = draw(st.integers(0, 10))
    for _ in range(n):
        c_out, c_in = draw(st.integers(1, 3)), draw(st.integers(1, 3))
        k = draw(st.sampled_from([1, 3, 5]))
        data = draw(hnp.arrays(np.float32, (c_out, c_in, k, k), elements=finite32))
        layers.append((lid, WeightTensor(data)))
        lid += draw(st.integers(1, 100))
    return ModelBundle(tuple(layers))


@settings(max_examples=50, deadline=None)
@given(bundles())
def test_round_trip_property(bundle):
    back = bundle_from_bytes(bundle_to_bytes(bundle))
    assert [lid for lid, _ in back] == [lid for lid, _ in bundle]
    assert all(a == b for (_, a), (_, b) in zip(back, bundle))
    assert bundle_to_bytes(back) == bundle_to_bytes(bundle)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_frobenius_metric_axioms(data):
    shape = (2, 1, 3, 3)
    a, b, c = (WeightTensor(data.draw(hnp.arrays(np.float32, shape, elements=st.floats(-100, 100, width=32)))) for _ in range(3))
    assert frobenius_distance(a, b) == pytest.approx(frobenius_distance(b, a))
    assert frobenius_distance(a, c) <= frobenius_distance(a, b) + frobenius_distance(b, c) + 1e-9
