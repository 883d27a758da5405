"""Wire-format reader on hand-encoded model bytes."""

import pytest

import protowrite as pw
from onnx_ingest.wire import WireError, parse_model, read_varint


def test_varint_round_trip():
    for v in (0, 1, 127, 128, 300, 2 ** 32, 2 ** 60):
        got, pos = read_varint(pw.varint(v), 0)
        assert got == v
        assert pos == len(pw.varint(v))


def test_truncated_varint_raises():
    with pytest.raises(WireError):
        read_varint(b"\x80\x80", 0)


def test_model_without_graph_raises():
    with pytest.raises(WireError):
        parse_model(pw.field_varint(1, 8))


def test_garbage_raises():
    with pytest.raises(WireError):
        parse_model(b"\xff" * 16)


def test_hand_encoded_graph_parses():
    conv = pw.node("Conv", ["x", "w"], ["y"], name="c0",
                   attrs=[pw.attr_ints("kernel_shape", [3, 3]),
                          pw.attr_ints("pads", [1, 1, 1, 1]),
                          pw.attr_ints("strides", [1, 1])])
    g = pw.graph(
        nodes=[conv],
        initializers=[pw.tensor("w", [4, 3, 3, 3],
                                floats=[0.0] * (4 * 3 * 3 * 3))],
        inputs=[pw.value_info("x", [1, 3, 8, 8])],
        outputs=[pw.value_info("y", [1, 4, 8, 8])],
    )
    m = parse_model(pw.model(g))
    assert m.ir_version == 8
    assert len(m.graph.nodes) == 1
    n = m.graph.nodes[0]
    assert n.op_type == "Conv"
    assert n.inputs == ["x", "w"]
    assert n.attr_ints("kernel_shape") == [3, 3]
    assert m.graph.initializers["w"].dims == [4, 3, 3, 3]
    assert m.graph.initializers["w"].num_elements == 108
    assert m.graph.inputs[0].shape == [1, 3, 8, 8]
