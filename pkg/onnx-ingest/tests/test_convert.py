"""Converter behavior on small models."""

import json

import pytest

import protowrite as pw
from onnx_ingest import (
    SchemaEmitError,
    UnreadableModel,
    convert,
    convert_bytes,
    pow2_exponent,
)


def _toy_two_conv(export_onnx):
    torch = pytest.importorskip("torch")
    m = torch.nn.Sequential(
        torch.nn.Conv2d(3, 8, 3, padding=1),
        torch.nn.Conv2d(8, 4, 3, padding=1),
    )
    return export_onnx(m, (1, 3, 16, 16), "two_conv")


def test_two_layer_conv_gives_two_nodes(export_onnx, tmp_path):
    path = _toy_two_conv(export_onnx)
    out = tmp_path / "toy.ir.json"
    report = convert(path, out)
    ir = json.loads(out.read_text())
    assert [n["op"] for n in ir["nodes"]] == ["conv", "conv"]
    assert len(report.converted) == 2
    assert report.unsupported == []
    a, b = ir["nodes"]
    assert a["dims"] == [8, 3, 3, 3, 16, 16]
    assert b["dims"] == [4, 8, 3, 3, 16, 16]
    assert a["weight_bytes"] == 8 * 3 * 3 * 3
    assert a["bias_bytes"] == 4 * 8
    # edges: input -> conv1 -> conv2, shapes carried through
    assert ir["edges"][0]["src"] is None
    assert ir["edges"][0]["tensor_shape"] == [3, 16, 16]
    assert ir["edges"][1]["tensor_shape"] == [8, 16, 16]


def test_unsupported_op_listed_and_emitted_as_other(export_onnx, tmp_path):
    torch = pytest.importorskip("torch")
    m = torch.nn.Sequential(
        torch.nn.Conv2d(3, 4, 3, padding=1),
        torch.nn.Sigmoid(),
    )
    path = export_onnx(m, (1, 3, 8, 8), "conv_sigmoid")
    out = tmp_path / "sig.ir.json"
    report = convert(path, out)
    ir = json.loads(out.read_text())
    assert any(u["op"] == "Sigmoid" for u in report.unsupported)
    other = [n for n in ir["nodes"] if n["op"] == "other"]
    assert len(other) == 1
    assert other[0]["dims"] == [4, 8, 8]
    # every emitted node is in exactly one of converted / unsupported
    ids = {n["id"] for n in ir["nodes"]}
    conv_ids = set(report.converted)
    unsup_ids = {u["id"] for u in report.unsupported}
    assert conv_ids | unsup_ids == ids
    assert conv_ids & unsup_ids == set()


def test_conversion_is_deterministic(export_onnx, tmp_path):
    path = _toy_two_conv(export_onnx)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    convert(path, p1)
    convert(path, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_unreadable_model(tmp_path):
    with pytest.raises(UnreadableModel):
        convert(tmp_path / "missing.onnx", tmp_path / "out.json")
    bad = tmp_path / "bad.onnx"
    bad.write_bytes(b"\xff" * 64)
    with pytest.raises(UnreadableModel):
        convert(bad, tmp_path / "out.json")


def test_pow2_exponent():
    assert pow2_exponent(2.0 ** -7) == (7, True)
    assert pow2_exponent(2.0 ** -1) == (1, True)
    assert pow2_exponent(1.0) == (0, True)
    exp, exact = pow2_exponent(0.1)          # nearest is 2^-3 = 0.125
    assert (exp, exact) == (3, False)


def _qdq_conv_model(w_scale, act_scale):
    """Conv with dequantized weights and a quantized output."""
    n_dq_w = pw.node("DequantizeLinear", ["w_q", "w_scale"], ["w"], name="dqw")
    conv = pw.node("Conv", ["x", "w"], ["y"], name="c0",
                   attrs=[pw.attr_ints("kernel_shape", [3, 3]),
                          pw.attr_ints("pads", [1, 1, 1, 1])])
    n_q = pw.node("QuantizeLinear", ["y", "y_scale"], ["y_q"], name="qy")
    g = pw.graph(
        nodes=[n_dq_w, conv, n_q],
        initializers=[
            pw.tensor("w_q", [4, 3, 3, 3], raw=b"\x00" * 108, data_type=3),
            pw.tensor("w_scale", [], floats=[w_scale]),
            pw.tensor("y_scale", [], floats=[act_scale]),
        ],
        inputs=[pw.value_info("x", [1, 3, 8, 8])],
        outputs=[pw.value_info("y_q", [1, 4, 8, 8])],
    )
    return pw.model(g)


def test_quant_scale_extracted_from_output_quantizer():
    ir, report = convert_bytes(_qdq_conv_model(2.0 ** -8, 2.0 ** -5))
    (conv_node,) = [n for n in ir["nodes"] if n["op"] == "conv"]
    assert conv_node["quant_scale"] == 5
    assert report.scale_exponents == {"c0": 5}
    assert report.warnings == []
    assert conv_node["weight_bytes"] == 108


def test_non_power_of_two_scale_rounds_with_warning():
    with pytest.warns(UserWarning, match="not a power of two"):
        ir, report = convert_bytes(_qdq_conv_model(2.0 ** -8, 0.1))
    (conv_node,) = [n for n in ir["nodes"] if n["op"] == "conv"]
    assert conv_node["quant_scale"] == 3     # 0.1 -> 2^-3
    assert any("not a power of two" in w for w in report.warnings)


def test_model_with_no_convertible_nodes():
    g = pw.graph(nodes=[], initializers=[],
                 inputs=[pw.value_info("x", [1, 3, 8, 8])],
                 outputs=[pw.value_info("x", [1, 3, 8, 8])])
    with pytest.raises(SchemaEmitError):
        convert_bytes(pw.model(g))


def test_cli_convert(export_onnx, tmp_path):
    from click.testing import CliRunner
    from onnx_ingest.cli import main
    path = _toy_two_conv(export_onnx)
    out = tmp_path / "cli.ir.json"
    rep = tmp_path / "cli.report.json"
    res = CliRunner().invoke(
        main, ["convert", "--in", str(path), "--out", str(out),
               "--report", str(rep)])
    assert res.exit_code == 0, res.output
    assert json.loads(out.read_text())["schema_version"] == 1
    assert json.loads(rep.read_text())["op_histogram"]["Conv"] == 2
    res2 = CliRunner().invoke(
        main, ["convert", "--in", str(tmp_path / "nope.onnx"),
               "--out", str(out)])
    assert res2.exit_code == 2
