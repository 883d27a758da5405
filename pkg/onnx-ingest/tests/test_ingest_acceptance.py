"""Acceptance: the reference ResNet-50 export converts faithfully."""

import json

import pytest

from onnx_ingest import convert


@pytest.fixture(scope="module")
def resnet_ir(resnet50_onnx, tmp_path_factory):
    out = tmp_path_factory.mktemp("ir") / "resnet50.ir.json"
    report = convert(resnet50_onnx, out)
    return json.loads(out.read_text()), report


def test_resnet50_converts_with_no_unsupported_compute_ops(resnet_ir):
    ir, report = resnet_ir
    assert report.op_histogram["Conv"] == 53
    assert report.op_histogram["Gemm"] == 1
    compute = {"Conv", "Gemm", "Add", "Relu"}
    assert [u for u in report.unsupported if u["op"] in compute] == []
    ops = [n["op"] for n in ir["nodes"]]
    assert ops.count("conv") == 53
    assert ops.count("fc") == 1
    assert ops.count("add") == 16
    assert ops.count("relu") == 49


def test_resnet50_macs_match_independent_counter(resnet_ir):
    models = pytest.importorskip("pucoord.models")
    ir, _ = resnet_ir
    macs = models.total_mac_count(ir)
    ref = models.total_mac_count(models.resnet50_ir())
    assert macs == pytest.approx(ref, rel=0.01)


def test_resnet50_ir_validates_against_primary_schema(resnet_ir):
    graph = pytest.importorskip("pucoord.graph")
    ir, _ = resnet_ir
    g = graph.ingest(ir)
    dag = graph.tile(graph.fuse(g))
    assert len([n for n in dag.nodes if not n.is_host]) == 54
