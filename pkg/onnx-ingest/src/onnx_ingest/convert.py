"""ONNX graph -> IR-JSON conversion.

Maps Conv/Gemm/Add/Relu onto the toolchain node kinds, computes output
shapes by propagation (conv arithmetic, pooling, flatten), folds
pass-through ops (Identity, quantize/dequantize pairs) out of the
dataflow, and extracts power-of-two quantization scale exponents where
the model carries them.  Weight payloads are not copied: the IR records
sizes only (weights 1 byte/element, biases 4 bytes/element).
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

from .wire import WireError, parse_model

DEFAULT_SCALE = 7          # exponent used when the model carries no scales

_PASSTHROUGH = {"Identity", "Cast", "Dropout"}
_SUPPORTED = {"Conv": "conv", "Gemm": "fc", "Add": "add", "Relu": "relu"}
# ops we can place in the graph as host-side work, with a computed shape
_KNOWN_OTHER = {"MaxPool": "maxpool", "AveragePool": "avgpool",
                "GlobalAveragePool": "globalpool", "Flatten": "flatten",
                "Softmax": "softmax"}


class UnreadableModel(Exception):
    """The input file is missing or is not a parseable ONNX model."""


class SchemaEmitError(Exception):
    """The graph cannot be expressed in the IR schema (e.g. no shapes)."""


@dataclass
class ConversionReport:
    op_histogram: dict = field(default_factory=dict)
    converted: list = field(default_factory=list)        # node ids
    unsupported: list = field(default_factory=list)      # [{"id", "op"}]
    total_weight_bytes: int = 0
    scale_exponents: dict = field(default_factory=dict)  # node id -> exp
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "op_histogram": dict(sorted(self.op_histogram.items())),
            "converted": list(self.converted),
            "unsupported": list(self.unsupported),
            "total_weight_bytes": self.total_weight_bytes,
            "scale_exponents": dict(sorted(self.scale_exponents.items())),
            "warnings": list(self.warnings),
        }


def pow2_exponent(scale: float) -> tuple[int, bool]:
    """Right-shift exponent for a scale factor; (exponent, was_exact)."""
    if scale <= 0:
        return DEFAULT_SCALE, False
    exp = round(-math.log2(scale))
    exact = math.isclose(2.0 ** -exp, scale, rel_tol=1e-6)
    return max(0, min(63, exp)), exact


def _conv_spatial(in_hw, node):
    """Output (h, w) of a Conv/MaxPool/AveragePool node."""
    kh, kw = node.attr_ints("kernel_shape", (1, 1))
    sh, sw = (node.attr_ints("strides", (1, 1)) + [1, 1])[:2]
    dh, dw = (node.attr_ints("dilations", (1, 1)) + [1, 1])[:2]
    pads = node.attr_ints("pads", (0, 0, 0, 0))
    pt, pl, pb, pr = (pads + [0] * 4)[:4]
    ceil_mode = node.attr_int("ceil_mode", 0)
    rnd = math.ceil if ceil_mode else math.floor
    h, w = in_hw
    oh = int(rnd((h + pt + pb - dh * (kh - 1) - 1) / sh)) + 1
    ow = int(rnd((w + pl + pr - dw * (kw - 1) - 1) / sw)) + 1
    return oh, ow


def _sanitize(name: str, fallback: str, used: set) -> str:
    nid = name.strip("/").replace("/", "_").replace(".", "_").lower() \
        or fallback
    if nid in used:
        k = 2
        while f"{nid}_{k}" in used:
            k += 1
        nid = f"{nid}_{k}"
    used.add(nid)
    return nid


def convert_bytes(data: bytes, default_scale: int = DEFAULT_SCALE):
    """Serialized ONNX model -> (ir_dict, ConversionReport)."""
    try:
        model = parse_model(data)
    except WireError as exc:
        raise UnreadableModel(str(exc)) from exc
    g = model.graph
    report = ConversionReport()

    consts = dict(g.initializers)
    for n in g.nodes:
        if n.op_type == "Constant" and n.outputs:
            a = n.attributes.get("value")
            if a is not None and a.t is not None:
                a.t.name = n.outputs[0]
                consts[n.outputs[0]] = a.t

    # shapes of data tensors, without the batch dimension
    shapes = {}
    for vi in list(g.inputs) + list(g.value_infos) + list(g.outputs):
        if vi.name in consts or not vi.shape:
            continue
        shape = vi.shape[1:] if len(vi.shape) > 1 else vi.shape
        if all(d > 0 for d in shape):
            shapes[vi.name] = shape
    graph_inputs = [vi.name for vi in g.inputs if vi.name not in consts]

    alias = {}                 # folded tensor name -> surviving name

    def resolve(name):
        while name in alias:
            name = alias[name]
        return name

    # scale exponent attached to a tensor by a Quantize/DequantizeLinear
    tensor_scale = {}

    def note_scale(node):
        if len(node.inputs) < 2 or not node.outputs:
            return
        t = consts.get(resolve(node.inputs[1]))
        if t is None:
            return
        try:
            s = t.scalar_float()
        except WireError:
            return
        exp, exact = pow2_exponent(s)
        if not exact:
            msg = (f"scale {s:g} on {node.outputs[0]!r} is not a power of "
                   f"two; rounded to 2^-{exp}")
            report.warnings.append(msg)
            warnings.warn(msg, stacklevel=3)
        # record under the surviving tensor name so the pass-through alias
        # of the quantize/dequantize pair does not hide it
        tensor_scale[resolve(node.inputs[0])] = exp
        tensor_scale[node.outputs[0]] = exp

    emitted = []               # (id, op, dims, wbytes, bbytes, scale_exp|None)
    producers = {}             # tensor name -> emitting node id
    node_inputs = {}           # node id -> [tensor names]
    used_ids = set()

    for idx, n in enumerate(g.nodes):
        report.op_histogram[n.op_type] = \
            report.op_histogram.get(n.op_type, 0) + 1
        if n.op_type == "Constant":
            continue
        if n.op_type in ("QuantizeLinear", "DequantizeLinear"):
            if n.outputs and n.inputs:
                note_scale(n)
                alias[n.outputs[0]] = resolve(n.inputs[0])
            continue
        if n.op_type in _PASSTHROUGH:
            if n.outputs and n.inputs:
                alias[n.outputs[0]] = resolve(n.inputs[0])
            continue

        data_ins = [resolve(i) for i in n.inputs if i and
                    resolve(i) not in consts]
        out = n.outputs[0] if n.outputs else f"__out_{idx}"
        nid = _sanitize(n.name, f"{n.op_type.lower()}_{idx}", used_ids)

        def in_shape(k=0):
            if k < len(data_ins) and data_ins[k] in shapes:
                return shapes[data_ins[k]]
            raise SchemaEmitError(
                f"unknown shape for input of node {nid!r} ({n.op_type})")

        wbytes = bbytes = 0
        if n.op_type == "Conv":
            w = consts.get(resolve(n.inputs[1])) if len(n.inputs) > 1 else None
            if w is None or len(w.dims) != 4:
                raise SchemaEmitError(f"conv {nid!r} has no 4-d weight")
            oc, ic, kh, kw = w.dims
            ish = in_shape()
            oh, ow = _conv_spatial(ish[-2:], n)
            dims = [oc, ic, kh, kw, oh, ow]
            wbytes = w.num_elements
            if len(n.inputs) > 2 and resolve(n.inputs[2]) in consts:
                bbytes = 4 * consts[resolve(n.inputs[2])].num_elements
            op = "conv"
            shapes[out] = [oc, oh, ow]
        elif n.op_type == "Gemm":
            w = consts.get(resolve(n.inputs[1])) if len(n.inputs) > 1 else None
            if w is None or len(w.dims) != 2:
                raise SchemaEmitError(f"gemm {nid!r} has no 2-d weight")
            out_f, in_f = w.dims if n.attr_int("transB", 0) \
                else (w.dims[1], w.dims[0])
            dims = [out_f, in_f]
            wbytes = w.num_elements
            if len(n.inputs) > 2 and resolve(n.inputs[2]) in consts:
                bbytes = 4 * consts[resolve(n.inputs[2])].num_elements
            op = "fc"
            shapes[out] = [out_f]
        elif n.op_type in ("Add", "Relu"):
            dims = list(in_shape())
            op = _SUPPORTED[n.op_type]
            shapes[out] = dims
        elif n.op_type in ("MaxPool", "AveragePool"):
            c, h, w_ = in_shape()
            oh, ow = _conv_spatial((h, w_), n)
            dims = [c, oh, ow]
            op = _KNOWN_OTHER[n.op_type]
            shapes[out] = dims
        elif n.op_type == "GlobalAveragePool":
            c = in_shape()[0]
            dims = [c, 1, 1]
            op = "globalpool"
            shapes[out] = dims
        elif n.op_type == "Flatten":
            dims = [math.prod(in_shape())]
            op = "flatten"
            shapes[out] = dims
        else:
            # best effort: known output shape, else same as first input
            dims = list(shapes.get(out) or in_shape())
            op = _KNOWN_OTHER.get(n.op_type, "other")
            shapes[out] = dims

        if n.op_type in _SUPPORTED:
            report.converted.append(nid)
        else:
            report.unsupported.append({"id": nid, "op": n.op_type})
        report.total_weight_bytes += wbytes + bbytes

        emitted.append((nid, op, dims, wbytes, bbytes, out))
        producers[out] = nid
        node_inputs[nid] = data_ins

    if not emitted:
        raise SchemaEmitError("model contains no convertible nodes")

    nodes, edges = [], []
    for nid, op, dims, wbytes, bbytes, out in emitted:
        # output-side quantize nodes appear after their producer, so the
        # scale lookup has to run once the whole graph is scanned
        scale_exp = tensor_scale.get(resolve(out)) \
            if op in ("conv", "fc") else None
        if scale_exp is not None:
            report.scale_exponents[nid] = scale_exp
        q = scale_exp if scale_exp is not None else \
            (default_scale if op in ("conv", "fc") else 0)
        nodes.append({"id": nid, "op": op, "dims": [int(d) for d in dims],
                      "weight_bytes": int(wbytes), "bias_bytes": int(bbytes),
                      "quant_scale": int(q)})
        for tin in node_inputs[nid]:
            src = producers.get(tin)
            if src is None and tin not in graph_inputs:
                raise SchemaEmitError(
                    f"input {tin!r} of node {nid!r} has no producer")
            if tin not in shapes:
                raise SchemaEmitError(f"no shape for tensor {tin!r}")
            edges.append({"src": src, "dst": nid,
                          "tensor_shape": [int(d) for d in shapes[tin]]})

    ir = {"schema_version": 1, "nodes": nodes, "edges": edges}
    return ir, report


def convert(onnx_path, out_ir_path, report_path=None,
            default_scale: int = DEFAULT_SCALE) -> ConversionReport:
    """Convert an ONNX file to IR-JSON; optionally write the report."""
    try:
        with open(onnx_path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UnreadableModel(str(exc)) from exc
    ir, report = convert_bytes(data, default_scale=default_scale)
    with open(out_ir_path, "w") as fh:
        json.dump(ir, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return report
