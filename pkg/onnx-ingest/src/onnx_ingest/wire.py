"""Minimal protobuf wire-format reader for ONNX model files.

Parses just the subset of the ONNX schema the converter needs (graph
topology, tensor shapes, initializer sizes, node attributes) using the
stable field numbers of the ONNX protobuf definitions.  Only reading is
implemented; nothing here depends on the protobuf runtime.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field


class WireError(ValueError):
    """Malformed protobuf bytes."""


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(buf):
            raise WireError("truncated varint")
        b = buf[pos]
        result |= (b & 0x7F) << shift
        pos += 1
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise WireError("varint too long")


def iter_fields(buf: bytes):
    """Yield (field_number, wire_type, value) over a message's bytes.

    value is an int for varint/fixed fields and a bytes slice for
    length-delimited fields.
    """
    pos = 0
    while pos < len(buf):
        tag, pos = read_varint(buf, pos)
        fno, wt = tag >> 3, tag & 7
        if wt == 0:                       # varint
            val, pos = read_varint(buf, pos)
        elif wt == 1:                     # 64-bit
            if pos + 8 > len(buf):
                raise WireError("truncated fixed64")
            val = int.from_bytes(buf[pos:pos + 8], "little")
            pos += 8
        elif wt == 2:                     # length-delimited
            ln, pos = read_varint(buf, pos)
            if pos + ln > len(buf):
                raise WireError("truncated length-delimited field")
            val = buf[pos:pos + ln]
            pos += ln
        elif wt == 5:                     # 32-bit
            if pos + 4 > len(buf):
                raise WireError("truncated fixed32")
            val = int.from_bytes(buf[pos:pos + 4], "little")
            pos += 4
        else:
            raise WireError(f"unsupported wire type {wt}")
        yield fno, wt, val


def _signed64(v: int) -> int:
    """Interpret a varint as a two's-complement int64 (protobuf int64)."""
    return v - (1 << 64) if v >= (1 << 63) else v


def _packed_varints(val, wt):
    """A repeated varint field arrives packed (bytes) or one at a time."""
    if wt == 0:
        return [_signed64(val)]
    out, pos = [], 0
    while pos < len(val):
        v, pos = read_varint(val, pos)
        out.append(_signed64(v))
    return out


@dataclass
class Attribute:
    name: str = ""
    f: float = 0.0
    i: int = 0
    s: bytes = b""
    t: "TensorData | None" = None
    ints: list = field(default_factory=list)
    floats: list = field(default_factory=list)


@dataclass
class TensorData:
    """Initializer metadata: dims and element count, values not decoded."""
    name: str = ""
    dims: list = field(default_factory=list)
    data_type: int = 0
    raw_data: bytes = b""
    float_data: list = field(default_factory=list)

    @property
    def num_elements(self) -> int:
        n = 1
        for d in self.dims:
            n *= d
        return n

    def scalar_float(self) -> float:
        """Value of a single-element float tensor (e.g. a quant scale)."""
        if self.float_data:
            return self.float_data[0]
        if len(self.raw_data) >= 4:
            return struct.unpack("<f", self.raw_data[:4])[0]
        raise WireError(f"tensor {self.name!r} has no float payload")


@dataclass
class Node:
    op_type: str = ""
    name: str = ""
    domain: str = ""
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    attributes: dict = field(default_factory=dict)

    def attr_ints(self, name, default=()):
        a = self.attributes.get(name)
        return list(a.ints) if a is not None and a.ints else list(default)

    def attr_int(self, name, default=0):
        a = self.attributes.get(name)
        return a.i if a is not None else default


@dataclass
class ValueInfo:
    name: str = ""
    shape: list = field(default_factory=list)   # ints; -1 for symbolic dims


@dataclass
class Graph:
    nodes: list = field(default_factory=list)
    initializers: dict = field(default_factory=dict)   # name -> TensorData
    inputs: list = field(default_factory=list)         # ValueInfo
    outputs: list = field(default_factory=list)
    value_infos: list = field(default_factory=list)


@dataclass
class Model:
    graph: Graph = field(default_factory=Graph)
    ir_version: int = 0


def _parse_attribute(buf: bytes) -> Attribute:
    a = Attribute()
    for fno, wt, val in iter_fields(buf):
        if fno == 1:
            a.name = val.decode()
        elif fno == 2:
            a.f = struct.unpack("<f", val.to_bytes(4, "little"))[0]
        elif fno == 3:
            a.i = _signed64(val)
        elif fno == 4:
            a.s = val
        elif fno == 5:
            a.t = _parse_tensor(val)
        elif fno == 7:
            if wt == 5:
                a.floats.append(
                    struct.unpack("<f", val.to_bytes(4, "little"))[0])
            else:
                a.floats.extend(struct.unpack(f"<{len(val) // 4}f", val))
        elif fno == 8:
            a.ints.extend(_packed_varints(val, wt))
    return a


def _parse_tensor(buf: bytes) -> TensorData:
    t = TensorData()
    for fno, wt, val in iter_fields(buf):
        if fno == 1:
            t.dims.extend(_packed_varints(val, wt))
        elif fno == 2:
            t.data_type = val
        elif fno == 4:
            if wt == 5:
                t.float_data.append(
                    struct.unpack("<f", val.to_bytes(4, "little"))[0])
            else:
                t.float_data.extend(struct.unpack(f"<{len(val) // 4}f", val))
        elif fno == 8:
            t.name = val.decode()
        elif fno == 9:
            t.raw_data = val
    return t


def _parse_node(buf: bytes) -> Node:
    n = Node()
    for fno, _wt, val in iter_fields(buf):
        if fno == 1:
            n.inputs.append(val.decode())
        elif fno == 2:
            n.outputs.append(val.decode())
        elif fno == 3:
            n.name = val.decode()
        elif fno == 4:
            n.op_type = val.decode()
        elif fno == 5:
            a = _parse_attribute(val)
            n.attributes[a.name] = a
        elif fno == 7:
            n.domain = val.decode()
    return n


def _parse_value_info(buf: bytes) -> ValueInfo:
    vi = ValueInfo()
    for fno, _wt, val in iter_fields(buf):
        if fno == 1:
            vi.name = val.decode()
        elif fno == 2:                       # TypeProto
            for f2, _w2, v2 in iter_fields(val):
                if f2 != 1:                  # tensor_type
                    continue
                for f3, _w3, v3 in iter_fields(v2):
                    if f3 != 2:              # shape
                        continue
                    for f4, _w4, v4 in iter_fields(v3):
                        if f4 != 1:          # dim
                            continue
                        dim = -1
                        for f5, _w5, v5 in iter_fields(v4):
                            if f5 == 1:      # dim_value
                                dim = _signed64(v5)
                        vi.shape.append(dim)
    return vi


def _parse_graph(buf: bytes) -> Graph:
    g = Graph()
    for fno, _wt, val in iter_fields(buf):
        if fno == 1:
            g.nodes.append(_parse_node(val))
        elif fno == 5:
            t = _parse_tensor(val)
            g.initializers[t.name] = t
        elif fno == 11:
            g.inputs.append(_parse_value_info(val))
        elif fno == 12:
            g.outputs.append(_parse_value_info(val))
        elif fno == 13:
            g.value_infos.append(_parse_value_info(val))
    return g


def parse_model(data: bytes) -> Model:
    """Parse serialized ONNX model bytes into the reduced object model."""
    m = Model()
    seen_graph = False
    try:
        for fno, _wt, val in iter_fields(data):
            if fno == 1:
                m.ir_version = val
            elif fno == 7:
                m.graph = _parse_graph(val)
                seen_graph = True
    except WireError:
        raise
    except Exception as exc:                 # noqa: BLE001 - surface as WireError
        raise WireError(str(exc)) from exc
    if not seen_graph:
        raise WireError("no graph found in model bytes")
    return m
