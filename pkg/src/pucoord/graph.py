"""Model intermediate representation: IR-JSON ingestion, hardware-aware
fusion, and tile decomposition.

IR-JSON schema (canonical toolchain input)::

    {
      "schema_version": 1,
      "nodes": [{"id": str, "op": "conv"|"fc"|"add"|"relu"|<other>,
                 "dims": [...], "weight_bytes": int, "bias_bytes": int,
                 "quant_scale": int}, ...],
      "edges": [{"src": str|null, "dst": str, "tensor_shape": [...]}, ...]
    }

``src == null`` marks the model input feeding ``dst``. Node ``dims``:

    conv: [out_channels, in_channels, kernel_h, kernel_w, out_h, out_w]
    fc:   [out_features, in_features]
    add / relu / other: output shape, e.g. [C, H, W]

Elements are 8-bit, so tensor byte size = product of its shape. Node order
in all outputs is topological with id tie-break.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

GEMM_OPS = ("conv", "fc")
SA_ROWS = 64

# PU-mappable fused kinds; everything else is flagged as a host op.
PU_KINDS = ("Conv", "ConvReLU", "FC", "FusedConvAdd", "FusedConvAddReLU")


class GraphError(Exception):
    pass


class SchemaError(GraphError):
    pass


class CycleDetected(GraphError):
    pass


class NegativeDim(GraphError):
    pass


class UnsupportedPattern(GraphError):
    def __init__(self, node_id: str, reason: str):
        self.node_id = node_id
        super().__init__(f"node {node_id}: {reason}")


@dataclass
class IrNode:
    id: str
    op: str
    dims: tuple
    weight_bytes: int = 0
    bias_bytes: int = 0
    quant_scale: int = 0


@dataclass
class IrEdge:
    src: str | None   # None = model input
    dst: str
    tensor_shape: tuple

    @property
    def tensor_bytes(self) -> int:
        return int(math.prod(self.tensor_shape))


@dataclass
class ModelGraph:
    nodes: list
    edges: list

    def node(self, node_id: str) -> IrNode:
        return self._by_id[node_id]

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}

    def predecessors(self, node_id: str) -> list:
        return [e.src for e in self.edges if e.dst == node_id and e.src is not None]

    def successors(self, node_id: str) -> list:
        return [e.dst for e in self.edges if e.src == node_id]


@dataclass
class TileDescriptor:
    tile_index: int
    rows: int
    weight_bytes: int
    macs: int


@dataclass
class Tensor:
    tensor_id: str
    byte_size: int
    producer: str | None          # node id; None = model input
    consumers: list = field(default_factory=list)
    consumer_read_bytes: dict = field(default_factory=dict)


@dataclass
class DagNode:
    id: str
    kind: str                      # one of PU_KINDS, or "Host"
    gemm_dims: tuple               # (M, K, N); (0, 0, 0) for host ops
    weight_bytes: int = 0
    bias_bytes: int = 0
    quant_scale: int = 0
    inputs: list = field(default_factory=list)       # tensor ids; inputs[0] is the GEMM input
    residual_input: str | None = None                # tensor id for fused adds
    output: str = ""
    host_op: str = ""              # original op name for host-flagged nodes
    tiles: list = field(default_factory=list)
    exec_time_est: int = 0         # cycles, filled by the profiler

    @property
    def macs(self) -> int:
        m, k, n = self.gemm_dims
        return m * k * n

    @property
    def is_host(self) -> bool:
        return self.kind == "Host"


@dataclass
class NodeDag:
    nodes: list
    tensors: dict                  # tensor_id -> Tensor
    host_notes: list = field(default_factory=list)

    def node(self, node_id: str) -> DagNode:
        return self._by_id[node_id]

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}

    @property
    def pu_nodes(self) -> list:
        return [n for n in self.nodes if not n.is_host]

    def total_macs(self) -> int:
        return sum(n.macs for n in self.nodes)


def _toposort(node_ids, preds):
    indeg = {n: 0 for n in node_ids}
    succs = {n: [] for n in node_ids}
    for n in node_ids:
        for p in preds[n]:
            indeg[n] += 1
            succs[p].append(n)
    ready = sorted(n for n in node_ids if indeg[n] == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        changed = False
        for s in succs[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(node_ids):
        raise CycleDetected("graph contains a cycle")
    return order


def ingest(source) -> ModelGraph:
    """Load and validate IR-JSON from a path, file object, or dict."""
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)

    if not isinstance(doc, dict) or "nodes" not in doc or "edges" not in doc:
        raise SchemaError("IR document must have 'nodes' and 'edges'")

    nodes = []
    seen = set()
    for raw in doc["nodes"]:
        try:
            node = IrNode(
                id=str(raw["id"]),
                op=str(raw["op"]),
                dims=tuple(int(d) for d in raw.get("dims", ())),
                weight_bytes=int(raw.get("weight_bytes", 0)),
                bias_bytes=int(raw.get("bias_bytes", 0)),
                quant_scale=int(raw.get("quant_scale", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad node entry {raw!r}: {exc}") from None
        if node.id in seen:
            raise SchemaError(f"duplicate node id {node.id!r}")
        seen.add(node.id)
        if any(d < 0 for d in node.dims) or node.weight_bytes < 0:
            raise NegativeDim(f"node {node.id} has a negative dimension")
        if node.op == "conv" and len(node.dims) != 6:
            raise SchemaError(f"conv node {node.id} needs 6 dims, got {len(node.dims)}")
        if node.op == "fc" and len(node.dims) != 2:
            raise SchemaError(f"fc node {node.id} needs 2 dims, got {len(node.dims)}")
        nodes.append(node)

    edges = []
    for raw in doc["edges"]:
        try:
            edge = IrEdge(
                src=None if raw.get("src") is None else str(raw["src"]),
                dst=str(raw["dst"]),
                tensor_shape=tuple(int(d) for d in raw["tensor_shape"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad edge entry {raw!r}: {exc}") from None
        if any(d < 0 for d in edge.tensor_shape):
            raise NegativeDim(f"edge to {edge.dst} has a negative dimension")
        for ref in (edge.src, edge.dst):
            if ref is not None and ref not in seen:
                raise SchemaError(f"edge references unknown node {ref!r}")
        edges.append(edge)

    preds = {n.id: [] for n in nodes}
    for e in edges:
        if e.src is not None:
            preds[e.dst].append(e.src)

    order = _toposort([n.id for n in nodes], preds)  # raises CycleDetected

    for n in nodes:
        if not any(e.dst == n.id for e in edges):
            raise SchemaError(f"node {n.id} has no input edge (model inputs use src=null)")

    by_id = {n.id: n for n in nodes}
    return ModelGraph(nodes=[by_id[i] for i in order], edges=edges)


def gemm_dims(node: IrNode) -> tuple:
    if node.op == "conv":
        oc, ic, kh, kw, oh, ow = node.dims
        return (oc, ic * kh * kw, oh * ow)
    if node.op == "fc":
        out_f, in_f = node.dims
        return (out_f, in_f, 1)
    return (0, 0, 0)


def _out_shape(node: IrNode, g: ModelGraph):
    outs = [e for e in g.edges if e.src == node.id]
    if outs:
        return outs[0].tensor_shape
    # terminal node: derive from dims
    if node.op == "conv":
        oc, _, _, _, oh, ow = node.dims
        return (oc, oh, ow)
    if node.op == "fc":
        return (node.dims[0],)
    return node.dims


def fuse(g: ModelGraph) -> NodeDag:
    """Fuse Conv+Add(+ReLU) chains and fold trailing ReLUs; splice the
    remaining non-GEMM ops out of the dataflow as zero-cost host ops."""
    consumed = {}      # ir node id -> fused-into node id
    dag_nodes = []
    host_notes = []

    in_edges = {n.id: [e for e in g.edges if e.dst == n.id] for n in g.nodes}
    out_edges = {n.id: [e for e in g.edges if e.src == n.id] for n in g.nodes}
    topo_idx = {n.id: i for i, n in enumerate(g.nodes)}

    def single_consumer(node_id):
        outs = out_edges[node_id]
        if len(outs) == 1:
            return g.node(outs[0].dst)
        return None

    for node in g.nodes:
        if node.id in consumed:
            continue
        if node.op in GEMM_OPS:
            kind = "Conv" if node.op == "conv" else "FC"
            tail = node
            residual_src = None
            nxt = single_consumer(node.id)
            if (node.op == "conv" and nxt is not None and nxt.op == "add"
                    and nxt.id not in consumed):
                others = [e for e in in_edges[nxt.id] if e.src != node.id]

                def _later_conv_feeds_add(src):
                    # the add fuses into its topologically last conv
                    # predecessor, so the fused node stays downstream of
                    # the other branch (e.g. a residual downsample conv)
                    if src is None or g.node(src).op != "conv":
                        return False
                    peer = single_consumer(src)
                    return (peer is not None and peer.id == nxt.id
                            and topo_idx[src] > topo_idx[node.id])

                if (len(in_edges[nxt.id]) == 2 and len(others) == 1
                        and not _later_conv_feeds_add(others[0].src)):
                    consumed[nxt.id] = node.id
                    kind = "FusedConvAdd"
                    residual_src = others[0].src
                    tail = nxt
                    nxt = single_consumer(nxt.id)
            if nxt is not None and nxt.op == "relu" and nxt.id not in consumed:
                consumed[nxt.id] = node.id
                kind = {"Conv": "ConvReLU", "FusedConvAdd": "FusedConvAddReLU"}.get(kind, kind)
                tail = nxt

            dag_nodes.append(DagNode(
                id=node.id,
                kind=kind,
                gemm_dims=gemm_dims(node),
                weight_bytes=node.weight_bytes,
                bias_bytes=node.bias_bytes,
                quant_scale=node.quant_scale,
                host_op="",
            ))
            # record fusion metadata for edge rewiring below
            dag_nodes[-1]._tail_id = tail.id
            dag_nodes[-1]._residual_src = residual_src
        elif node.op in ("add", "relu"):
            # unfused element-wise op: out of PU scope, flagged host-side
            host_notes.append(f"unfused {node.op} node {node.id} treated as host op")
            dag_nodes.append(DagNode(id=node.id, kind="Host", gemm_dims=(0, 0, 0),
                                     host_op=node.op))
            dag_nodes[-1]._tail_id = node.id
            dag_nodes[-1]._residual_src = None
        else:
            host_notes.append(f"op {node.op!r} node {node.id} not PU-mappable; host-side")
            dag_nodes.append(DagNode(id=node.id, kind="Host", gemm_dims=(0, 0, 0),
                                     host_op=node.op))
            dag_nodes[-1]._tail_id = node.id
            dag_nodes[-1]._residual_src = None

    # Map every ir node id to its representative dag node (itself, or the
    # node it was fused into).
    rep = {}
    for dn in dag_nodes:
        rep[dn.id] = dn.id
    for swallowed, owner in consumed.items():
        rep[swallowed] = owner
    dag_ids = {dn.id for dn in dag_nodes}

    # Build tensors between representatives.
    tensors = {}
    by_id = {dn.id: dn for dn in dag_nodes}

    def tensor_for(producer_rep, shape):
        tid = "t_in" if producer_rep is None else f"t_{producer_rep}"
        if tid not in tensors:
            tensors[tid] = Tensor(tensor_id=tid,
                                  byte_size=int(math.prod(shape)),
                                  producer=producer_rep)
        return tensors[tid]

    for e in g.edges:
        dst_rep = rep[e.dst]
        src_rep = None if e.src is None else rep[e.src]
        if src_rep == dst_rep:
            continue  # internal edge of a fused group
        t = tensor_for(src_rep, e.tensor_shape)
        dn = by_id[dst_rep]
        read_bytes = int(math.prod(e.tensor_shape))
        if e.dst != dst_rep and by_id[dst_rep]._residual_src is not None \
                and e.src == by_id[dst_rep]._residual_src:
            dn.residual_input = t.tensor_id
        elif e.dst != dst_rep:
            # edge into a swallowed add/relu from outside that is not the
            # residual: shouldn't happen for legal fusions
            dn.inputs.append(t.tensor_id)
        else:
            dn.inputs.append(t.tensor_id)
        if dst_rep not in t.consumers:
            t.consumers.append(dst_rep)
        t.consumer_read_bytes[dst_rep] = read_bytes

    # Output tensors: tensor_for() already creates them lazily when consumed;
    # create one for each terminal representative too.
    for dn in dag_nodes:
        tid = f"t_{dn.id}"
        if tid not in tensors:
            tail = g.node(dn._tail_id)
            tensors[tid] = Tensor(tensor_id=tid,
                                  byte_size=int(math.prod(_out_shape(tail, g))),
                                  producer=dn.id)
        dn.output = tid

    # Splice host ops out: their consumers read the host op's input tensor.
    pu_nodes = []
    for dn in dag_nodes:
        if not dn.is_host:
            pu_nodes.append(dn)
            continue
        if not dn.inputs:
            raise UnsupportedPattern(dn.id, f"host op {dn.host_op!r} with no input")
        src_tid = dn.inputs[0]
        out_tid = dn.output
        src = tensors[src_tid]
        out = tensors.get(out_tid)
        for tin in dn.inputs:
            tt = tensors[tin]
            if dn.id in tt.consumers:
                tt.consumers.remove(dn.id)
        if out is not None:
            for c in out.consumers:
                cn = by_id[c]
                cn.inputs = [src_tid if t == out_tid else t for t in cn.inputs]
                if cn.residual_input == out_tid:
                    cn.residual_input = src_tid
                if c not in src.consumers:
                    src.consumers.append(c)
                # downstream reads at most what the host op produced
                src.consumer_read_bytes[c] = min(out.byte_size, src.byte_size)
            del tensors[out_tid]
        host_notes.append(
            f"host op {dn.id} ({dn.host_op}) spliced: consumers read {src_tid}"
        )

    # prune tensors with no consumers and no producer relevance
    live = {}
    for tid, t in tensors.items():
        producer_alive = t.producer is None or (t.producer in by_id and not by_id[t.producer].is_host)
        if t.consumers or (producer_alive and t.producer is not None):
            live[tid] = t

    for dn in pu_nodes:
        del dn._tail_id
        del dn._residual_src

    return NodeDag(nodes=pu_nodes, tensors=live, host_notes=host_notes)


def tile(dag: NodeDag, sa_rows: int = SA_ROWS) -> NodeDag:
    """Split each node's GEMM M dimension into ceil(M/sa_rows) tiles."""
    if sa_rows != SA_ROWS:
        raise GraphError(f"sa_rows must be {SA_ROWS} for both PU types")
    for node in dag.pu_nodes:
        m, k, n = node.gemm_dims
        if m == 0:
            node.tiles = []
            continue
        count = math.ceil(m / sa_rows)
        tiles = []
        remaining_w = node.weight_bytes
        for i in range(count):
            rows = min(sa_rows, m - i * sa_rows)
            w = (node.weight_bytes * rows) // m
            if i == count - 1:
                w = remaining_w
            remaining_w -= w
            tiles.append(TileDescriptor(tile_index=i, rows=rows,
                                        weight_bytes=w, macs=rows * k * n))
        node.tiles = tiles
    return dag
