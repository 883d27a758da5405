"""HBM buffer planning: depths, placement, channels, sync BID ranges.

Every inter-node tensor lives in HBM as a ring of equally sized slots.
The depth of the ring must cover the pipeline skew between its writer
and its furthest reader: a consumer ``d`` stages downstream reads round
``r`` while the producer is already writing round ``r + d``, so

    depth = max stage distance over consumers + 1.

Producer and consumers synchronize slot reuse with REQ/ACK tokens; each
(tensor, consumer) pair gets a contiguous BID range of ``depth`` ids.
Model inputs and outputs have no on-fabric peer; they cycle through a
fixed ring of 4 host-managed regions without synchronization.

Channel assignment colors a conflict graph: all streams touched by one
PU in a round (its node inputs, outputs, and weight stream) conflict,
because their transfers overlap in steady state; first-fit over the
available channels, deterministic order, ChannelsExhausted on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..sim.system import CHANNEL_BYTES, SystemSpec
from .weights import node_weight_bytes

HOST_RING_SLOTS = 4
ALIGN = 256
MAX_BID = 256


class BufferError(Exception):
    pass


class ChannelsExhausted(BufferError):
    def __init__(self, stream, num_channels):
        super().__init__(
            f"stream {stream!r}: all {num_channels} HBM channels conflict"
        )


@dataclass
class TensorPlacement:
    tensor_id: str
    channel: int
    base_addr: int                # absolute HBM byte address of slot 0
    slot_bytes: int               # 256-aligned ring stride
    payload_bytes: int            # actual tensor size
    slots: int                    # ring depth
    synced: bool
    producer_pid: int             # -1 for model input
    consumer_pids: list = field(default_factory=list)
    bids: dict = field(default_factory=dict)   # consumer_pid -> base BID


@dataclass
class WeightRegion:
    pid: int
    channel: int
    base_addr: int
    total_bytes: int
    node_offsets: dict            # node_id -> offset within the region


@dataclass
class BufferPlan:
    tensors: dict                 # tensor_id -> TensorPlacement
    weights: dict                 # pid -> WeightRegion
    channel_bytes_used: dict      # channel -> allocated bytes


def _align(n):
    return (n + ALIGN - 1) & ~(ALIGN - 1)


def tensor_depth(tensor, stage_of) -> int:
    """Ring depth from producer/consumer stage distance."""
    if tensor.producer is None or not tensor.consumers:
        return HOST_RING_SLOTS
    sp = stage_of[tensor.producer]
    dist = max(stage_of[c] - sp for c in tensor.consumers)
    if dist < 0:
        raise BufferError(
            f"tensor {tensor.tensor_id}: consumer upstream of producer")
    return dist + 1


def plan_buffers(dag, partition, system: SystemSpec) -> BufferPlan:
    stage_of = {}
    pid_of = {}
    for si, stage in enumerate(partition.stages):
        for nid in stage.nodes:
            stage_of[nid] = si
            pid_of[nid] = stage.pid

    # streams in deterministic order: tensors as created, then weights by pid
    tensor_ids = list(dag.tensors)
    weight_pids = [s.pid for s in partition.stages
                   if any(node_weight_bytes(dag.node(n)) > 0
                          for n in s.nodes)]

    def touching_pids(tid):
        t = dag.tensors[tid]
        pids = set()
        if t.producer is not None and t.producer in pid_of:
            pids.add(pid_of[t.producer])
        pids.update(pid_of[c] for c in t.consumers if c in pid_of)
        return pids

    streams_by_pid = {}
    for tid in tensor_ids:
        for pid in touching_pids(tid):
            streams_by_pid.setdefault(pid, []).append(tid)
    for pid in weight_pids:
        streams_by_pid.setdefault(pid, []).append(f"w:{pid}")

    conflicts = {}
    for members in streams_by_pid.values():
        for s in members:
            conflicts.setdefault(s, set()).update(m for m in members if m != s)

    num_ch = system.hbm.num_channels
    color = {}
    order = tensor_ids + [f"w:{p}" for p in weight_pids]
    for s in order:
        used = {color[n] for n in conflicts.get(s, ()) if n in color}
        ch = next((c for c in range(num_ch) if c not in used), None)
        if ch is None:
            raise ChannelsExhausted(s, num_ch)
        color[s] = ch

    # bump-allocate regions inside each channel
    used_bytes = {c: 0 for c in range(num_ch)}

    def alloc(channel, nbytes):
        off = used_bytes[channel]
        if off + nbytes > CHANNEL_BYTES:
            raise BufferError(
                f"channel {channel} overflows: {off + nbytes} bytes")
        used_bytes[channel] = off + _align(nbytes)
        return channel * CHANNEL_BYTES + off

    next_bid = {}

    tensors = {}
    for tid in tensor_ids:
        t = dag.tensors[tid]
        depth = tensor_depth(t, stage_of)
        slot = _align(t.byte_size)
        if depth > 1 and slot >= (1 << 23):
            raise BufferError(
                f"tensor {tid}: ring stride {slot} exceeds the address "
                f"cycler's reach")
        synced = t.producer is not None and bool(t.consumers)
        prod_pid = pid_of.get(t.producer, -1) if t.producer else -1
        cons_pids = sorted({pid_of[c] for c in t.consumers if c in pid_of})
        place = TensorPlacement(
            tensor_id=tid,
            channel=color[tid],
            base_addr=alloc(color[tid], depth * slot),
            slot_bytes=slot,
            payload_bytes=t.byte_size,
            slots=depth,
            synced=synced,
            producer_pid=prod_pid,
            consumer_pids=cons_pids,
        )
        if synced:
            for cpid in cons_pids:
                pair = (prod_pid, cpid)
                base = next_bid.get(pair, 0)
                if base + depth > MAX_BID:
                    raise BufferError(
                        f"PU{prod_pid}->PU{cpid}: BID space exhausted")
                place.bids[cpid] = base
                next_bid[pair] = base + depth
        tensors[tid] = place

    weights = {}
    for stage in partition.stages:
        pid = stage.pid
        sid = f"w:{pid}"
        if sid not in color:
            continue
        offsets = {}
        total = 0
        for nid in stage.nodes:
            w = node_weight_bytes(dag.node(nid))
            if w > 0:
                offsets[nid] = total
                total += _align(w)
        weights[pid] = WeightRegion(
            pid=pid,
            channel=color[sid],
            base_addr=alloc(color[sid], total),
            total_bytes=total,
            node_offsets=offsets,
        )

    return BufferPlan(tensors=tensors, weights=weights,
                      channel_bytes_used=used_bytes)
