"""Program generation: one LD/CP/ST instruction stream per pipeline PU.

Per stage, each node becomes one segment in all three group programs
(segment indices align across groups for the PU's internal buffer
gating).  The generated round structure is:

LD   warm-up: pre-authorizing ACKs, ``depth`` per synced input tensor.
     segment: [WAIT_REQ] STRIDE_PRM STRIDE_ADM [CYCLE_ADDR] [SEND_ACK]
              per input tensor.
CP   warm-up: URAM_PRM + WEIGHTS_ADM for offline weights and for the
              first dynamic tile slice.
     segment: per tile, URAM_PRM + WEIGHTS_ADM prefetching the next
              dynamic tile's weight slice, then the tile's GEMM.
ST   segment: [WAIT_ACK...] LINEAR_ADM [CYCLE_ADDR] [SEND_REQ...] for
              the output tensor; no warm-up (consumers pre-authorize).

Synced ring buffers advance one slot per round on both sides, and BIDs
cycle through the tensor's allocated range with the same period, so
an ACK for round r's slot authorizes the write of round r + depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..isa import (
    AddrCyc,
    Compute,
    Config,
    DataMove,
    ProgCtrl,
    Program,
    Sync,
    validate_program,
)
from .weights import tile_chunks


class CodegenError(Exception):
    pass


@dataclass
class StagePrograms:
    pid: int
    programs: dict                # group -> Program
    segments: dict                # group -> [(start_ip, end_ip)]
    node_ids: list = field(default_factory=list)


def _input_tids(node):
    """Tensors the LD group must fetch: GEMM inputs plus the residual."""
    tids = list(node.inputs)
    if node.residual_input and node.residual_input not in tids:
        tids.append(node.residual_input)
    return tids


def _ring_cycle(place):
    if place.slots <= 1:
        return []
    return [AddrCyc(ba=place.base_addr, aoffs=place.slot_bytes,
                    nc=place.slots - 1, ic=place.slots - 1)]


def _sync(kind, peer, base, depth):
    return Sync(kind=kind, peer_pid=peer, bid=base, base_bid=base,
                nc=depth - 1 if depth > 1 else 0,
                ic=depth - 1 if depth > 1 else 0)


def _weight_load(region, node_id, offset, nbytes):
    return [
        Config(kind="uram_addr", params=(0, 0)),
        DataMove(kind="weights",
                 cur_ba=region.base_addr + region.node_offsets[node_id]
                 + offset,
                 length=nbytes),
    ]


def generate_stage(stage, dag, buffer_plan, weight_plan, nr=0) -> StagePrograms:
    """Build the three group programs for one pipeline stage."""
    pid = stage.pid
    tensors = buffer_plan.tensors
    wregion = buffer_plan.weights.get(pid)
    dynamic = set(weight_plan.dynamic) if weight_plan else set()
    offline = list(weight_plan.offline) if weight_plan else []
    nodes = [dag.node(nid) for nid in stage.nodes]
    k_nodes = len(nodes)

    # ---- LD -------------------------------------------------------------
    ld_warm = []
    seen = set()
    for node in nodes:
        for tid in _input_tids(node):
            if tid in seen:
                continue
            seen.add(tid)
            place = tensors[tid]
            if place.synced:
                base = place.bids[pid]
                ld_warm += [
                    Sync(kind="send_ack", peer_pid=place.producer_pid,
                         bid=base + i, base_bid=base, nc=0, ic=0)
                    for i in range(place.slots)
                ]
    ld_body, ld_segs = [], []
    loaded = set()
    for node in nodes:
        start = len(ld_warm) + len(ld_body)
        for tid in _input_tids(node):
            if tid in loaded:   # an earlier node in this stage fetched it
                continue
            loaded.add(tid)
            place = tensors[tid]
            if place.synced:
                ld_body.append(_sync("wait_req", place.producer_pid,
                                     place.bids[pid], place.slots))
            ld_body.append(Config(kind="stride_pattern", params=(1, 1, 1)))
            ld_body.append(DataMove(kind="stride", cur_ba=place.base_addr,
                                    length=place.payload_bytes))
            ld_body.extend(_ring_cycle(place))
            if place.synced:
                ld_body.append(_sync("send_ack", place.producer_pid,
                                     place.bids[pid], place.slots))
        ld_segs.append([start, len(ld_warm) + len(ld_body)])

    # ---- CP -------------------------------------------------------------
    # Dynamic weights stream one tile slice at a time: each GEMM slot
    # prefetches the weights of the *next* slot in the stage's cyclic
    # tile sequence, so only two consecutive slices are ever resident.
    slots = [(i, j) for i, node in enumerate(nodes)
             for j in range(len(node.tiles))]
    chunks = {node.id: tile_chunks(node) for node in nodes}
    cp_warm = []
    if wregion is not None:
        for nid in offline:
            cp_warm += _weight_load(wregion, nid, 0, _node_w(dag, nid))
        if slots and nodes[slots[0][0]].id in dynamic:
            i0, j0 = slots[0]
            off, nb = chunks[nodes[i0].id][j0]
            cp_warm += _weight_load(wregion, nodes[i0].id, off, nb)
    cp_body, cp_segs = [], []
    s = 0
    for node in nodes:
        start = len(cp_warm) + len(cp_body)
        _, kdim, ndim = node.gemm_dims
        relu = node.kind in ("ConvReLU", "FusedConvAddReLU")
        add = node.kind in ("FusedConvAdd", "FusedConvAddReLU")
        for t in node.tiles:
            if wregion is not None and slots:
                ni, nj = slots[(s + 1) % len(slots)]
                nxt = nodes[ni]
                if nxt.id in dynamic:
                    off, nb = chunks[nxt.id][nj]
                    cp_body += _weight_load(wregion, nxt.id, off, nb)
            cp_body.append(Compute(m=t.rows, k=kdim, n=ndim,
                                   scale=node.quant_scale,
                                   relu_enable=relu, add_enable=add))
            s += 1
        cp_segs.append([start, len(cp_warm) + len(cp_body)])

    # ---- ST -------------------------------------------------------------
    st_body, st_segs = [], []
    for node in nodes:
        start = len(st_body)
        place = tensors[node.output]
        if place.synced:
            for cpid in place.consumer_pids:
                st_body.append(_sync("wait_ack", cpid, place.bids[cpid],
                                     place.slots))
        st_body.append(DataMove(kind="linear", cur_ba=place.base_addr,
                                length=place.payload_bytes))
        st_body.extend(_ring_cycle(place))
        if place.synced:
            for cpid in place.consumer_pids:
                st_body.append(_sync("send_req", cpid, place.bids[cpid],
                                     place.slots))
        st_segs.append([start, len(st_body)])

    programs = {}
    segments = {}
    for group, warm, body, segs in (
        ("LD", ld_warm, ld_body, ld_segs),
        ("CP", cp_warm, cp_body, cp_segs),
        ("ST", [], st_body, st_segs),
    ):
        instrs = warm + body + [
            ProgCtrl(nr=nr, icu_ba=len(warm), prg_end=True)]
        segs = [list(s) for s in segs]
        segs[-1][1] += 1              # PRG_PRM belongs to the last segment
        prog = Program(group=group, instructions=instrs)
        try:
            validate_program(prog)
        except Exception as exc:
            raise CodegenError(f"PU{pid}/{group}: {exc}") from exc
        programs[group] = prog
        segments[group] = [tuple(s) for s in segs]

    return StagePrograms(pid=pid, programs=programs, segments=segments,
                         node_ids=list(stage.nodes))


def _node_w(dag, nid):
    node = dag.node(nid)
    return node.weight_bytes + node.bias_bytes
