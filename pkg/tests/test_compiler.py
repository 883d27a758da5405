"""Compiler pipeline: partitioning, weight residency, buffers, codegen."""

import random
from types import SimpleNamespace

import pytest

from pucoord import graph as graphmod
from pucoord import models
from pucoord.compiler import (
    ChannelsExhausted,
    NodeProfile,
    WeightInfeasible,
    assign_pids,
    brute_force_partition,
    compile_model,
    generate_stage,
    load_plan,
    partition_nodes,
    peak_occupancy,
    plan_buffers,
    profile_dag,
    save_plan,
    schedule_weights,
    simulate_plan,
    slice_cycles,
    tensor_depth,
)
from pucoord.compiler.weights import URAM_CHUNKS, tile_chunks
from pucoord.isa import ProgCtrl, Sync, encode
from pucoord.sim import HbmSpec, PuSpec, SystemSpec, default_system
from pucoord.sim.hazards import detect_hazards


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------

def _random_profiles(rng, node_ids):
    out = {}
    for nid in node_ids:
        cp1 = rng.randint(50, 2000)
        prof = NodeProfile(
            node_id=nid,
            ld_cycles={"1x": rng.randint(20, 800), "2x": rng.randint(20, 800)},
            cp_cycles={"1x": cp1, "2x": (cp1 + 1) // 2},
            st_cycles={"1x": rng.randint(20, 800), "2x": rng.randint(20, 800)},
            weight_cycles={"1x": 0, "2x": 0},
        )
        out[nid] = prof
    return out


def _key(part):
    ends, prev = [], 0
    for s in part.stages:
        prev += len(s.nodes)
        ends.append((prev, s.pu_type))
    return (part.makespan, len(part.stages), tuple(ends))


@pytest.mark.parametrize("seed", range(20))
def test_partitioner_matches_exhaustive_search(seed):
    rng = random.Random(seed)
    n = rng.randint(3, 7)
    node_ids = [f"v{i}" for i in range(n)]
    profiles = _random_profiles(rng, node_ids)
    a = rng.randint(0, 3)
    b = rng.randint(0 if a else 1, 2)
    got = partition_nodes(node_ids, profiles, a, b)
    ref = brute_force_partition(node_ids, profiles, a, b)
    assert _key(got) == _key(ref)


def test_partition_structure():
    rng = random.Random(99)
    node_ids = [f"v{i}" for i in range(9)]
    profiles = _random_profiles(rng, node_ids)
    part = partition_nodes(node_ids, profiles, 3, 2)
    covered = [nid for s in part.stages for nid in s.nodes]
    assert covered == node_ids                      # contiguous, in order
    assert len(part.stages) <= 5
    assert part.makespan == max(s.cycles for s in part.stages)
    for s in part.stages:
        assert s.cycles == slice_cycles(profiles, s.nodes, s.pu_type)


def test_partition_prefers_wide_pus_for_compute_bound_slices():
    profiles = {
        "v0": NodeProfile("v0", {"1x": 10, "2x": 10},
                          {"1x": 1000, "2x": 500}, {"1x": 10, "2x": 10},
                          {"1x": 0, "2x": 0}),
    }
    part = partition_nodes(["v0"], profiles, 1, 1)
    assert part.stages[0].pu_type == "2x"
    assert part.makespan == 500


def test_assign_pids_ascending_within_type():
    rng = random.Random(5)
    node_ids = [f"v{i}" for i in range(6)]
    profiles = _random_profiles(rng, node_ids)
    part = partition_nodes(node_ids, profiles, 2, 2)
    assign_pids(part, default_system(2, 2))
    seen = {"1x": [], "2x": []}
    for s in part.stages:
        seen[s.pu_type].append(s.pid)
    assert seen["1x"] == sorted(seen["1x"])
    assert seen["2x"] == sorted(seen["2x"])
    types = {0: "1x", 1: "1x", 2: "2x", 3: "2x"}
    for s in part.stages:
        assert types[s.pid] == s.pu_type


# ---------------------------------------------------------------------------
# weight residency
# ---------------------------------------------------------------------------

def _wnode(nid, tile_bytes, bias=0):
    tiles = [SimpleNamespace(weight_bytes=b) for b in tile_bytes]
    return SimpleNamespace(id=nid, weight_bytes=sum(tile_bytes),
                           bias_bytes=bias, tiles=tiles)


def _cycles(nodes, per_tile):
    return {v.id: [per_tile] * len(v.tiles) for v in nodes}


def test_all_offline_when_uram_is_ample():
    nodes = [_wnode("a", [1000, 1000]), _wnode("b", [500])]
    plan = schedule_weights(nodes, _cycles(nodes, 100), 1 << 20, 32)
    assert plan.dynamic == []
    assert plan.offline == ["a", "b"]
    assert plan.stall_cycles == 0


def test_oversized_node_streams_tile_by_tile():
    # total weight exceeds URAM, but two adjacent tile slices fit
    tile = 294_912
    nodes = [_wnode("big", [tile] * 8, bias=2048)]
    cap = 2_359_296
    plan = schedule_weights(nodes, _cycles(nodes, 10_000), cap, 32)
    assert plan.dynamic == ["big"]
    assert plan.peak_bytes <= cap
    assert plan.peak_bytes == 2 * tile + 2048   # pair with the bias-carrying slice


def test_single_tile_pairs_with_its_next_round_copy():
    nodes = [_wnode("only", [1000])]
    assert peak_occupancy(nodes, set(), 64) == 2000


def test_bias_rides_with_last_tile_slice():
    node = _wnode("n", [100, 200, 300], bias=40)
    assert tile_chunks(node) == [(0, 100), (100, 200), (300, 340)]


def test_infeasible_pair_raises():
    nodes = [_wnode("a", [5000]), _wnode("b", [5000])]
    with pytest.raises(WeightInfeasible) as ei:
        schedule_weights(nodes, _cycles(nodes, 1), 8000, 32)
    assert ei.value.needed > ei.value.capacity


@pytest.mark.parametrize("seed", range(5))
def test_stalls_monotone_in_capacity(seed):
    rng = random.Random(seed)
    nodes = [
        _wnode(f"n{i}",
               [rng.randint(1, 4000) * 64
                for _ in range(rng.randint(1, 4))],
               bias=rng.randint(0, 256))
        for i in range(rng.randint(2, 6))
    ]
    tc = {v.id: [rng.randint(1, 3000) for _ in v.tiles] for v in nodes}
    caps = sorted(rng.randint(20_000, 2_000_000) for _ in range(12))
    prev = None
    for cap in caps:
        try:
            plan = schedule_weights(nodes, tc, cap, 32)
        except WeightInfeasible:
            assert prev is None       # once feasible, stays feasible
            continue
        assert plan.peak_bytes <= cap
        assert sorted(plan.offline + plan.dynamic) == sorted(v.id for v in nodes)
        assert plan.chunk_bytes == cap // URAM_CHUNKS
        if prev is not None:
            assert plan.stall_cycles <= prev
        prev = plan.stall_cycles


# ---------------------------------------------------------------------------
# buffer planning
# ---------------------------------------------------------------------------

def _compiled_pieces(ir, system, a, b):
    dag = graphmod.tile(graphmod.fuse(graphmod.ingest(ir)))
    profiles = profile_dag(dag, system)
    part = partition_nodes([n.id for n in dag.pu_nodes], profiles, a, b)
    assign_pids(part, system)
    return dag, part, plan_buffers(dag, part, system)


def test_buffer_depths_follow_stage_distance():
    sys_ = default_system(2, 0)
    dag, part, bufs = _compiled_pieces(models.two_conv_chain_ir(), sys_, 2, 0)
    stage_of = {nid: si for si, s in enumerate(part.stages) for nid in s.nodes}
    for tid, place in bufs.tensors.items():
        t = dag.tensors[tid]
        assert place.base_addr % 256 == 0
        assert place.slot_bytes % 256 == 0
        assert place.slot_bytes >= place.payload_bytes
        expected = tensor_depth(t, stage_of)
        assert place.slots == expected
        if t.producer is None or not t.consumers:
            assert not place.synced
            assert place.slots == 4            # host-managed ring
        else:
            assert place.synced
            dist = max(stage_of[c] for c in t.consumers) - stage_of[t.producer]
            assert place.slots == dist + 1


def test_streams_of_one_pu_get_distinct_channels():
    sys_ = default_system(2, 0)
    dag, part, bufs = _compiled_pieces(models.two_conv_chain_ir(), sys_, 2, 0)
    pid_of = {nid: s.pid for s in part.stages for nid in s.nodes}
    for stage in part.stages:
        chans = []
        for nid in stage.nodes:
            node = dag.node(nid)
            for tid in node.inputs + [node.output]:
                chans.append(bufs.tensors[tid].channel)
        if stage.pid in bufs.weights:
            chans.append(bufs.weights[stage.pid].channel)
        assert len(chans) == len(set(chans))


def test_bid_ranges_disjoint_per_link():
    sys_ = default_system(5, 5)
    dag, part, bufs = _compiled_pieces(models.resnet50_ir(), sys_, 5, 5)
    ranges = {}
    for place in bufs.tensors.values():
        if not place.synced:
            continue
        for cpid, base in place.bids.items():
            link = (place.producer_pid, cpid)
            span = set(range(base, base + place.slots))
            assert not (ranges.get(link, set()) & span)
            assert max(span) < 256
            ranges.setdefault(link, set()).update(span)


def test_channels_exhausted():
    sys_ = SystemSpec(
        pus=[PuSpec(pid=0, pu_type="1x"), PuSpec(pid=1, pu_type="1x")],
        hbm=HbmSpec(num_channels=1),
    )
    with pytest.raises(ChannelsExhausted):
        _compiled_pieces(models.two_conv_chain_ir(), sys_, 2, 0)


# ---------------------------------------------------------------------------
# codegen
# ---------------------------------------------------------------------------

def test_generated_programs_structure():
    sys_ = default_system(2, 0)
    plan = compile_model(models.two_conv_chain_ir(), sys_, 2, 0)
    for (pid, grp), prog in plan.images.items():
        last = prog.instructions[-1]
        assert isinstance(last, ProgCtrl) and last.prg_end
        segs = plan.segments[(pid, grp)]
        assert segs[0][0] == last.icu_ba          # body starts after warm-up
        assert segs[-1][1] == len(prog.instructions)
        for (s0, e0), (s1, _) in zip(segs, segs[1:]):
            assert s1 == e0
    # the three groups of one PU agree on segment count
    for pid in plan.pids:
        counts = {len(plan.segments[(pid, g)]) for g in ("LD", "CP", "ST")}
        assert len(counts) == 1


def test_ld_warmup_preauthorizes_full_ring_depth():
    sys_ = default_system(2, 0)
    plan = compile_model(models.two_conv_chain_ir(), sys_, 2, 0)
    for summary in plan.stage_summaries:
        pid = summary["pid"]
        prog = plan.images[(pid, "LD")]
        warm = prog.instructions[:prog.instructions[-1].icu_ba]
        acks = [i for i in warm if isinstance(i, Sync) and i.kind == "send_ack"]
        expected = sum(
            t["slots"] for tid, t in plan.tensors.items()
            if t["synced"] and pid in t["consumer_pids"]
        )
        assert len(acks) == expected


# ---------------------------------------------------------------------------
# end to end
# ---------------------------------------------------------------------------

def test_two_stage_chain_end_to_end():
    sys_ = default_system(2, 0)
    plan = compile_model(models.two_conv_chain_ir(), sys_, 2, 0)
    report, metrics = simulate_plan(plan, rounds=6)
    assert detect_hazards(report.accesses) == []
    est = plan.estimates["makespan_cycles"]
    assert metrics.cycles_per_round == pytest.approx(est, rel=0.05)
    assert metrics.measured_pbe > 0.9


def test_resnet50_end_to_end():
    sys_ = default_system(5, 5)
    plan = compile_model(models.resnet50_ir(), sys_, 5, 5)
    assert len(plan.stage_summaries) == 10
    report, metrics = simulate_plan(plan, rounds=4)
    assert detect_hazards(report.accesses) == []
    assert metrics.measured_pbe > 0.85
    est = plan.estimates["balance_efficiency"]
    assert metrics.measured_pbe == pytest.approx(est, abs=0.05)


def test_plan_save_load_round_trip(tmp_path):
    sys_ = default_system(2, 0)
    plan = compile_model(models.two_conv_chain_ir(), sys_, 2, 0)
    d1 = tmp_path / "p1"
    save_plan(plan, str(d1))
    loaded = load_plan(str(d1))
    assert loaded.pool == plan.pool
    assert set(loaded.images) == set(plan.images)
    for key, prog in plan.images.items():
        assert [encode(i) for i in loaded.images[key].instructions] == \
               [encode(i) for i in prog.instructions]
    assert loaded.segments == plan.segments
    d2 = tmp_path / "p2"
    save_plan(loaded, str(d2))
    assert (d1 / "plan.json").read_bytes() == (d2 / "plan.json").read_bytes()
    for img in sorted((d1 / "images").iterdir()):
        assert img.read_bytes() == (d2 / "images" / img.name).read_bytes()


def test_simulated_plan_is_deterministic():
    sys_ = default_system(2, 0)
    plan = compile_model(models.two_conv_chain_ir(), sys_, 2, 0)
    r1, m1 = simulate_plan(plan, rounds=4)
    r2, m2 = simulate_plan(plan, rounds=4)
    assert r1.to_dict() == r2.to_dict()
    assert m1.to_dict() == m2.to_dict()
