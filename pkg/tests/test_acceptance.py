"""Acceptance suite: one test per headline guarantee of the toolchain.

Each test is self-contained and checks one externally stated property
at its stated tolerance; `pytest -v` yields one pass/fail line per
criterion.
"""

import dataclasses
import functools
import math
import random
from collections import deque
from types import SimpleNamespace

import pytest
from click.testing import CliRunner

from pucoord import dse, models
from pucoord.cli import main as cli_main
from pucoord.compiler import (
    WeightInfeasible,
    brute_force_partition,
    compile_model,
    partition_nodes,
    simulate_plan,
)
from pucoord.compiler.profile import NodeProfile
from pucoord.isa import AddrCyc, Compute, DataMove, Program, encode
from pucoord.isa.encoding import addr_cyc_update, sync_update
from pucoord.sim import (
    PuSpec,
    Simulator,
    SystemSpec,
    default_system,
    route_latency,
)
from pucoord.sim.hazards import detect_hazards
from pipeline_builders import two_stage_images


# ---------------------------------------------------------------------------
# 1. dynamic-update tables: every branch, exhaustively (exact)
# ---------------------------------------------------------------------------

def test_sync_and_addr_cyc_update_tables_exact():
    # Sync: bypass when NC == 0; reset to (BASE, NC) on expiry; else
    # increment BID and decrement IC.  From the reset state the walk
    # visits BASE..BASE+NC exactly once per period of NC + 1 steps.
    for nc in range(9):
        for base in (0, 5, 16, 200):
            instr = SimpleNamespace(nc=nc, base_bid=base)
            for bid0 in range(0, 17):
                for ic0 in range(9):
                    got = sync_update(bid0, ic0, instr)
                    if nc == 0:
                        assert got == (bid0, ic0)          # bypass branch
                    elif ic0 == 0:
                        assert got == (base, nc)           # reset branch
                    else:
                        assert got == (bid0 + 1, ic0 - 1)  # increment branch
            if nc:
                bid, ic = base, nc
                seen = []
                for _ in range(nc + 1):
                    seen.append(bid)
                    bid, ic = sync_update(bid, ic, instr)
                assert (bid, ic) == (base, nc)             # closed cycle
                assert seen == list(range(base, base + nc + 1))

    # AddrCyc: reset to (NC, BA) on expiry, else decrement and step the
    # address by AOFFS.  One period touches BA + k*AOFFS for k <= NC.
    for nc in range(9):
        for aoffs in (-512, 256, 1024):
            instr = SimpleNamespace(nc=nc, ba=1 << 20, aoffs=aoffs)
            for ic0 in range(9):
                for ba0 in (0, 4096):
                    got = addr_cyc_update(ic0, ba0, instr)
                    if ic0 == 0:
                        assert got == (nc, instr.ba)       # reset branch
                    else:
                        assert got == (ic0 - 1, ba0 + aoffs)
            ic, cur = nc, instr.ba
            addrs = []
            for _ in range(nc + 1):
                addrs.append(cur)
                ic, cur = addr_cyc_update(ic, cur, instr)
            assert (ic, cur) == (nc, instr.ba)             # closed cycle
            assert addrs == [instr.ba + k * aoffs for k in range(nc + 1)]


# ---------------------------------------------------------------------------
# 2. two-PU pipeline behaviour in the three load cases
# ---------------------------------------------------------------------------

_GEMM = (64, 512, 256)


def _two_pu(prod_type, cons_type):
    return SystemSpec(pus=[PuSpec(pid=0, pu_type=prod_type, slr=0),
                           PuSpec(pid=1, pu_type=cons_type, slr=0)])


def _gemm_cycles(shape, pu_type):
    m, k, n = shape
    cols = 4 if pu_type == "1x" else 8
    return math.ceil(m * k * n / (64 * cols * 2) / 0.98)


def _steady_state(report, pid, grp, state, skip=3):
    """Mean per-round cycles spent in ``state`` after the warm-up rounds."""
    log = report.round_log[(pid, grp)]
    t_lo, t_hi = log[skip][0], log[-1][1]
    total = sum(min(t1, t_hi) - max(t0, t_lo)
                for t0, t1, s, _ in report.timelines[(pid, grp)]
                if s == state and t1 > t_lo and t0 < t_hi)
    return total / (len(log) - skip)


_WAITS = ("wait_ack", "wait_req", "wait_buffer", "wait_weights")


def test_two_pu_pipeline_three_cases():
    images = two_stage_images(gemm=_GEMM, gemm2=_GEMM, nr=12)
    words = {k: [encode(i) for i in p.instructions] for k, p in images.items()}
    rtt = 2 * route_latency(0, 1, _two_pu("2x", "2x")) + 2

    # Case 1 — balanced: steady round time equals the compute bound plus
    # at most one token round trip (no synchronization stall beyond
    # token latency), and REQ BIDs alternate between the two ring slots.
    rep = Simulator(_two_pu("2x", "2x"), two_stage_images(gemm=_GEMM, nr=12)).run()
    bound = _gemm_cycles(_GEMM, "2x")
    assert rep.steady_cycles_per_round(0, "ST", skip=3) <= bound + rtt
    assert rep.steady_cycles_per_round(1, "ST", skip=3) <= bound + rtt
    req_bids = [t.bid for t in rep.tokens if t.kind == "REQ"][2:]
    assert set(req_bids) == {min(req_bids), min(req_bids) + 1}
    assert all(a != b for a, b in zip(req_bids, req_bids[1:]))

    # Case 2 — slow consumer: after the producer burns through its buffer
    # credit (one ramp round per ring slot), it is throttled to the
    # consumer's standalone rate (±2%) and WAIT_ACK dominates its stalls.
    rep = Simulator(_two_pu("2x", "1x"), two_stage_images(gemm=_GEMM, nr=20)).run()
    prod_round = rep.steady_cycles_per_round(0, "ST", skip=8)
    assert prod_round == pytest.approx(_gemm_cycles(_GEMM, "1x"), rel=0.02)
    stalls = {s: _steady_state(rep, 0, "ST", s, skip=8) for s in _WAITS}
    assert stalls["wait_ack"] >= 0.5 * sum(stalls.values())

    # Case 3 — slow producer: the consumer's WAIT_REQ dominates and the
    # producer sees no ACK stalls beyond token latency.
    rep = Simulator(_two_pu("1x", "2x"), two_stage_images(gemm=_GEMM, nr=20)).run()
    stalls = {s: _steady_state(rep, 1, "LD", s, skip=8) for s in _WAITS}
    assert stalls["wait_req"] >= 0.5 * sum(stalls.values())
    assert _steady_state(rep, 0, "ST", "wait_ack", skip=8) <= rtt

    # The same instruction programs were used in all three cases.
    again = two_stage_images(gemm=_GEMM, gemm2=_GEMM, nr=12)
    assert {k: [encode(i) for i in p.instructions]
            for k, p in again.items()} == words


# ---------------------------------------------------------------------------
# 3. token delivery latency (exact)
# ---------------------------------------------------------------------------

def test_token_latency_matches_configuration_exactly():
    spec = default_system(5, 5)            # pids 0-4 on SLR0, 5-9 on SLR1
    assert route_latency(2, 2, spec) == 2              # same PU
    assert route_latency(0, 1, spec) == 2              # one hop, same SLR
    assert route_latency(0, 4, spec) == 3              # multi-hop, same SLR
    assert route_latency(0, 5, spec) == 16             # +13 per SLR crossing
    assert route_latency(5, 0, spec) == 16
    from pipeline_builders import sender_only
    for src, dst in ((0, 1), (0, 4), (0, 5), (7, 9)):
        images = {(src, "ST"): sender_only(src, dst, count=3)}
        rep = Simulator(spec, images).run()
        toks = [t for t in rep.tokens if t.src == src and t.dst == dst]
        assert toks
        for t in toks:
            assert t.t_deliver - t.t_send == route_latency(src, dst, spec)


# ---------------------------------------------------------------------------
# 4. partitioner optimality on 200 random graphs (exact makespan)
# ---------------------------------------------------------------------------

def test_partitioner_optimal_on_200_random_graphs():
    rng = random.Random(2024)
    for _ in range(200):
        n = rng.randint(2, 12)
        node_ids = [f"v{i}" for i in range(n)]
        profiles = {}
        for nid in node_ids:
            cp1 = rng.randint(10, 3000)
            profiles[nid] = NodeProfile(
                node_id=nid,
                ld_cycles={"1x": rng.randint(5, 1200),
                           "2x": rng.randint(5, 1200)},
                cp_cycles={"1x": cp1, "2x": (cp1 + 1) // 2},
                st_cycles={"1x": rng.randint(5, 1200),
                           "2x": rng.randint(5, 1200)},
                weight_cycles={"1x": 0, "2x": 0},
            )
        a = rng.randint(0, 3)
        b = rng.randint(1 if a == 0 else 0, 3 - a)
        got = partition_nodes(node_ids, profiles, a, b)
        ref = brute_force_partition(node_ids, profiles, a, b)
        assert got.makespan == ref.makespan


# ---------------------------------------------------------------------------
# 5. ring depths are minimal: beta hazard-free, beta-1 hazardous
# ---------------------------------------------------------------------------

def _random_pipeline_ir(rng):
    """Conv chain with one residual skip spanning >= 2 stages.

    Costs are shaped so one PU per stage is optimal and the final
    (skip-consuming) stage is the strict bottleneck: the upstream stages
    then run ahead on their buffer credits and every ring actually fills,
    which is the regime the extra slot exists for.
    """
    length = rng.randint(4, 6)
    ch, hw = rng.choice([16, 32]), 16
    wide = 3 * ch // 2
    nodes, edges = [], []
    prev = None
    for i in range(length):
        if i == length - 2:
            kk, oc, ic = 1, wide, ch          # cheap widening stage
        elif i == length - 1:
            kk, oc, ic = 3, ch, wide          # heaviest: 1.5x a plain conv
        else:
            kk, oc, ic = 3, ch, ch
        nodes.append(models._conv(f"c{i}", oc, ic, kk, kk, hw, hw))
        edges.append({"src": prev, "dst": f"c{i}",
                      "tensor_shape": [ic, hw, hw]})
        prev = f"c{i}"
    j = length - 1                     # sole consumer of c_j: fuses the add
    # Skip spans >= 2 stage boundaries: a distance-1 ring can lose a slot
    # without colliding (the consumer's load prefetch covers it), so the
    # minimality claim is about the longer-lived rings.
    i = rng.randint(0, length - 4)
    nodes.append(models._elt("skip_add", "add", (ch, hw, hw)))
    edges.append({"src": f"c{j}", "dst": "skip_add",
                  "tensor_shape": [ch, hw, hw]})
    edges.append({"src": f"c{i}", "dst": "skip_add",
                  "tensor_shape": [ch, hw, hw]})
    return {"schema_version": 1, "nodes": nodes, "edges": edges}


def _shrink_ring(plan, tid):
    """Rebuild images with tensor ``tid``'s ring cycling one slot short."""
    doc = plan.tensors[tid]
    base, depth = doc["base_addr"], doc["slots"]
    images = {}
    for key, prog in plan.images.items():
        instrs = [
            AddrCyc(ba=ins.ba, aoffs=ins.aoffs, nc=depth - 2, ic=depth - 2,
                    prg_end=ins.prg_end)
            if isinstance(ins, AddrCyc) and ins.ba == base else ins
            for ins in prog.instructions
        ]
        images[key] = Program(group=prog.group, instructions=instrs)
    return dataclasses.replace(plan, images=images)


def test_buffer_depth_minimality_on_100_random_pipelines():
    rng = random.Random(7)
    checked = 0
    attempts = 0
    while checked < 100:
        attempts += 1
        assert attempts < 400, "could not generate enough deep pipelines"
        ir = _random_pipeline_ir(rng)
        a = len(ir["nodes"]) - 2               # one PU per pipeline stage
        plan = compile_model(ir, default_system(a, 0), a, 0)
        deep = {tid: d["slots"] for tid, d in plan.tensors.items()
                if d["synced"] and d["slots"] >= 2}
        if not deep:
            continue
        # Enough rounds for upstream stages to drift to their credit
        # limits: the rate gap to the bottleneck is a fraction of a round,
        # so filling a ring takes several rounds per slot.
        report, _ = simulate_plan(plan, rounds=40)
        assert detect_hazards(report.accesses, tensors=plan.tensors) == []
        tid = max(deep, key=lambda t: (deep[t], t))
        report2, _ = simulate_plan(_shrink_ring(plan, tid), rounds=40)
        assert detect_hazards(report2.accesses, tensors=plan.tensors), \
            f"removing one slot of {tid} (depth {deep[tid]}) must collide"
        checked += 1


# ---------------------------------------------------------------------------
# 6. weight scheduler never overfills URAM; stalls monotone in capacity
# ---------------------------------------------------------------------------

def _chunky_ir():
    nodes, edges = [], []
    prev = None
    for i in range(6):
        nodes.append(models._conv(f"w{i}", 256, 256, 3, 3, 8, 8))
        edges.append({"src": prev, "dst": f"w{i}", "tensor_shape": [256, 8, 8]})
        prev = f"w{i}"
    return {"schema_version": 1, "nodes": nodes, "edges": edges}


def _walk_uram_residency(plan, pid):
    """Peak resident weight bytes, replayed from the CP instruction stream.

    Offline warm-up loads stay resident forever; each streamed slice is
    live from its transfer until the GEMM that consumes it retires.
    """
    summary = next(s for s in plan.stage_summaries if s["pid"] == pid)
    prog = plan.images[(pid, "CP")]
    icu = prog.instructions[-1].icu_ba
    warm_loads = [i for i in prog.instructions[:icu]
                  if isinstance(i, DataMove) and i.kind == "weights"]
    offline = sum(w.length for w in warm_loads[:len(summary["weight_offline"])])
    queue = deque(w.length for w in warm_loads[len(summary["weight_offline"]):])
    peak = offline + sum(queue)
    segs = plan.segments[(pid, "CP")]
    dynamic = set(summary["weight_dynamic"])
    for _ in range(2):                         # includes the wrap-around pair
        for nid, (s, e) in zip(summary["nodes"], segs):
            for ins in prog.instructions[s:e]:
                if isinstance(ins, DataMove) and ins.kind == "weights":
                    queue.append(ins.length)
                    peak = max(peak, offline + sum(queue))
                elif isinstance(ins, Compute):
                    peak = max(peak, offline + sum(queue))
                    if nid in dynamic:
                        queue.popleft()        # this tile's slice retires
    return peak


def test_weight_scheduler_safe_and_monotone_over_100_capacities():
    rng = random.Random(11)
    ir = _chunky_ir()
    caps = sorted(rng.randint(150_000, 2_500_000) for _ in range(100))
    prev_stall = None
    feasible = 0
    for cap in caps:
        system = SystemSpec(pus=[
            PuSpec(pid=p, pu_type="1x", uram_capacity_bytes=cap)
            for p in range(3)])
        try:
            plan = compile_model(ir, system, 3, 0)
        except WeightInfeasible:
            assert prev_stall is None      # feasibility is monotone too
            continue
        feasible += 1
        for s in plan.stage_summaries:
            assert _walk_uram_residency(plan, s["pid"]) <= cap
        stall = plan.estimates["weight_stall_cycles"]
        if prev_stall is not None:
            assert stall <= prev_stall
        prev_stall = stall
    assert feasible >= 50


# ---------------------------------------------------------------------------
# 7. DSE combinatorics (exact counts and frontier)
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _resnet_points():
    sys_ = default_system(5, 5)
    ir = models.resnet50_ir()
    singles = tuple(dse.enumerate_single(ir, sys_))
    hybrids = tuple(dse.compose_multi(ir, sys_, max_pipelines=5))
    return singles, hybrids


def test_dse_combinatorics_exact():
    singles, hybrids = _resnet_points()
    assert len(singles) == 35                  # (5+1)(5+1) - 1 sub-pools

    sys33 = default_system(3, 3)
    ir = models.two_conv_chain_ir()
    multi33 = dse.compose_multi(ir, sys33)
    pools = sorted({p.pools[0] for p in dse.enumerate_single(ir, sys33)})

    def count(i, ra, rb):                      # multiset counting oracle
        if i == len(pools):
            return 1
        x, y = pools[i]
        total, k = 0, 0
        while k * x <= ra and k * y <= rb:
            total += count(i + 1, ra - k * x, rb - k * y)
            k += 1
        return total

    assert len(multi33) == count(0, 3, 3) - 1

    front = dse.pareto(hybrids)
    tol = 0.01

    def dominated(q):                          # O(n^2) dominance oracle
        return any(
            p.throughput_per_s >= q.throughput_per_s * (1 - tol)
            and p.latency_cycles <= q.latency_cycles * (1 + tol)
            and (p.throughput_per_s > q.throughput_per_s * (1 + tol)
                 or p.latency_cycles < q.latency_cycles * (1 - tol))
            for p in hybrids if p is not q)

    assert {p.pools for p in front} == \
        {p.pools for p in hybrids if not dominated(p)}


# ---------------------------------------------------------------------------
# 8. ResNet-50 end to end on the 10-PU fabric
# ---------------------------------------------------------------------------

def test_resnet50_end_to_end_10_pu():
    sys_ = default_system(5, 5)
    plan = compile_model(models.resnet50_ir(), sys_, 5, 5)
    report, metrics = simulate_plan(plan, rounds=8)     # raises on deadlock
    assert detect_hazards(report.accesses) == []
    # pipeline balance efficiency: reference full-pipeline figure is
    # 0.909; ours is model-dependent but must land within 10 points
    assert abs(metrics.measured_pbe - 0.909) <= 0.10, metrics.measured_pbe
    print(f"full-pipeline PBE {metrics.measured_pbe:.4f} "
          f"(reference 0.909 +/- 0.10)")

    singles, hybrids = _resnet_points()
    best_single = max(p.throughput_per_s for p in singles)
    best5 = max((p for p in hybrids if p.pipelines == 5),
                key=lambda p: p.throughput_per_s)
    assert best5.throughput_per_s > best_single


# ---------------------------------------------------------------------------
# 9. determinism: same seed, byte-identical outputs
# ---------------------------------------------------------------------------

def test_rerun_outputs_byte_identical(tmp_path):
    runner = CliRunner()
    outs = []
    for tag in ("a", "b"):
        plan_dir = tmp_path / f"plan_{tag}"
        rep = tmp_path / f"rep_{tag}.json"
        dsej = tmp_path / f"dse_{tag}.json"
        r = runner.invoke(cli_main, [
            "--seed", "3", "compile", "two_conv_chain",
            "-o", str(plan_dir), "--pool-1x", "2", "--pool-2x", "0"])
        assert r.exit_code == 0, r.output
        r = runner.invoke(cli_main, [
            "--seed", "3", "simulate", str(plan_dir), "--rounds", "4",
            "--report", str(rep)])
        assert r.exit_code == 0, r.output
        r = runner.invoke(cli_main, [
            "--seed", "3", "dse", "two_conv_chain", "--json", str(dsej)])
        assert r.exit_code == 0, r.output
        blobs = [(plan_dir / "plan.json").read_bytes(),
                 rep.read_bytes(), dsej.read_bytes()]
        blobs += [p.read_bytes()
                  for p in sorted((plan_dir / "images").iterdir())]
        outs.append(blobs)
    assert outs[0] == outs[1]
