"""Cycle-level discrete-event simulator for the PU pool.

Each PU runs three instruction groups (LD, CP, ST) as independent
sequencers.  The engine models:

- per-instruction issue cost (one sys-clk cycle),
- HBM transfers with fair processor sharing per channel,
- control tokens routed between PUs with configurable latency and a
  per-destination single-token-per-cycle port arbitrated round-robin,
- saturating REQ/ACK receipt counters keyed by (kind, BID, source PU),
- double-buffer gating between the groups of one PU at node-segment
  granularity,
- asynchronous weight streaming into URAM, with each GEMM blocking on
  the transfers issued before the previous GEMM.

Event ordering is a (time, sequence) heap, so runs are deterministic.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from ..isa import (
    AddrCyc,
    Compute,
    Config,
    DataMove,
    ProgCtrl,
    Sync,
    addr_cyc_update,
    find_predecessor_adm,
    sync_update,
    validate_program,
)
from .arbiter import RoundRobinArbiter
from .cost import DEFAULT_COST_MODEL
from .system import SystemSpec, channel_of, route_latency

LUTRAM_MAX = (1 << 16) - 1

# Busy/wait states recorded in the timelines.
S_CTRL = "ctrl"
S_HBM = "hbm"
S_COMPUTE = "compute"
W_REQ = "wait_req"
W_ACK = "wait_ack"
W_WEIGHTS = "wait_weights"
W_BUFFER = "wait_buffer"


class SimError(Exception):
    pass


class BadAddress(SimError):
    def __init__(self, pid, group, addr, num_channels):
        self.addr = addr
        super().__init__(
            f"PU{pid}/{group}: address 0x{addr:X} outside the "
            f"{num_channels}-channel HBM window"
        )


class LimitExceeded(SimError):
    def __init__(self, limit):
        self.limit = limit
        super().__init__(f"simulation exceeded {limit} cycles")


class DeadlockDetected(SimError):
    def __init__(self, cycle, blocked):
        self.cycle = cycle
        self.blocked = blocked  # list of dicts
        lines = ", ".join(
            f"PU{b['pid']}/{b['group']}@{b['ip']} {b['mnemonic']} on {b['reason']}"
            for b in blocked
        )
        super().__init__(f"deadlock at cycle {cycle:g}: {lines}")


@dataclass
class Token:
    kind: str            # "REQ" or "ACK"
    bid: int
    src: int
    dst: int
    t_send: float
    t_arrive: float
    t_deliver: float = -1.0


@dataclass
class Access:
    pid: int
    group: str
    rw: str              # "r" or "w"
    addr: int
    length: int
    t0: float
    t1: float


@dataclass
class _Future:
    done: bool = False
    access: Access | None = None
    waiter: object = None     # _Proc blocked on a barrier containing this


class _Counter:
    __slots__ = ("value", "waiters")

    def __init__(self):
        self.value = 0
        self.waiters = []     # (threshold, proc)

    def satisfied(self, threshold):
        return self.value >= threshold


class _Channel:
    """One HBM channel with equal-share bandwidth among active transfers."""

    def __init__(self, sim, bw):
        self.sim = sim
        self.bw = float(bw)
        self.active = []      # [remaining_bytes, future]
        self.last = 0.0
        self.ver = 0

    def _settle(self):
        now = self.sim.now
        if self.active and now > self.last:
            rate = self.bw / len(self.active)
            dec = rate * (now - self.last)
            for entry in self.active:
                entry[0] = max(0.0, entry[0] - dec)
        self.last = now

    def _reschedule(self):
        self.ver += 1
        if not self.active:
            return
        rate = self.bw / len(self.active)
        t_done = self.sim.now + min(e[0] for e in self.active) / rate
        self.sim._at(t_done, self._complete, self.ver)

    def start(self, nbytes, future):
        self._settle()
        if nbytes <= 0:
            future.done = True
            return
        self.active.append([float(nbytes), future])
        self._reschedule()

    def _complete(self, ver):
        if ver != self.ver:
            return
        self._settle()
        # anything below a micro-byte is rounding residue; finishing it
        # here keeps the reschedule delta above double-precision ulp at
        # large simulation times (otherwise time stops advancing)
        finished = [e for e in self.active if e[0] <= 1e-6]
        self.active = [e for e in self.active if e[0] > 1e-6]
        for _, fut in finished:
            fut.done = True
            if fut.access is not None:
                fut.access.t1 = self.sim.now
            if fut.waiter is not None:
                fut.waiter.barrier_done(fut)
        self._reschedule()


class _Port:
    """Destination-side token port: one delivery per cycle, round-robin."""

    def __init__(self, sim, pid):
        self.sim = sim
        self.pid = pid
        self.pending = []
        self.free_at = 0.0
        self.live = False
        self.arb = RoundRobinArbiter()

    def arrive(self, tok):
        self.pending.append(tok)
        if not self.live:
            self.live = True
            self.sim._at(max(self.sim.now, self.free_at), self._serve, None)

    def _serve(self, _):
        now = self.sim.now
        src = self.arb.grant({t.src for t in self.pending})
        idx = next(i for i, t in enumerate(self.pending) if t.src == src)
        tok = self.pending.pop(idx)
        tok.t_deliver = now
        self.sim._deliver(tok)
        self.free_at = now + 1
        if self.pending:
            self.sim._at(self.free_at, self._serve, None)
        else:
            self.live = False


class _Proc:
    """Interpreter for one (PU, group) program."""

    def __init__(self, sim, pid, group, program, segments):
        validate_program(program)
        self.sim = sim
        self.pid = pid
        self.group = group
        self.program = program
        self.instrs = program.instructions
        last = self.instrs[-1]
        if isinstance(last, ProgCtrl):
            self.nr = sim.rounds if sim.rounds is not None else last.nr
            self.icu_ba = last.icu_ba
        else:
            self.nr = sim.rounds if sim.rounds is not None else 1
            self.icu_ba = 0
        self.segments = segments or [(self.icu_ba, len(self.instrs))]
        self._check_segments()
        # dynamic per-instruction state
        self.dm_cur_ba = {
            i: ins.cur_ba for i, ins in enumerate(self.instrs)
            if isinstance(ins, DataMove)
        }
        self.cyc_ic = {
            i: ins.ic for i, ins in enumerate(self.instrs)
            if isinstance(ins, AddrCyc)
        }
        self.cyc_target = {
            i: find_predecessor_adm(self.instrs, i) for i in self.cyc_ic
        }
        self.sync_state = {
            i: [ins.bid, ins.ic] for i, ins in enumerate(self.instrs)
            if isinstance(ins, Sync)
        }
        # weight-streaming barrier: a GEMM waits for the transfers issued
        # before the *previous* GEMM, so a prefetch placed just before a
        # GEMM overlaps it and is enforced one GEMM later.  The first
        # GEMM waits for the warm-up transfers.
        self.weight_futs = []
        self.prev_mark = 0
        self.barrier_pending = 0
        # bookkeeping
        self.timeline = []
        self.round_log = []
        self.halted = False
        self.blocked = None
        self.ip = 0
        self.gen = self._main()

    def _check_segments(self):
        expect = self.icu_ba
        for s, e in self.segments:
            if s != expect or e < s:
                raise SimError(
                    f"PU{self.pid}/{self.group}: segments must tile "
                    f"[{self.icu_ba}, {len(self.instrs)}) contiguously"
                )
            expect = e
        if expect != len(self.instrs):
            raise SimError(
                f"PU{self.pid}/{self.group}: segments end at {expect}, "
                f"program has {len(self.instrs)} instructions"
            )

    # -- timeline helpers -----------------------------------------------

    def _busy(self, t0, t1, state, detail=""):
        if t1 > t0:
            self.timeline.append((t0, t1, state, detail))

    # -- barrier callback from channel completions ------------------------

    def barrier_done(self, fut):
        fut.waiter = None
        self.barrier_pending -= 1
        if self.barrier_pending == 0:
            self.sim._resume(self, None)

    # -- gating thresholds -----------------------------------------------

    def _gates(self, seg, rnd):
        pid = self.pid
        if self.group == "LD":
            return [(("CP", seg), rnd - 1)]
        if self.group == "CP":
            return [(("LD", seg), rnd + 1), (("ST", seg), rnd - 1)]
        return [(("CP", seg), rnd + 1)]

    # -- main control loop -------------------------------------------------

    def _main(self):
        sim = self.sim
        n = len(self.instrs)
        rnd = 0
        while True:
            t_round = sim.now
            for si, (s, e) in enumerate(self.segments):
                if rnd == 0 and si == 0:
                    for ip in range(0, self.icu_ba):
                        yield from self._exec(ip)
                    self.prev_mark = len(self.weight_futs)
                for (grp, seg), thr in self._gates(si, rnd):
                    if thr > 0 and (self.pid, grp) in sim.present:
                        yield from self._wait_counter((self.pid, grp, seg), thr)
                for ip in range(s, e):
                    yield from self._exec(ip)
                sim._bump((self.pid, self.group, si))
            self.round_log.append((t_round, sim.now))
            rnd += 1
            if self.nr != 0 and rnd >= self.nr:
                return

    # -- blocking primitives ----------------------------------------------

    def _wait_counter(self, key, threshold):
        sim = self.sim
        ctr = sim.counters[key]
        if ctr.satisfied(threshold):
            return
        t0 = sim.now
        self.blocked = self._blk(W_BUFFER, f"{key[1]}[{key[2]}]>={threshold}")
        yield ("counter", ctr, threshold)
        self.blocked = None
        self._busy(t0, sim.now, W_BUFFER, f"{key[1]} seg {key[2]}")

    def _blk(self, reason, detail):
        ins = self.instrs[self.ip] if self.ip < len(self.instrs) else None
        return {
            "pid": self.pid,
            "group": self.group,
            "ip": self.ip,
            "mnemonic": ins.mnemonic if ins is not None else "-",
            "reason": reason,
            "detail": detail,
            "since": self.sim.now,
        }

    # -- instruction execution --------------------------------------------

    def _exec(self, ip):
        sim = self.sim
        self.ip = ip
        instr = self.instrs[ip]
        if isinstance(instr, (ProgCtrl, Config)):
            t0 = sim.now
            yield ("delay", 1)
            self._busy(t0, sim.now, S_CTRL, instr.mnemonic)
        elif isinstance(instr, AddrCyc):
            t0 = sim.now
            yield ("delay", 1)
            self._busy(t0, sim.now, S_CTRL, instr.mnemonic)
            tgt = self.cyc_target[ip]
            ic, ba = addr_cyc_update(self.cyc_ic[ip], self.dm_cur_ba[tgt], instr)
            self.cyc_ic[ip] = ic
            self.dm_cur_ba[tgt] = ba
        elif isinstance(instr, DataMove):
            yield from self._exec_datamove(ip, instr)
        elif isinstance(instr, Sync):
            yield from self._exec_sync(ip, instr)
        elif isinstance(instr, Compute):
            yield from self._exec_gemm(instr)
        else:  # pragma: no cover
            raise SimError(f"unhandled instruction {instr!r}")

    def _exec_datamove(self, ip, instr):
        sim = self.sim
        t0 = sim.now
        yield ("delay", 1)
        self._busy(t0, sim.now, S_CTRL, instr.mnemonic)
        if instr.length <= 0:
            return
        addr = self.dm_cur_ba[ip]
        ch = channel_of(addr)
        if ch >= sim.system.hbm.num_channels:
            raise BadAddress(self.pid, self.group, addr,
                             sim.system.hbm.num_channels)
        rw = "w" if self.group == "ST" else "r"
        acc = Access(self.pid, self.group, rw, addr, instr.length, sim.now, -1.0)
        sim.accesses.append(acc)
        fut = _Future(access=acc)
        if instr.kind == "weights" and sim.async_weights:
            sim.channels[ch].start(instr.length, fut)
            self.weight_futs.append(fut)
            return
        t1 = sim.now
        self.blocked = self._blk(S_HBM, f"ch{ch} {instr.length}B")
        sim.channels[ch].start(instr.length, fut)
        if not fut.done:
            fut.waiter = self
            self.barrier_pending = 1
            yield ("block",)
        self.blocked = None
        self._busy(t1, sim.now, S_HBM, f"{instr.mnemonic} ch{ch}")

    def _exec_sync(self, ip, instr):
        sim = self.sim
        state = self.sync_state[ip]
        bid = state[0] if instr.nc != 0 else instr.bid
        if instr.kind.startswith("send"):
            t0 = sim.now
            yield ("delay", 1)
            self._busy(t0, sim.now, S_CTRL, instr.mnemonic)
            kind = "REQ" if instr.kind == "send_req" else "ACK"
            sim._send(kind, bid, self.pid, instr.peer_pid)
        else:
            kind = "REQ" if instr.kind == "wait_req" else "ACK"
            key = (kind, bid, instr.peer_pid)
            lut = sim.lutram[self.pid]
            t0 = sim.now
            if lut.get(key, 0) > 0:
                lut[key] -= 1
            else:
                self.blocked = self._blk(
                    W_REQ if kind == "REQ" else W_ACK,
                    f"{kind} bid={bid} from PU{instr.peer_pid}")
                yield ("token", key)
                self.blocked = None
                self._busy(t0, sim.now,
                           W_REQ if kind == "REQ" else W_ACK,
                           f"bid={bid} src={instr.peer_pid}")
            t1 = sim.now
            yield ("delay", 1)
            self._busy(t1, sim.now, S_CTRL, instr.mnemonic)
        state[0], state[1] = sync_update(state[0], state[1], instr)

    def _exec_gemm(self, instr):
        sim = self.sim
        mark = len(self.weight_futs)
        pending = [f for f in self.weight_futs[:self.prev_mark] if not f.done]
        if pending:
            t0 = sim.now
            self.blocked = self._blk(W_WEIGHTS, f"{len(pending)} transfers")
            for f in pending:
                f.waiter = self
            self.barrier_pending = len(pending)
            yield ("block",)
            self.blocked = None
            self._busy(t0, sim.now, W_WEIGHTS, "")
        self.prev_mark = mark
        cycles = sim.cost_model.cycles(instr, sim.system.pu(self.pid),
                                       sim.system.clocks)
        t0 = sim.now
        yield ("delay", cycles)
        self._busy(t0, sim.now, S_COMPUTE,
                   f"m={instr.m} k={instr.k} n={instr.n}")


class Simulator:
    """Runs a set of per-PU programs to completion and collects traces.

    ``images`` maps ``(pid, group)`` to a :class:`Program`.  ``segments``
    optionally maps the same keys to a list of ``(start_ip, end_ip)``
    node-segment boundaries tiling the loop body; segment indices align
    across the three groups of one PU for buffer gating.  ``rounds``
    overrides every program's round count.
    """

    def __init__(self, system: SystemSpec, images: dict, *, segments=None,
                 rounds=None, cost_model=None, limit=1_000_000_000,
                 async_weights=True):
        self.system = system
        self.rounds = rounds
        self.cost_model = cost_model or DEFAULT_COST_MODEL
        self.limit = limit
        self.async_weights = async_weights
        self.now = 0.0
        self._seq = 0
        self._heap = []
        self.counters = {}
        self.lutram = {p.pid: {} for p in system.pus}
        self.token_waiters = {p.pid: {} for p in system.pus}
        self.ports = {p.pid: _Port(self, p.pid) for p in system.pus}
        self.channels = [
            _Channel(self, system.hbm.bytes_per_cycle_per_channel)
            for _ in range(system.hbm.num_channels)
        ]
        self.accesses = []
        self.token_log = []
        segments = segments or {}
        self.procs = []
        for (pid, group), prog in sorted(images.items()):
            system.pu(pid)  # raises UnknownPid
            if prog.group != group:
                raise SimError(f"program for PU{pid}/{group} is a "
                               f"{prog.group} program")
            self.procs.append(
                _Proc(self, pid, group, prog, segments.get((pid, group))))
        self.present = {(p.pid, p.group) for p in self.procs}
        seg_counts = {}
        for proc in self.procs:
            n = len(proc.segments)
            prev = seg_counts.setdefault(proc.pid, n)
            if prev != n:
                raise SimError(
                    f"PU{proc.pid}: groups disagree on segment count "
                    f"({prev} vs {n})")
            for grp in ("LD", "CP", "ST"):
                for si in range(n):
                    self.counters.setdefault((proc.pid, grp, si), _Counter())

    # -- event core ---------------------------------------------------------

    def _at(self, t, fn, arg):
        heapq.heappush(self._heap, (t, self._seq, fn, arg))
        self._seq += 1

    def _resume(self, proc, value):
        self._at(self.now, self._advance_ev, (proc, value))

    def _advance_ev(self, arg):
        proc, value = arg
        self._advance(proc, value)

    def _advance(self, proc, value=None):
        while True:
            try:
                req = proc.gen.send(value)
            except StopIteration:
                proc.halted = True
                return
            value = None
            op = req[0]
            if op == "delay":
                self._at(self.now + req[1], self._advance_ev, (proc, None))
                return
            if op == "token":
                key = req[1]
                lut = self.lutram[proc.pid]
                if lut.get(key, 0) > 0:
                    lut[key] -= 1
                    continue
                self.token_waiters[proc.pid].setdefault(key, []).append(proc)
                return
            if op == "counter":
                ctr, threshold = req[1], req[2]
                if ctr.satisfied(threshold):
                    continue
                ctr.waiters.append((threshold, proc))
                return
            if op == "block":
                return
            raise SimError(f"unknown request {op!r}")  # pragma: no cover

    # -- services used by procs ----------------------------------------------

    def _bump(self, key):
        ctr = self.counters[key]
        ctr.value += 1
        if ctr.waiters:
            still = []
            for threshold, proc in ctr.waiters:
                if ctr.value >= threshold:
                    self._resume(proc, None)
                else:
                    still.append((threshold, proc))
            ctr.waiters = still

    def _send(self, kind, bid, src, dst):
        lat = route_latency(src, dst, self.system)
        tok = Token(kind, bid, src, dst, self.now, self.now + lat)
        self._at(tok.t_arrive, self.ports[dst].arrive, tok)

    def _deliver(self, tok):
        self.token_log.append(tok)
        key = (tok.kind, tok.bid, tok.src)
        waiters = self.token_waiters[tok.dst].get(key)
        if waiters:
            # a blocked WAIT consumes the token directly
            self._resume(waiters.pop(0), None)
        else:
            lut = self.lutram[tok.dst]
            lut[key] = min(LUTRAM_MAX, lut.get(key, 0) + 1)

    # -- run -------------------------------------------------------------------

    def run(self):
        for proc in self.procs:
            if self.rounds == 0:
                proc.halted = True
                continue
            self._resume(proc, None)
        while self._heap:
            t, _, fn, arg = heapq.heappop(self._heap)
            if t > self.limit:
                raise LimitExceeded(self.limit)
            self.now = t
            fn(arg)
        blocked = [p.blocked for p in self.procs if not p.halted]
        if blocked:
            raise DeadlockDetected(self.now, [b or {} for b in blocked])
        total = max((r[1] for p in self.procs for r in p.round_log), default=0.0)
        from .report import build_report
        return build_report(self, total)
