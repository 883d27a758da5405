"""Instruction types, 64-bit wire encoding, and dynamic state updates.

Wire format (normative for this toolchain):

    bits [63:58]  OPCD (6 bits, distinct per mnemonic)
    bit  [57]     PRG_END
    bits [56:0]   payload, per variant:

    ProgCtrl   NR[15:0]  ICU_BA[31:16]
    Config     P0[13:0]  P1[27:14]  P2[41:28]  P3[55:42]   (14-bit params)
    DataMove   CUR_BA[32:0]  LEN[56:33]                     (33 + 24 bits)
    AddrCyc    BA[32:0]  AOFFS[48:33]  NC[52:49]  IC[56:53]
               AOFFS is a signed count of 256-byte units; NC/IC are 4 bits.
    Sync       PID[3:0]  BID[11:4]  BASE_BID[19:12]  NC[35:20]  IC[51:36]
    Compute    M[6:0]  K[23:7]  N[40:24]  ROUNDS[48:41]  SCALE[54:49]
               RELU[55]  ADD[56]

Addresses are 33-bit HBM byte addresses (8 GiB). AddrCyc squeezes its four
fields into 57 bits by expressing the offset in 256-byte units and capping
NC/IC at 15; generated address plans keep buffer regions 256-byte aligned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

WORD_BITS = 64
OPCD_SHIFT = 58
PRG_END_BIT = 57

ADDR_BITS = 33
LEN_BITS = 24
PID_BITS = 4
BID_BITS = 8
SYNC_NC_BITS = 16
CYC_NC_BITS = 4
AOFFS_BITS = 16
AOFFS_UNIT = 256
CONFIG_PARAM_BITS = 14

# Config sub-kinds and their parameter arity (params are opaque scalars;
# the assembler and encoder validate arity and width only).
CONFIG_KINDS = {
    "stride_pattern": 3,
    "im2col": 4,
    "uram_addr": 2,
    "res_add_stride": 3,
    "prog_param": 2,
}

DATAMOVE_KINDS = ("linear", "im2col", "stride", "weights", "res_add", "res_add_stride")
SYNC_KINDS = ("send_req", "send_ack", "wait_req", "wait_ack")

# OPCD assignments. 0x00 and 0x3F are reserved and never decode.
OPCODES = {
    "PRG_PRM": 0x01,
    "STRIDE_PRM": 0x02,
    "IM2COL_PRM": 0x03,
    "URAM_PRM": 0x04,
    "RES_ADD_STRIDE_PRM": 0x05,
    "PARAM_PRM": 0x06,
    "LINEAR_ADM": 0x07,
    "IM2COL_ADM": 0x08,
    "STRIDE_ADM": 0x09,
    "WEIGHTS_ADM": 0x0A,
    "RES_ADD_ADM": 0x0B,
    "RES_ADD_STRIDE_ADM": 0x0C,
    "CYCLE_ADDR": 0x0D,
    "SEND_REQ": 0x0E,
    "SEND_ACK": 0x0F,
    "WAIT_REQ": 0x10,
    "WAIT_ACK": 0x11,
    "GEMM": 0x12,
}
MNEMONIC_BY_OPCODE = {v: k for k, v in OPCODES.items()}

CONFIG_MNEMONIC = {
    "stride_pattern": "STRIDE_PRM",
    "im2col": "IM2COL_PRM",
    "uram_addr": "URAM_PRM",
    "res_add_stride": "RES_ADD_STRIDE_PRM",
    "prog_param": "PARAM_PRM",
}
CONFIG_KIND_BY_MNEMONIC = {v: k for k, v in CONFIG_MNEMONIC.items()}

DATAMOVE_MNEMONIC = {
    "linear": "LINEAR_ADM",
    "im2col": "IM2COL_ADM",
    "stride": "STRIDE_ADM",
    "weights": "WEIGHTS_ADM",
    "res_add": "RES_ADD_ADM",
    "res_add_stride": "RES_ADD_STRIDE_ADM",
}
DATAMOVE_KIND_BY_MNEMONIC = {v: k for k, v in DATAMOVE_MNEMONIC.items()}

SYNC_MNEMONIC = {
    "send_req": "SEND_REQ",
    "send_ack": "SEND_ACK",
    "wait_req": "WAIT_REQ",
    "wait_ack": "WAIT_ACK",
}
SYNC_KIND_BY_MNEMONIC = {v: k for k, v in SYNC_MNEMONIC.items()}

# DataMove kinds whose ADM must be immediately preceded by its Config.
MANDATORY_CONFIG = {
    "im2col": "im2col",
    "stride": "stride_pattern",
    "weights": "uram_addr",
    "res_add_stride": "res_add_stride",
}


class IsaError(Exception):
    pass


class FieldOverflow(IsaError):
    def __init__(self, field: str, value: int, bits: int):
        self.field = field
        self.value = value
        self.bits = bits
        super().__init__(f"field {field}={value} exceeds {bits} bits")


class UnknownOpcode(IsaError):
    def __init__(self, bits: int):
        self.bits = bits
        super().__init__(f"unassigned OPCD 0x{bits:02X}")


@dataclass(frozen=True)
class ProgCtrl:
    nr: int              # rounds; 0 = infinite loop
    icu_ba: int          # jump target at end of each round
    prg_end: bool = False

    @property
    def mnemonic(self) -> str:
        return "PRG_PRM"


@dataclass(frozen=True)
class Config:
    kind: str
    params: tuple
    prg_end: bool = False

    def __post_init__(self):
        if self.kind not in CONFIG_KINDS:
            raise IsaError(f"unknown Config kind {self.kind!r}")
        if len(self.params) != CONFIG_KINDS[self.kind]:
            raise IsaError(
                f"Config {self.kind} takes {CONFIG_KINDS[self.kind]} params, "
                f"got {len(self.params)}"
            )
        object.__setattr__(self, "params", tuple(self.params))

    @property
    def mnemonic(self) -> str:
        return CONFIG_MNEMONIC[self.kind]


@dataclass(frozen=True)
class DataMove:
    kind: str
    cur_ba: int          # HBM byte address; latched for a successor AddrCyc
    length: int          # bytes
    prg_end: bool = False

    def __post_init__(self):
        if self.kind not in DATAMOVE_KINDS:
            raise IsaError(f"unknown DataMove kind {self.kind!r}")

    @property
    def mnemonic(self) -> str:
        return DATAMOVE_MNEMONIC[self.kind]


@dataclass(frozen=True)
class AddrCyc:
    ba: int              # reset base address
    aoffs: int           # signed byte offset, multiple of AOFFS_UNIT
    nc: int              # cycle count; period is NC+1
    ic: int              # iteration counter, loaded as NC
    prg_end: bool = False

    @property
    def mnemonic(self) -> str:
        return "CYCLE_ADDR"


@dataclass(frozen=True)
class Sync:
    kind: str
    peer_pid: int        # DST_PID for send_*, SRC_PID for wait_*
    bid: int
    base_bid: int
    nc: int              # 0 bypasses the BID update entirely
    ic: int
    prg_end: bool = False

    def __post_init__(self):
        if self.kind not in SYNC_KINDS:
            raise IsaError(f"unknown Sync kind {self.kind!r}")

    @property
    def mnemonic(self) -> str:
        return SYNC_MNEMONIC[self.kind]


@dataclass(frozen=True)
class Compute:
    m: int               # GEMM tile rows (<= SA rows)
    k: int
    n: int
    rounds: int = 1
    scale: int = 0       # power-of-two output shift
    relu_enable: bool = False
    add_enable: bool = False
    prg_end: bool = False

    @property
    def mnemonic(self) -> str:
        return "GEMM"


Instruction = Union[ProgCtrl, Config, DataMove, AddrCyc, Sync, Compute]


def _check(field: str, value: int, bits: int) -> int:
    if not 0 <= value < (1 << bits):
        raise FieldOverflow(field, value, bits)
    return value


def _check_signed(field: str, value: int, bits: int) -> int:
    lim = 1 << (bits - 1)
    if not -lim <= value < lim:
        raise FieldOverflow(field, value, bits)
    return value & ((1 << bits) - 1)


def _sext(value: int, bits: int) -> int:
    if value & (1 << (bits - 1)):
        return value - (1 << bits)
    return value


def encode(instr: Instruction) -> int:
    """Encode an instruction into its 64-bit word."""
    if isinstance(instr, ProgCtrl):
        opcd = OPCODES["PRG_PRM"]
        payload = _check("NR", instr.nr, 16) | (_check("ICU_BA", instr.icu_ba, 16) << 16)
    elif isinstance(instr, Config):
        opcd = OPCODES[instr.mnemonic]
        payload = 0
        for i, p in enumerate(instr.params):
            payload |= _check(f"P{i}", p, CONFIG_PARAM_BITS) << (i * CONFIG_PARAM_BITS)
    elif isinstance(instr, DataMove):
        opcd = OPCODES[instr.mnemonic]
        payload = _check("CUR_BA", instr.cur_ba, ADDR_BITS) | (
            _check("LEN", instr.length, LEN_BITS) << ADDR_BITS
        )
    elif isinstance(instr, AddrCyc):
        opcd = OPCODES["CYCLE_ADDR"]
        if instr.aoffs % AOFFS_UNIT != 0:
            raise FieldOverflow("AOFFS", instr.aoffs, AOFFS_BITS)
        units = _check_signed("AOFFS", instr.aoffs // AOFFS_UNIT, AOFFS_BITS)
        payload = (
            _check("BA", instr.ba, ADDR_BITS)
            | (units << ADDR_BITS)
            | (_check("NC", instr.nc, CYC_NC_BITS) << 49)
            | (_check("IC", instr.ic, CYC_NC_BITS) << 53)
        )
    elif isinstance(instr, Sync):
        opcd = OPCODES[instr.mnemonic]
        payload = (
            _check("PID", instr.peer_pid, PID_BITS)
            | (_check("BID", instr.bid, BID_BITS) << 4)
            | (_check("BASE_BID", instr.base_bid, BID_BITS) << 12)
            | (_check("NC", instr.nc, SYNC_NC_BITS) << 20)
            | (_check("IC", instr.ic, SYNC_NC_BITS) << 36)
        )
    elif isinstance(instr, Compute):
        opcd = OPCODES["GEMM"]
        payload = (
            _check("M", instr.m, 7)
            | (_check("K", instr.k, 17) << 7)
            | (_check("N", instr.n, 17) << 24)
            | (_check("ROUNDS", instr.rounds, 8) << 41)
            | (_check("SCALE", instr.scale, 6) << 49)
            | (int(instr.relu_enable) << 55)
            | (int(instr.add_enable) << 56)
        )
    else:
        raise IsaError(f"not an instruction: {instr!r}")
    return (opcd << OPCD_SHIFT) | (int(instr.prg_end) << PRG_END_BIT) | payload


def decode(word: int) -> Instruction:
    """Decode a 64-bit word; inverse of :func:`encode` on valid words."""
    if not 0 <= word < (1 << 64):
        raise IsaError(f"not a 64-bit word: {word:#x}")
    opcd = word >> OPCD_SHIFT
    prg_end = bool((word >> PRG_END_BIT) & 1)
    payload = word & ((1 << PRG_END_BIT) - 1)
    mnem = MNEMONIC_BY_OPCODE.get(opcd)
    if mnem is None:
        raise UnknownOpcode(opcd)
    if mnem == "PRG_PRM":
        return ProgCtrl(nr=payload & 0xFFFF, icu_ba=(payload >> 16) & 0xFFFF, prg_end=prg_end)
    if mnem in CONFIG_KIND_BY_MNEMONIC:
        kind = CONFIG_KIND_BY_MNEMONIC[mnem]
        arity = CONFIG_KINDS[kind]
        mask = (1 << CONFIG_PARAM_BITS) - 1
        params = tuple((payload >> (i * CONFIG_PARAM_BITS)) & mask for i in range(arity))
        return Config(kind=kind, params=params, prg_end=prg_end)
    if mnem in DATAMOVE_KIND_BY_MNEMONIC:
        return DataMove(
            kind=DATAMOVE_KIND_BY_MNEMONIC[mnem],
            cur_ba=payload & ((1 << ADDR_BITS) - 1),
            length=(payload >> ADDR_BITS) & ((1 << LEN_BITS) - 1),
            prg_end=prg_end,
        )
    if mnem == "CYCLE_ADDR":
        units = _sext((payload >> ADDR_BITS) & ((1 << AOFFS_BITS) - 1), AOFFS_BITS)
        return AddrCyc(
            ba=payload & ((1 << ADDR_BITS) - 1),
            aoffs=units * AOFFS_UNIT,
            nc=(payload >> 49) & 0xF,
            ic=(payload >> 53) & 0xF,
            prg_end=prg_end,
        )
    if mnem in SYNC_KIND_BY_MNEMONIC:
        return Sync(
            kind=SYNC_KIND_BY_MNEMONIC[mnem],
            peer_pid=payload & 0xF,
            bid=(payload >> 4) & 0xFF,
            base_bid=(payload >> 12) & 0xFF,
            nc=(payload >> 20) & 0xFFFF,
            ic=(payload >> 36) & 0xFFFF,
            prg_end=prg_end,
        )
    # GEMM
    return Compute(
        m=payload & 0x7F,
        k=(payload >> 7) & 0x1FFFF,
        n=(payload >> 24) & 0x1FFFF,
        rounds=(payload >> 41) & 0xFF,
        scale=(payload >> 49) & 0x3F,
        relu_enable=bool((payload >> 55) & 1),
        add_enable=bool((payload >> 56) & 1),
        prg_end=prg_end,
    )


def addr_cyc_update(ic: int, cur_ba: int, instr: AddrCyc) -> tuple:
    """One AddrCyc write-back step.

    Returns (ic', cur_ba'): reset to (NC, BA) when the counter has expired,
    otherwise decrement and advance the predecessor DataMove's address.
    """
    if ic == 0:
        return instr.nc, instr.ba
    return ic - 1, cur_ba + instr.aoffs


def sync_update(bid: int, ic: int, instr: Sync) -> tuple:
    """One Sync write-back step: bypass (NC=0), reset, or cyclic increment."""
    if instr.nc == 0:
        return bid, ic
    if ic == 0:
        return instr.base_bid, instr.nc
    return bid + 1, ic - 1
