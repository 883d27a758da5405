"""Text assembly for ICU programs.

One instruction per line: ``MNEMONIC KEY=VALUE ... [END]``. Two directives
set program metadata: ``.group LD|CP|ST`` and ``.base N``. ``#`` starts a
comment. ``assemble(disassemble(p))`` is the identity on canonical form.
"""

from __future__ import annotations

from .encoding import (
    AddrCyc,
    Compute,
    Config,
    CONFIG_KIND_BY_MNEMONIC,
    CONFIG_KINDS,
    DataMove,
    DATAMOVE_KIND_BY_MNEMONIC,
    Instruction,
    IsaError,
    OPCODES,
    ProgCtrl,
    Sync,
    SYNC_KIND_BY_MNEMONIC,
)
from .program import Program, validate_program


class AsmSyntaxError(IsaError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _parse_int(line_no: int, key: str, text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise AsmSyntaxError(line_no, f"bad integer for {key}: {text!r}") from None


def _parse_fields(line_no: int, tokens: list) -> tuple:
    fields = {}
    prg_end = False
    for tok in tokens:
        if tok == "END":
            prg_end = True
            continue
        if "=" not in tok:
            raise AsmSyntaxError(line_no, f"expected KEY=VALUE, got {tok!r}")
        key, _, val = tok.partition("=")
        fields[key.upper()] = _parse_int(line_no, key, val)
    return fields, prg_end


def _take(line_no: int, fields: dict, key: str, default=None) -> int:
    if key in fields:
        return fields.pop(key)
    if default is not None:
        return default
    raise AsmSyntaxError(line_no, f"missing field {key}")


def parse_line(line_no: int, line: str) -> Instruction:
    tokens = line.split()
    mnem = tokens[0].upper()
    if mnem not in OPCODES:
        raise AsmSyntaxError(line_no, f"unknown mnemonic {tokens[0]!r}")
    fields, prg_end = _parse_fields(line_no, tokens[1:])

    if mnem == "PRG_PRM":
        instr = ProgCtrl(
            nr=_take(line_no, fields, "NR"),
            icu_ba=_take(line_no, fields, "BA", 0),
            prg_end=prg_end,
        )
    elif mnem in CONFIG_KIND_BY_MNEMONIC:
        kind = CONFIG_KIND_BY_MNEMONIC[mnem]
        arity = CONFIG_KINDS[kind]
        params = tuple(_take(line_no, fields, f"P{i}", 0) for i in range(arity))
        instr = Config(kind=kind, params=params, prg_end=prg_end)
    elif mnem in DATAMOVE_KIND_BY_MNEMONIC:
        instr = DataMove(
            kind=DATAMOVE_KIND_BY_MNEMONIC[mnem],
            cur_ba=_take(line_no, fields, "BA"),
            length=_take(line_no, fields, "LEN"),
            prg_end=prg_end,
        )
    elif mnem == "CYCLE_ADDR":
        nc = _take(line_no, fields, "NC")
        instr = AddrCyc(
            ba=_take(line_no, fields, "BA"),
            aoffs=_take(line_no, fields, "AOFFS", 0),
            nc=nc,
            ic=_take(line_no, fields, "IC", nc),
            prg_end=prg_end,
        )
    elif mnem in SYNC_KIND_BY_MNEMONIC:
        nc = _take(line_no, fields, "NC", 0)
        instr = Sync(
            kind=SYNC_KIND_BY_MNEMONIC[mnem],
            peer_pid=_take(line_no, fields, "PID"),
            bid=_take(line_no, fields, "BID", 0),
            base_bid=_take(line_no, fields, "BASE_BID", 0),
            nc=nc,
            ic=_take(line_no, fields, "IC", nc),
            prg_end=prg_end,
        )
    else:  # GEMM
        instr = Compute(
            m=_take(line_no, fields, "M"),
            k=_take(line_no, fields, "K"),
            n=_take(line_no, fields, "N"),
            rounds=_take(line_no, fields, "ROUNDS", 1),
            scale=_take(line_no, fields, "SCALE", 0),
            relu_enable=bool(_take(line_no, fields, "RELU", 0)),
            add_enable=bool(_take(line_no, fields, "ADD", 0)),
            prg_end=prg_end,
        )
    if fields:
        raise AsmSyntaxError(line_no, f"unknown fields for {mnem}: {sorted(fields)}")
    return instr


def assemble(text: str) -> Program:
    """Parse assembly text into a validated Program."""
    group = None
    base = 0
    instrs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".group"):
            parts = line.split()
            if len(parts) != 2 or parts[1].upper() not in ("LD", "CP", "ST"):
                raise AsmSyntaxError(line_no, "usage: .group LD|CP|ST")
            group = parts[1].upper()
            continue
        if line.startswith(".base"):
            parts = line.split()
            if len(parts) != 2:
                raise AsmSyntaxError(line_no, "usage: .base N")
            base = _parse_int(line_no, ".base", parts[1])
            continue
        if group is None:
            raise AsmSyntaxError(line_no, "instruction before .group directive")
        instrs.append(parse_line(line_no, line))
    if group is None:
        raise AsmSyntaxError(0, "no .group directive found")
    if not instrs:
        raise AsmSyntaxError(0, "program has no instructions")
    program = Program(group=group, instructions=instrs, base_addr=base)
    validate_program(program)
    return program


def format_instruction(instr: Instruction) -> str:
    if isinstance(instr, ProgCtrl):
        body = f"NR={instr.nr} BA={instr.icu_ba}"
    elif isinstance(instr, Config):
        body = " ".join(f"P{i}={p}" for i, p in enumerate(instr.params))
    elif isinstance(instr, DataMove):
        body = f"BA=0x{instr.cur_ba:X} LEN={instr.length}"
    elif isinstance(instr, AddrCyc):
        body = f"BA=0x{instr.ba:X} AOFFS={instr.aoffs} NC={instr.nc} IC={instr.ic}"
    elif isinstance(instr, Sync):
        body = (
            f"PID={instr.peer_pid} BID={instr.bid} BASE_BID={instr.base_bid} "
            f"NC={instr.nc} IC={instr.ic}"
        )
    else:
        body = (
            f"M={instr.m} K={instr.k} N={instr.n} ROUNDS={instr.rounds} "
            f"SCALE={instr.scale} RELU={int(instr.relu_enable)} ADD={int(instr.add_enable)}"
        )
    tail = " END" if instr.prg_end else ""
    return f"{instr.mnemonic} {body}{tail}".rstrip()


def disassemble(program: Program) -> str:
    """Render a Program as canonical assembly text."""
    lines = [f".group {program.group}", f".base {program.base_addr}"]
    lines.extend(format_instruction(i) for i in program.instructions)
    return "\n".join(lines) + "\n"
