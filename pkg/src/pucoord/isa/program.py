"""Per-ICU-group instruction programs and their validity rules."""

from __future__ import annotations

from dataclasses import dataclass, field

from .encoding import (
    AddrCyc,
    Compute,
    Config,
    DataMove,
    Instruction,
    IsaError,
    MANDATORY_CONFIG,
    ProgCtrl,
    Sync,
)

GROUPS = ("LD", "CP", "ST")

# Which mnemonics may appear in each ICU group (Table 1c membership).
_GROUP_MEMBERS = {
    "LD": {
        "LINEAR_ADM", "IM2COL_PRM", "IM2COL_ADM", "STRIDE_PRM", "STRIDE_ADM",
        "SEND_ACK", "WAIT_REQ", "CYCLE_ADDR", "PRG_PRM", "PARAM_PRM",
    },
    "CP": {
        "URAM_PRM", "WEIGHTS_ADM", "RES_ADD_STRIDE_PRM", "RES_ADD_STRIDE_ADM",
        "RES_ADD_ADM", "CYCLE_ADDR", "GEMM", "PRG_PRM", "PARAM_PRM",
    },
    "ST": {
        "LINEAR_ADM", "STRIDE_PRM", "STRIDE_ADM",
        "SEND_REQ", "WAIT_ACK", "CYCLE_ADDR", "PRG_PRM", "PARAM_PRM",
    },
}


class ProgramError(IsaError):
    pass


class GroupViolation(ProgramError):
    def __init__(self, instr: Instruction, group: str, index: int = -1):
        self.instr = instr
        self.group = group
        self.index = index
        super().__init__(f"{instr.mnemonic} not allowed in {group} group (index {index})")


class MissingConfigPredecessor(ProgramError):
    def __init__(self, instr: Instruction, index: int = -1):
        self.instr = instr
        self.index = index
        super().__init__(
            f"{instr.mnemonic} at index {index} must be immediately preceded "
            f"by its {MANDATORY_CONFIG[instr.kind]} Config"
        )


@dataclass
class Program:
    group: str
    instructions: list = field(default_factory=list)
    base_addr: int = 0

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ProgramError(f"unknown ICU group {self.group!r}")

    def __len__(self):
        return len(self.instructions)


def validate_program(program: Program) -> None:
    """Raise ProgramError if the program breaks any structural rule.

    Checks: group membership, mandatory Config->ADM sequences, exactly one
    reachable PRG_END (it must be the final instruction), IC <= NC load-time
    invariants, ProgCtrl jump targets in range, and AddrCyc placement after
    a DataMove.
    """
    instrs = program.instructions
    if not instrs:
        raise ProgramError(f"{program.group} program is empty")

    allowed = _GROUP_MEMBERS[program.group]
    ends = []
    for i, instr in enumerate(instrs):
        if instr.mnemonic not in allowed:
            raise GroupViolation(instr, program.group, i)
        if isinstance(instr, DataMove) and instr.kind in MANDATORY_CONFIG:
            want = MANDATORY_CONFIG[instr.kind]
            prev = instrs[i - 1] if i > 0 else None
            if not (isinstance(prev, Config) and prev.kind == want):
                raise MissingConfigPredecessor(instr, i)
        if isinstance(instr, AddrCyc):
            if not any(isinstance(p, DataMove) for p in instrs[:i]):
                raise ProgramError(
                    f"CYCLE_ADDR at index {i} has no preceding DataMove to update"
                )
            if instr.ic > instr.nc:
                raise ProgramError(f"CYCLE_ADDR at index {i}: IC={instr.ic} > NC={instr.nc}")
        if isinstance(instr, Sync) and instr.nc > 0 and instr.ic > instr.nc:
            raise ProgramError(f"{instr.mnemonic} at index {i}: IC={instr.ic} > NC={instr.nc}")
        if isinstance(instr, ProgCtrl) and instr.icu_ba >= len(instrs):
            raise ProgramError(
                f"PRG_PRM at index {i}: ICU_BA={instr.icu_ba} outside program"
            )
        if instr.prg_end:
            ends.append(i)

    if len(ends) != 1:
        raise ProgramError(
            f"{program.group} program must have exactly one PRG_END instruction, "
            f"found {len(ends)}"
        )
    if ends[0] != len(instrs) - 1:
        raise ProgramError(
            f"instructions after PRG_END (index {ends[0]}) are unreachable"
        )


def find_predecessor_adm(instructions: list, index: int) -> int:
    """Index of the nearest DataMove before `index`; -1 if none."""
    for j in range(index - 1, -1, -1):
        if isinstance(instructions[j], DataMove):
            return j
    return -1
