"""ISA for the instruction-coordinated multi-PU accelerator."""

from .encoding import (
    AddrCyc,
    AOFFS_UNIT,
    Compute,
    Config,
    CONFIG_KINDS,
    DataMove,
    FieldOverflow,
    Instruction,
    IsaError,
    MANDATORY_CONFIG,
    OPCODES,
    ProgCtrl,
    Sync,
    UnknownOpcode,
    addr_cyc_update,
    decode,
    encode,
    sync_update,
)
from .program import (
    GROUPS,
    GroupViolation,
    MissingConfigPredecessor,
    Program,
    ProgramError,
    find_predecessor_adm,
    validate_program,
)
from .asm import AsmSyntaxError, assemble, disassemble, format_instruction
from .image import MAGIC, ImageError, read_image, write_image

__all__ = [
    "AddrCyc", "AOFFS_UNIT", "Compute", "Config", "CONFIG_KINDS", "DataMove",
    "FieldOverflow", "Instruction", "IsaError", "MANDATORY_CONFIG", "OPCODES",
    "ProgCtrl", "Sync", "UnknownOpcode", "addr_cyc_update", "decode", "encode",
    "sync_update", "GROUPS", "GroupViolation", "MissingConfigPredecessor",
    "Program", "ProgramError", "find_predecessor_adm", "validate_program",
    "AsmSyntaxError", "assemble", "disassemble", "format_instruction",
    "MAGIC", "ImageError", "read_image", "write_image",
]
