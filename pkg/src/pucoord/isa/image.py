"""Binary instruction image container.

Layout: a 16-byte little-endian header followed by 64-bit words.

    magic      8 bytes  b"PUCOORD1"
    pu_id      u16
    group      u16      (0=LD, 1=CP, 2=ST)
    word_count u32
"""

from __future__ import annotations

import struct

from .encoding import IsaError, decode, encode
from .program import GROUPS, Program, validate_program

MAGIC = b"PUCOORD1"
_HEADER = struct.Struct("<8sHHI")


class ImageError(IsaError):
    pass


def write_image(program: Program, pu_id: int) -> bytes:
    validate_program(program)
    words = [encode(i) for i in program.instructions]
    header = _HEADER.pack(MAGIC, pu_id, GROUPS.index(program.group), len(words))
    return header + b"".join(struct.pack("<Q", w) for w in words)


def read_image(data: bytes) -> tuple:
    """Decode an image blob into (pu_id, Program)."""
    if len(data) < _HEADER.size:
        raise ImageError("image shorter than header")
    magic, pu_id, group_idx, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ImageError(f"bad magic {magic!r}")
    if group_idx >= len(GROUPS):
        raise ImageError(f"bad group index {group_idx}")
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise ImageError(f"expected {count} words, got {len(body) // 8}")
    instrs = [decode(struct.unpack_from("<Q", body, 8 * i)[0]) for i in range(count)]
    return pu_id, Program(group=GROUPS[group_idx], instructions=instrs)
