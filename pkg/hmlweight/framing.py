"""
Binary container shared by the native dataset and checkpoint files:

    8 bytes   magic
    u32 LE    format version
    u32 LE    header length L
    L bytes   UTF-8 JSON header, sorted keys, compact separators
    ...       payload
"""

import json
import struct
from typing import Any

from .errors import ParseError

_FRAME = struct.Struct("<8sII")


def write_frame(magic: bytes, version: int, header: dict[str, Any], *payloads: bytes) -> bytes:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([_FRAME.pack(magic, version, len(header_bytes)), header_bytes, *payloads])


def read_frame(data: bytes, magic: bytes, version: int) -> tuple[dict[str, Any], bytes]:
    """Returns (header, payload)."""
    if len(data) < _FRAME.size:
        raise ParseError("file too short for a header frame")
    found_magic, found_version, header_len = _FRAME.unpack_from(data)
    if found_magic != magic:
        raise ParseError(f"bad magic {found_magic!r}, expected {magic!r}")
    if found_version != version:
        raise ParseError(f"unsupported format version {found_version}")
    end = _FRAME.size + header_len
    if len(data) < end:
        raise ParseError("truncated header")
    try:
        header = json.loads(data[_FRAME.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"invalid header: {e}") from None
    if not isinstance(header, dict):
        raise ParseError("header is not a JSON object")
    return header, data[end:]
