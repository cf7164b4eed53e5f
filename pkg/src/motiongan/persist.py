"""Shared binary container format for dataset and checkpoint files.

Layout: ASCII magic, uint32-LE header length, JSON header, raw payload
bytes, uint32-LE CRC32 of everything between the magic and the checksum.
JSON carries floats through ``repr`` (the json module's default), which
round-trips float64 exactly.
"""

from __future__ import annotations

import json
import struct
import zlib


class IntegrityError(IOError):
    """File is not a valid container: bad magic, truncation, or checksum."""


def write_container(path, magic: bytes, header: dict, payload: bytes) -> None:
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = struct.pack("<I", len(header_bytes)) + header_bytes + payload
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def read_container(path, magic: bytes) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(magic) + 8:
        raise IntegrityError(f"{path}: truncated file")
    if blob[:len(magic)] != magic:
        raise IntegrityError(f"{path}: bad magic {blob[:len(magic)]!r}, expected {magic!r}")
    body, (crc,) = blob[len(magic):-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError(f"{path}: checksum mismatch")
    (header_len,) = struct.unpack("<I", body[:4])
    if 4 + header_len > len(body):
        raise IntegrityError(f"{path}: header length field exceeds file size")
    try:
        header = json.loads(body[4:4 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"{path}: undecodable header ({exc})") from exc
    return header, body[4 + header_len:]
