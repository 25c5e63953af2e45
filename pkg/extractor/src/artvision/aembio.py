"""Binary AEMB embedding tables: the wire format this tool emits.

The valuation package on the other side of the pipe reads these files; the
two implementations share nothing but this byte layout ("AEMB", version 1,
all integers little-endian):

    magic   4 bytes  b"AEMB"
    version u32      1
    dim     u32      vector length
    count   u64      number of records
    tag     u16 length + UTF-8 backbone tag
    records count times: u16 id length, UTF-8 lot id, dim float32 values
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"AEMB"
VERSION = 1


class AEMBError(ValueError):
    pass


def write_aemb(path, entries: dict, dim: int, backbone_tag: str) -> None:
    """Write ``{lot_id: float32 vector}`` in insertion order."""
    for lot_id, vec in entries.items():
        vec = np.asarray(vec)
        if vec.shape != (dim,):
            raise AEMBError(f"entry {lot_id}: shape {vec.shape} != ({dim},)")
        if not np.all(np.isfinite(vec)):
            raise AEMBError(f"entry {lot_id}: non-finite values")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(entries)))
        tag = backbone_tag.encode("utf-8")
        fh.write(struct.pack("<H", len(tag)))
        fh.write(tag)
        for lot_id, vec in entries.items():
            ident = lot_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_aemb(path):
    """Return ``(entries, dim, backbone_tag)``; rejects malformed files."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise AEMBError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, dim, count = struct.unpack_from("<IIQ", data, 4)
    except struct.error:
        raise AEMBError(f"{path}: truncated header") from None
    if version != VERSION:
        raise AEMBError(f"{path}: unsupported version {version}")
    off = 20
    try:
        (tag_len,) = struct.unpack_from("<H", data, off)
        off += 2
        tag = data[off : off + tag_len].decode("utf-8")
        off += tag_len
        entries = {}
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", data, off)
            off += 2
            lot_id = data[off : off + id_len].decode("utf-8")
            off += id_len
            end = off + dim * 4
            if end > len(data):
                raise AEMBError(f"{path}: truncated record for {lot_id!r}")
            entries[lot_id] = np.frombuffer(data[off:end], dtype="<f4")
            off = end
    except struct.error:
        raise AEMBError(f"{path}: truncated record") from None
    if off != len(data):
        raise AEMBError(f"{path}: {len(data) - off} trailing bytes")
    return entries, dim, tag
