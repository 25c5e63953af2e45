"""Image-embedding tables and their binary wire format, plus 2-d PCA.

Wire format ("AEMB", version 1, all integers little-endian):

    magic   4 bytes  b"AEMB"
    version u32      1
    dim     u32      vector length
    count   u64      number of records
    tag     u16 length + UTF-8 backbone tag
    records count times: u16 id length, UTF-8 lot id, dim float32 values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"AEMB"
VERSION = 1


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict  # lot_id -> float32 vector
    backbone_tag: str = "unknown"

    def __post_init__(self):
        for lot_id, vec in self.entries.items():
            if len(vec) != self.dim:
                raise EmbeddingError(f"entry {lot_id}: length {len(vec)} != dim {self.dim}")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"entry {lot_id}: non-finite values")

    def matrix(self, lot_ids) -> np.ndarray:
        missing = [i for i in lot_ids if i not in self.entries]
        if missing:
            raise EmbeddingError(f"missing embeddings for {len(missing)} lots, e.g. {missing[:3]}")
        return np.stack([self.entries[i] for i in lot_ids]).astype(float)


def write_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, table.dim, len(table.entries)))
        tag = table.backbone_tag.encode("utf-8")
        fh.write(struct.pack("<H", len(tag)))
        fh.write(tag)
        for lot_id, vec in table.entries.items():
            ident = lot_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_embeddings(path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise EmbeddingError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, dim, count = struct.unpack_from("<IIQ", data, 4)
    except struct.error:
        raise EmbeddingError(f"{path}: truncated header") from None
    if version != VERSION:
        raise EmbeddingError(f"{path}: unsupported version {version}")
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
                raise EmbeddingError(f"{path}: truncated record for {lot_id!r}")
            vec = np.frombuffer(data[off:end], dtype="<f4")
            off = end
            if lot_id in entries:
                raise EmbeddingError(f"{path}: duplicate lot id {lot_id!r}")
            entries[lot_id] = vec
    except struct.error:
        raise EmbeddingError(f"{path}: truncated record") from None
    if off != len(data):
        raise EmbeddingError(f"{path}: {len(data) - off} trailing bytes")
    return EmbeddingTable(dim=dim, entries=entries, backbone_tag=tag)


@dataclass
class PCAProjection:
    components: np.ndarray  # 2 x dim, orthonormal rows
    explained_variance_ratio: np.ndarray  # length 2, nonincreasing
    means: np.ndarray

    def project(self, vectors) -> np.ndarray:
        return (np.asarray(vectors, dtype=float) - self.means) @ self.components.T


def pca_project(vectors) -> tuple:
    """Centered thin-SVD PCA onto two components.

    Sign convention: the largest-magnitude loading of each component is
    positive. Rank-1 inputs get a zero second ratio with a warning.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] < 3 or V.shape[1] < 2:
        raise EmbeddingError("pca_project needs >= 3 vectors of dim >= 2")
    means = V.mean(axis=0)
    Xc = V - means
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:2].copy()
    var = s**2 / (len(V) - 1)
    total = var.sum()
    ratios = np.zeros(2)
    if total > 0:
        ratios = var[:2] / total
    if len(s) < 2 or s[1] <= s[0] * 1e-12:
        import warnings

        warnings.warn("input has rank < 2; second component ratio set to 0")
        ratios[1] = 0.0
    for k in range(2):
        j = int(np.argmax(np.abs(comps[k])))
        if comps[k, j] < 0:
            comps[k] *= -1
    proj = PCAProjection(components=comps, explained_variance_ratio=ratios, means=means)
    return proj, proj.project(V)
