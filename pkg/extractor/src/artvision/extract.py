"""Embedding extraction: image folder -> AEMB table.

One vector per readable image file, keyed by the file's stem (the lot id).
The backbone stays frozen by default; an optional fine-tune manifest trains
backbone + regression head end-to-end at small scale on (image, log price)
pairs before extraction.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import torch
from PIL import Image

from . import aembio
from .backbones import load_backbone, preprocess
from .regressor import VisionRegressor

log = logging.getLogger("artvision")

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".webp", ".tif", ".tiff")


class ExtractionError(ValueError):
    pass


def image_files(image_dir):
    root = Path(image_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS)


def _load(path):
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as exc:
        log.warning("skipping unreadable image %s: %s", path, exc)
        return None


def read_manifest(path):
    """CSV with lot_id,log_price and optional sale_year,has_prev columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "lot_id" not in fields or "log_price" not in fields:
            raise ExtractionError(
                f"{path}: manifest needs lot_id and log_price columns, got {fields}"
            )
        extras = [c for c in ("sale_year", "has_prev") if c in fields]
        rows = {}
        for row in reader:
            rows[row["lot_id"]] = (
                float(row["log_price"]),
                [float(row[c]) for c in extras],
            )
    return rows, len(extras)


def _fine_tune(backbone, tensors, manifest_path, epochs=3, lr=1e-4, seed=0):
    targets, extra_dim = read_manifest(manifest_path)
    pairs = [(t, targets[lot]) for lot, t in tensors if lot in targets]
    if not pairs:
        raise ExtractionError("fine-tune manifest matches no extracted image")
    for p in backbone.model.parameters():
        p.requires_grad_(True)
    torch.manual_seed(seed)
    model = VisionRegressor(backbone, extra_dim=extra_dim)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    X = torch.stack([t for t, _ in pairs])
    y = torch.tensor([tgt for _, (tgt, _) in pairs], dtype=torch.float32)
    E = (
        torch.tensor([ex for _, (_, ex) in pairs], dtype=torch.float32)
        if extra_dim
        else None
    )
    for epoch in range(epochs):
        opt.zero_grad()
        loss = torch.mean((model(X, E) - y) ** 2)
        loss.backward()
        opt.step()
        log.info("fine-tune epoch %d: mse %.4f", epoch + 1, float(loss.detach()))
    backbone.model.eval()
    for p in backbone.model.parameters():
        p.requires_grad_(False)


def extract_embeddings(
    image_dir,
    backbone="resnet50",
    out_path=None,
    fine_tune_manifest=None,
    batch_size: int = 8,
):
    """Embed every readable image in ``image_dir``; optionally write AEMB.

    Returns ``(entries, backbone)`` where entries maps lot id to a float32
    vector of the backbone's pooled dimension.
    """
    bb = backbone if not isinstance(backbone, str) else load_backbone(backbone)
    paths = image_files(image_dir)
    tensors = []
    for path in paths:
        img = _load(path)
        if img is not None:
            tensors.append((path.stem, preprocess(img)))
    if not tensors:
        raise ExtractionError(f"no readable images in {image_dir}")

    if fine_tune_manifest is not None:
        _fine_tune(bb, tensors, fine_tune_manifest)

    entries = {}
    with torch.no_grad():
        for start in range(0, len(tensors), batch_size):
            chunk = tensors[start : start + batch_size]
            feats = bb.features(torch.stack([t for _, t in chunk]))
            for (lot_id, _), vec in zip(chunk, feats):
                entries[lot_id] = vec.numpy().astype("<f4")

    if out_path is not None:
        aembio.write_aemb(out_path, entries, bb.dim, bb.tag)
        log.info("wrote %d embeddings (dim %d) to %s", len(entries), bb.dim, out_path)
    return entries, bb
