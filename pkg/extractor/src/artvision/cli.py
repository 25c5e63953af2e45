"""The ``artvision`` command: embedding extraction and saliency overlays.

Exit codes: 0 success, 2 usage, 3 missing input, 4 malformed file, 5 data
error. Every output directory receives ``runconfig.json`` and ``VERSION``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import __version__, aembio
from .backbones import BACKBONES, BackboneError, load_backbone, preprocess
from .extract import ExtractionError, extract_embeddings, image_files, read_manifest
from .gradcam import GradCamError, UnsupportedBackboneError, grad_cam, save_overlay
from .regressor import VisionRegressor

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_DATA = 5


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_runconfig(out: Path, args) -> None:
    doc = {
        "tool": "artvision",
        "version": f"artvision-{__version__}",
        "subcommand": args.subcommand,
        "args": {
            k: v
            for k, v in sorted(vars(args).items())
            if k not in ("func", "subcommand")
        },
    }
    with open(out / "runconfig.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    (out / "VERSION").write_text(f"artvision-{__version__}\n", encoding="utf-8")


def cmd_extract(args) -> None:
    out = _out_dir(args)
    entries, bb = extract_embeddings(
        args.images,
        backbone=args.backbone,
        out_path=out / "embeddings.aemb",
        fine_tune_manifest=args.manifest,
        batch_size=args.batch_size,
    )
    _write_runconfig(out, args)
    print(f"{len(entries)} embeddings (dim {bb.dim}, backbone {bb.tag}) -> {out / 'embeddings.aemb'}")


def _fit_head(model, feats, extras, targets, lam: float = 1e-3) -> None:
    """Closed-form ridge fit of the linear head on frozen pooled features."""
    X = feats if extras is None else np.hstack([feats, extras])
    X1 = np.hstack([X, np.ones((len(X), 1))])
    A = X1.T @ X1 + lam * np.eye(X1.shape[1])
    coefs = np.linalg.solve(A, X1.T @ targets)
    with torch.no_grad():
        model.head.weight.copy_(torch.tensor(coefs[:-1], dtype=torch.float32)[None])
        model.head.bias.copy_(torch.tensor([coefs[-1]], dtype=torch.float32))


def cmd_gradcam(args) -> None:
    out = _out_dir(args)
    bb = load_backbone(args.backbone)
    if not bb.has_spatial_maps:
        raise UnsupportedBackboneError(
            f"backbone {args.backbone!r} yields pooled features only; "
            "saliency maps need convolutional feature maps"
        )
    targets, extra_dim = read_manifest(args.manifest)
    paths = [p for p in image_files(args.images) if p.stem in targets]
    if not paths:
        raise ExtractionError("manifest matches no image in the folder")

    tensors, images = {}, {}
    for path in paths:
        with Image.open(path) as img:
            images[path.stem] = img.convert("RGB")
        tensors[path.stem] = preprocess(images[path.stem])

    model = VisionRegressor(bb, extra_dim=extra_dim)
    model.eval()
    lots = sorted(tensors)
    feats_t = torch.stack([tensors[k] for k in lots])
    with torch.no_grad():
        feats = bb.features(feats_t).numpy().astype(float)
    extras_np = (
        np.array([targets[k][1] for k in lots], dtype=float) if extra_dim else None
    )
    _fit_head(model, feats, extras_np, np.array([targets[k][0] for k in lots]))

    summary = {}
    for i, lot in enumerate(lots[: args.limit] if args.limit else lots):
        extras = (
            torch.tensor(extras_np[i], dtype=torch.float32) if extra_dim else None
        )
        cam = grad_cam(model, tensors[lot], extras=extras)
        save_overlay(images[lot], cam, out / f"{lot}_cam.png")
        summary[lot] = {
            "prediction": cam.y,
            "heatmap_max": float(cam.heatmap.max()),
            "heatmap_min": float(cam.heatmap.min()),
        }
    with open(out / "cams.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_runconfig(out, args)
    print(f"{len(summary)} overlays -> {out}")


def cmd_inspect(args) -> None:
    entries, dim, tag = aembio.read_aemb(args.embeddings)
    print(f"{args.embeddings}: {len(entries)} vectors, dim {dim}, backbone {tag}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artvision",
        description="vision-backbone embeddings and saliency overlays",
    )
    parser.add_argument(
        "--version", action="version", version=f"artvision-{__version__}"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("extract", help="embed an image folder into an AEMB table")
    p.set_defaults(func=cmd_extract)
    p.add_argument("--images", required=True, help="image folder (lot id = file stem)")
    p.add_argument("--backbone", choices=BACKBONES, default="resnet50")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manifest", help="lot_id,log_price CSV enabling fine-tune mode")
    p.add_argument("--batch-size", type=int, default=8)

    p = sub.add_parser("gradcam", help="saliency overlays for a toy-scale price head")
    p.set_defaults(func=cmd_gradcam)
    p.add_argument("--images", required=True)
    p.add_argument("--backbone", choices=BACKBONES, default="resnet50")
    p.add_argument("--manifest", required=True, help="lot_id,log_price CSV for the head")
    p.add_argument("--limit", type=int, help="overlay only the first N lots")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("inspect", help="print an AEMB file's header")
    p.set_defaults(func=cmd_inspect)
    p.add_argument("--embeddings", required=True)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except aembio.AEMBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (BackboneError, ExtractionError, GradCamError, ValueError) as exc:
        schema = any(
            word in str(exc).lower() for word in ("magic", "version", "columns", "format")
        )
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA if schema else EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
