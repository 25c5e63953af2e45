"""Extraction pipeline tests: determinism, robustness, sanity of geometry."""

import logging
import shutil

import numpy as np
import pytest

import artvision as av
from conftest import make_image, write_corpus


def _cos(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_duplicate_files_get_identical_vectors(tmp_path, resnet):
    img_dir = tmp_path / "imgs"
    paths = write_corpus(img_dir, 1)
    shutil.copyfile(paths[0], img_dir / "copy_of_lot000.png")
    entries, _ = av.extract_embeddings(img_dir, backbone=resnet)
    assert np.array_equal(entries["lot000"], entries["copy_of_lot000"])


def test_output_dim_matches_backbone_pooled_dim(tmp_path, resnet, vit):
    img_dir = tmp_path / "imgs"
    write_corpus(img_dir, 2)
    for bb, dim in ((resnet, 2048), (vit, 384)):
        entries, used = av.extract_embeddings(img_dir, backbone=bb)
        assert used.dim == dim
        assert all(v.shape == (dim,) for v in entries.values())


def test_extraction_is_deterministic(tmp_path, resnet):
    img_dir = tmp_path / "imgs"
    write_corpus(img_dir, 3)
    first, _ = av.extract_embeddings(img_dir, backbone=resnet)
    second, _ = av.extract_embeddings(img_dir, backbone=resnet)
    assert all(np.array_equal(first[k], second[k]) for k in first)


def test_mild_crop_stays_closer_than_a_random_image(tmp_path, resnet):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    n = 20
    rng = np.random.default_rng(42)
    for i in range(n):
        img = make_image(100 + i, size=(180, 180))
        img.save(img_dir / f"orig{i:02d}.png")
        w, h = img.size
        img.crop((9, 9, w - 9, h - 9)).save(img_dir / f"crop{i:02d}.png")
    entries, _ = av.extract_embeddings(img_dir, backbone=resnet, batch_size=10)
    for i in range(n):
        j = int(rng.choice([k for k in range(n) if k != i]))
        own_crop = _cos(entries[f"orig{i:02d}"], entries[f"crop{i:02d}"])
        other = _cos(entries[f"orig{i:02d}"], entries[f"orig{j:02d}"])
        assert own_crop > other, (i, j, own_crop, other)


def test_unreadable_image_is_skipped_with_a_log_line(tmp_path, resnet, caplog):
    img_dir = tmp_path / "imgs"
    write_corpus(img_dir, 2)
    (img_dir / "broken.png").write_bytes(b"this is not an image")
    with caplog.at_level(logging.WARNING, logger="artvision"):
        entries, _ = av.extract_embeddings(img_dir, backbone=resnet)
    assert set(entries) == {"lot000", "lot001"}
    assert any("broken.png" in rec.getMessage() for rec in caplog.records)


def test_zero_readable_images_is_a_failure(tmp_path, resnet):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    (img_dir / "junk.jpg").write_bytes(b"\x00\x01")
    with pytest.raises(av.ExtractionError, match="no readable images"):
        av.extract_embeddings(img_dir, backbone=resnet)


def test_missing_directory_raises(resnet):
    with pytest.raises(FileNotFoundError):
        av.extract_embeddings("/nonexistent/images", backbone=resnet)


def test_fine_tune_manifest_changes_the_embeddings(tmp_path):
    img_dir = tmp_path / "imgs"
    write_corpus(img_dir, 4)
    manifest = tmp_path / "manifest.csv"
    manifest.write_text(
        "lot_id,log_price,sale_year,has_prev\n"
        "lot000,11.2,2015,0\nlot001,12.1,2018,1\n"
        "lot002,10.8,2020,0\nlot003,12.9,2021,1\n",
        encoding="utf-8",
    )
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        frozen_bb = av.load_backbone("resnet50")
        tuned_bb = av.load_backbone("resnet50", freeze=False)
    frozen, _ = av.extract_embeddings(img_dir, backbone=frozen_bb)
    tuned, _ = av.extract_embeddings(
        img_dir, backbone=tuned_bb, fine_tune_manifest=manifest
    )
    assert set(frozen) == set(tuned)
    assert any(not np.array_equal(frozen[k], tuned[k]) for k in frozen)


def test_manifest_schema_is_validated(tmp_path):
    from artvision.extract import read_manifest

    bad = tmp_path / "bad.csv"
    bad.write_text("id,price\nlot0,1.0\n", encoding="utf-8")
    with pytest.raises(av.ExtractionError, match="columns"):
        read_manifest(bad)
