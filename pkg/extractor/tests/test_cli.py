"""End-to-end CLI tests: outputs, exit codes, determinism."""

import json

import pytest
from PIL import Image

from artvision.cli import EXIT_DATA, EXIT_MISSING, EXIT_SCHEMA, EXIT_USAGE, main
from conftest import write_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    img_dir = root / "imgs"
    write_corpus(img_dir, 4)
    manifest = root / "manifest.csv"
    manifest.write_text(
        "lot_id,log_price\nlot000,11.0\nlot001,12.0\nlot002,11.5\nlot003,12.5\n",
        encoding="utf-8",
    )
    return root, img_dir, manifest


def test_extract_writes_table_and_run_metadata(corpus):
    root, img_dir, _ = corpus
    out = root / "run1"
    assert main(["extract", "--images", str(img_dir), "--out", str(out)]) == 0
    assert (out / "embeddings.aemb").exists()
    assert (out / "VERSION").read_text().startswith("artvision-")
    config = json.loads((out / "runconfig.json").read_text())
    assert config["subcommand"] == "extract"
    assert config["args"]["backbone"] == "resnet50"


def test_extract_reruns_are_byte_identical(corpus):
    root, img_dir, _ = corpus
    a, b = root / "det_a", root / "det_b"
    for out in (a, b):
        assert main(["extract", "--images", str(img_dir), "--out", str(out)]) == 0
    assert (a / "embeddings.aemb").read_bytes() == (b / "embeddings.aemb").read_bytes()


def test_inspect_prints_the_header(corpus, capsys):
    root, img_dir, _ = corpus
    out = root / "run1"
    if not (out / "embeddings.aemb").exists():
        main(["extract", "--images", str(img_dir), "--out", str(out)])
    assert main(["inspect", "--embeddings", str(out / "embeddings.aemb")]) == 0
    text = capsys.readouterr().out
    assert "4 vectors" in text and "dim 2048" in text


def test_gradcam_writes_overlays_sized_like_the_originals(corpus):
    root, img_dir, manifest = corpus
    out = root / "cams"
    code = main(
        [
            "gradcam",
            "--images", str(img_dir),
            "--manifest", str(manifest),
            "--limit", "2",
            "--out", str(out),
        ]
    )
    assert code == 0
    summary = json.loads((out / "cams.json").read_text())
    assert len(summary) == 2
    for lot in summary:
        assert summary[lot]["heatmap_min"] >= 0
        with Image.open(out / f"{lot}_cam.png") as overlay_img, Image.open(
            img_dir / f"{lot}.png"
        ) as original:
            assert overlay_img.size == original.size


def test_exit_codes(corpus, tmp_path):
    root, img_dir, manifest = corpus
    out = str(tmp_path / "x")
    missing = main(["extract", "--images", "/no/such/dir", "--out", out])
    assert missing == EXIT_MISSING

    bad = tmp_path / "bad.aemb"
    bad.write_bytes(b"NOPE" + b"\x00" * 30)
    schema = main(["inspect", "--embeddings", str(bad)])
    assert schema == EXIT_SCHEMA

    data = main(
        [
            "gradcam",
            "--images", str(img_dir),
            "--backbone", "vit_small",
            "--manifest", str(manifest),
            "--out", out,
        ]
    )
    assert data == EXIT_DATA

    usage = main(["extract", "--images", str(img_dir), "--backbone", "alexnet", "--out", out])
    assert usage == EXIT_USAGE
    assert len({missing, schema, data, usage}) == 4
