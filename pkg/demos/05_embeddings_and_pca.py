"""Embedding files and the 2-d PCA map.

Round-trips an embedding table through the binary AEMB format, projects
the vectors onto their first two principal components, and writes a
deterministic SVG scatter colored by category.
"""

import os
import tempfile

import numpy as np

from artval import embed, svgplot, synth

# ---------------------------------------------------------------------------
# generate embeddings and exercise the wire format

records, table, _ = synth.generate(synth.DGPConfig(n_objects=600, beta_img=0.8, seed=4))
workdir = tempfile.mkdtemp(prefix="artval-demo-")
path = os.path.join(workdir, "embeddings.aemb")

embed.write_embeddings(table, path)
loaded = embed.read_embeddings(path)
identical = all(
    np.array_equal(table.entries[k], loaded.entries[k]) for k in table.entries
)
print(f"wrote {len(table.entries)} vectors (dim {table.dim}) to {path}")
print(f"round trip bit-identical: {identical}")

# ---------------------------------------------------------------------------
# PCA: how much structure do two components capture?

vectors = loaded.matrix(sorted(loaded.entries))
projection, points = embed.pca_project(vectors)
r1, r2 = projection.explained_variance_ratio
print(f"explained variance: PC1 {r1:.1%}, PC2 {r2:.1%}")

# ---------------------------------------------------------------------------
# deterministic SVG scatter, colored by category

category_of = {r.lot_id: r.category for r in records}
keys = sorted(loaded.entries)
svg = svgplot.scatter(
    points[:, 0],
    points[:, 1],
    color_keys=[category_of[k] for k in keys],
    title="image embeddings, first two principal components",
    x_label="PC1",
    y_label="PC2",
)
out = os.path.join(workdir, "pca_scatter.svg")
with open(out, "w", encoding="utf-8") as fh:
    fh.write(svg)
print(f"scatter written to {out} ({len(svg)} bytes, no timestamps inside)")
