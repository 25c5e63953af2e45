"""Valuation toolkit for unique, infrequently traded auction lots.

Combines repeated-sales panel construction, hedonic linear models, gradient
boosted trees, and multi-modal neural networks that fuse tabular features
with precomputed image embeddings.
"""

__version__ = "0.1.0"
