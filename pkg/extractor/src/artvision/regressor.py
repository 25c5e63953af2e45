"""A price-regression head on top of a vision backbone.

The head is a single linear layer over the pooled feature. Optional scalar
covariates (e.g. transaction year and a previous-sale flag) are concatenated
to the pooled feature before the head.
"""

from __future__ import annotations

import torch
from torch import nn


class VisionRegressor(nn.Module):
    def __init__(self, backbone, extra_dim: int = 0):
        super().__init__()
        self.backbone = backbone
        # the dataclass wrapper is not a Module; register the network itself
        # so parameters(), train() and state_dict() see the backbone weights
        self.encoder = backbone.model
        self.extra_dim = extra_dim
        self.head = nn.Linear(backbone.dim + extra_dim, 1)

    def forward(self, images: torch.Tensor, extras: torch.Tensor = None) -> torch.Tensor:
        feat = self.backbone.features(images)
        if self.extra_dim:
            if extras is None:
                raise ValueError(f"regressor expects {self.extra_dim} extra scalars")
            feat = torch.cat([feat, extras], dim=1)
        return self.head(feat).squeeze(-1)
