"""Vision backbones: loading, preprocessing, pooled-feature dimensions.

Two backbones are supported. ``resnet50`` pools the final convolutional
stage (2048-d) and keeps spatial feature maps available for saliency;
``vit_small`` is a ViT-S/16 encoder whose class token (384-d) is the pooled
feature — it has no convolutional feature maps.

Pretrained ImageNet weights are loaded when they can be fetched or found in
the local torch hub cache. When they cannot (offline hosts), the backbone
falls back to a *randomly initialized* network with a fixed seed so that
extraction stays deterministic; a loud warning is emitted because such
embeddings carry no semantic content beyond generic image statistics.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import torch
from torch import nn
from torchvision import models
from torchvision.models.vision_transformer import VisionTransformer
from torchvision.transforms import functional as TF

log = logging.getLogger("artvision")

BACKBONES = ("resnet50", "vit_small")

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_RANDOM_INIT_SEED = 0


class BackboneError(ValueError):
    pass


def preprocess(image, image_size: int = 224) -> torch.Tensor:
    """Standard backbone input pipeline: rescale, center-crop, standardize."""
    img = image.convert("RGB")
    img = TF.resize(img, int(image_size * 256 / 224))
    img = TF.center_crop(img, [image_size, image_size])
    x = TF.to_tensor(img)
    return TF.normalize(x, IMAGENET_MEAN, IMAGENET_STD)


@dataclass
class Backbone:
    """A frozen feature extractor with a known pooled dimension."""

    name: str
    model: nn.Module
    dim: int
    pretrained: bool
    # final convolutional stage, present only when spatial maps exist
    conv_target: nn.Module = None
    tag: str = field(init=False)

    def __post_init__(self):
        self.tag = self.name if self.pretrained else f"{self.name}-random-init"

    @property
    def has_spatial_maps(self) -> bool:
        return self.conv_target is not None

    def features(self, batch: torch.Tensor) -> torch.Tensor:
        """Pooled features for a preprocessed NCHW batch."""
        return self.model(batch)


class _ResNetFeatures(nn.Module):
    def __init__(self, resnet):
        super().__init__()
        self.resnet = resnet

    def forward(self, x):
        r = self.resnet
        x = r.maxpool(r.relu(r.bn1(r.conv1(x))))
        x = r.layer4(r.layer3(r.layer2(r.layer1(x))))
        return torch.flatten(r.avgpool(x), 1)


class _ViTFeatures(nn.Module):
    def __init__(self, vit):
        super().__init__()
        self.vit = vit

    def forward(self, x):
        x = self.vit._process_input(x)
        cls = self.vit.class_token.expand(x.shape[0], -1, -1)
        x = self.vit.encoder(torch.cat([cls, x], dim=1))
        return x[:, 0]


def _warn_random_init(name: str, reason: str) -> None:
    msg = (
        f"pretrained weights for {name!r} are unavailable ({reason}); "
        f"falling back to a RANDOMLY INITIALIZED backbone (seed "
        f"{_RANDOM_INIT_SEED}). Embeddings will be deterministic but carry "
        f"no learned semantics — do not use them for real valuation."
    )
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    log.warning(msg)


def load_backbone(name: str, freeze: bool = True) -> Backbone:
    if name not in BACKBONES:
        raise BackboneError(f"unknown backbone {name!r}; choose from {BACKBONES}")

    pretrained = True
    if name == "resnet50":
        try:
            net = models.resnet50(weights=models.ResNet50_Weights.IMAGENET1K_V2)
        except Exception as exc:  # no network and no cached checkpoint
            _warn_random_init(name, str(exc).splitlines()[0])
            pretrained = False
            torch.manual_seed(_RANDOM_INIT_SEED)
            net = models.resnet50(weights=None)
        extractor = _ResNetFeatures(net)
        dim, conv_target = 2048, net.layer4
    else:
        # ViT-S/16; torchvision distributes no checkpoint for this size
        _warn_random_init(name, "no ViT-S/16 checkpoint is distributed")
        pretrained = False
        torch.manual_seed(_RANDOM_INIT_SEED)
        net = VisionTransformer(
            image_size=224, patch_size=16, num_layers=12,
            num_heads=6, hidden_dim=384, mlp_dim=1536,
        )
        extractor = _ViTFeatures(net)
        dim, conv_target = 384, None

    extractor.eval()
    if freeze:
        for p in extractor.parameters():
            p.requires_grad_(False)
    return Backbone(name=name, model=extractor, dim=dim,
                    pretrained=pretrained, conv_target=conv_target)
