"""Gradient-weighted saliency maps for vision price regressors.

For a scalar prediction y and the feature maps A^k of the final
convolutional layer, each channel gets the weight

    alpha_k = (1 / (H * W)) * sum_ij  dy / dA^k_ij,

and the heatmap is the rectified weighted sum ReLU(sum_k alpha_k A^k),
upsampled bilinearly to the input resolution. Regions that push the
predicted log price up light up; negative evidence is clipped to zero.

Backbones without spatial feature maps (a ViT's pooled class token) cannot
produce such a map and are rejected explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from torch.nn import functional as F


class GradCamError(ValueError):
    pass


class UnsupportedBackboneError(GradCamError):
    """The model has no spatial feature maps to attribute over."""


@dataclass
class GradCamMap:
    feature_maps: np.ndarray  # K x H x W, final convolutional layer
    alphas: np.ndarray  # K channel weights, spatial-mean gradients
    heatmap: np.ndarray  # input resolution, >= 0 everywhere
    y: float  # the scalar prediction being explained

    def __post_init__(self):
        if self.heatmap.min() < 0:
            raise GradCamError("heatmap must be nonnegative")
        if len(self.alphas) != len(self.feature_maps):
            raise GradCamError("one weight per feature-map channel required")


def _resolve_target_layer(model, target_layer):
    if target_layer is not None:
        return target_layer
    backbone = getattr(model, "backbone", model)
    target = getattr(backbone, "conv_target", None)
    if target is None:
        raise UnsupportedBackboneError(
            "model exposes no convolutional feature maps (pooled-only "
            "backbone, e.g. a ViT class token); saliency maps are "
            "unsupported for it"
        )
    return target


def grad_cam(model, image: torch.Tensor, target_layer=None, extras=None) -> GradCamMap:
    """Explain ``model``'s scalar output for one preprocessed image.

    ``image`` is CHW; ``extras`` (optional) is a 1-d tensor of scalar
    covariates the model's head consumes alongside the pooled feature.
    """
    target = _resolve_target_layer(model, target_layer)
    captured = {}

    def forward_hook(_module, _inputs, output):
        captured["maps"] = output
        output.register_hook(lambda grad: captured.__setitem__("grads", grad))

    handle = target.register_forward_hook(forward_hook)
    try:
        # frozen parameters do not build a graph on their own; the input must
        # carry requires_grad so the feature maps become differentiable
        batch = image.detach().clone().unsqueeze(0).requires_grad_(True)
        with torch.enable_grad():
            if extras is None:
                y = model(batch)
            else:
                y = model(batch, extras.detach().clone().unsqueeze(0))
            y = y.reshape(())
            y.backward()
    finally:
        handle.remove()

    if "maps" not in captured:
        raise UnsupportedBackboneError(
            "target layer never ran during the forward pass"
        )
    maps = captured["maps"][0]  # K x H x W
    if maps.ndim != 3 or maps.shape[1] < 1 or maps.shape[2] < 1:
        raise UnsupportedBackboneError(
            f"target layer output has shape {tuple(maps.shape)}, not K x H x W"
        )
    grads = captured["grads"][0]
    alphas = grads.mean(dim=(1, 2))
    cam = F.relu((alphas[:, None, None] * maps).sum(dim=0))
    resized = F.interpolate(
        cam[None, None],
        size=image.shape[-2:],
        mode="bilinear",
        align_corners=False,
    )[0, 0]
    return GradCamMap(
        feature_maps=maps.detach().numpy(),
        alphas=alphas.detach().numpy(),
        heatmap=resized.detach().clamp_min(0).numpy(),
        y=float(y.detach()),
    )


def _colorize(t: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to a blue -> cyan -> yellow -> red ramp."""
    stops = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    red = np.interp(t, stops, [0.0, 0.0, 1.0, 1.0])
    green = np.interp(t, stops, [0.0, 1.0, 1.0, 0.0])
    blue = np.interp(t, stops, [1.0, 1.0, 0.0, 0.0])
    return np.stack([red, green, blue], axis=-1)


def overlay(image, heatmap: np.ndarray, alpha: float = 0.45) -> Image.Image:
    """Blend a nonnegative heatmap over the original (unresized) image."""
    base = image.convert("RGB")
    peak = heatmap.max()
    norm = heatmap / peak if peak > 0 else np.zeros_like(heatmap)
    colored = (_colorize(norm) * 255).astype(np.uint8)
    heat = Image.fromarray(colored).resize(base.size, Image.BILINEAR)
    return Image.blend(base, heat, alpha)


def save_overlay(image, cam: GradCamMap, path) -> None:
    overlay(image, cam.heatmap).save(path, format="PNG")
