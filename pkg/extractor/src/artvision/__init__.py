"""artvision: vision-backbone embeddings and saliency overlays for auction lots."""

from .aembio import AEMBError, read_aemb, write_aemb
from .backbones import BACKBONES, Backbone, BackboneError, load_backbone, preprocess
from .extract import ExtractionError, extract_embeddings
from .gradcam import (
    GradCamError,
    GradCamMap,
    UnsupportedBackboneError,
    grad_cam,
    overlay,
    save_overlay,
)
from .regressor import VisionRegressor

__version__ = "0.1.0"

__all__ = [
    "AEMBError",
    "BACKBONES",
    "Backbone",
    "BackboneError",
    "ExtractionError",
    "GradCamError",
    "GradCamMap",
    "UnsupportedBackboneError",
    "VisionRegressor",
    "extract_embeddings",
    "grad_cam",
    "load_backbone",
    "overlay",
    "preprocess",
    "read_aemb",
    "save_overlay",
    "write_aemb",
    "__version__",
]
