"""Foreground segmentation core: synthetic scenes, model, metrics."""

from ._core import (
    Model,
    __version__,
    canny,
    contrastive_loss_value,
    gaussian_blur,
    hungarian,
    metrics,
    pca_top_component,
    synth_scene,
    write_dataset,
)

__all__ = [
    "Model",
    "__version__",
    "canny",
    "contrastive_loss_value",
    "gaussian_blur",
    "hungarian",
    "metrics",
    "pca_top_component",
    "synth_scene",
    "write_dataset",
]
