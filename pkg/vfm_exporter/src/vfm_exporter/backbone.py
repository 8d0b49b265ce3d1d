"""Frozen ViT backbone producing (c, h, w) patch-token grids."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torchvision.models import vit_b_16

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_MODELS = {"vit_b_16": (vit_b_16, 16, 768)}


class BackboneError(RuntimeError):
    pass


class TokenBackbone:
    """Inference-only wrapper; weights come from a file or a seeded init."""

    def __init__(self, model_id: str, image_size: tuple[int, int],
                 patch: int, weights: Path | None, seed: int):
        if model_id not in _MODELS:
            raise BackboneError(
                f"unsupported model {model_id!r}; known: {sorted(_MODELS)}"
            )
        ctor, model_patch, width = _MODELS[model_id]
        if patch != model_patch:
            raise BackboneError(f"{model_id} has patch {model_patch}, manifest says {patch}")
        if image_size[0] != image_size[1]:
            raise BackboneError("ViT backbones expect square inputs")
        self.patch = model_patch
        self.width = width
        self.grid = (image_size[0] // model_patch, image_size[1] // model_patch)
        torch.manual_seed(seed)  # pins the fallback random init
        try:
            self.model = ctor(weights=None, image_size=image_size[0])
            if weights is not None:
                state = torch.load(weights, map_location="cpu", weights_only=True)
                self.model.load_state_dict(state)
        except Exception as exc:
            raise BackboneError(f"model load failure: {exc}") from None
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    def token_grid(self, planes: np.ndarray) -> np.ndarray:
        """(3, H, W) float image -> (width, H/patch, W/patch) token grid."""
        x = torch.from_numpy(np.ascontiguousarray(planes, dtype=np.float32))
        x = x.unsqueeze(0)
        with torch.no_grad():
            feats = self.model._process_input(x)
            cls = self.model.class_token.expand(feats.shape[0], -1, -1)
            feats = self.model.encoder(torch.cat([cls, feats], dim=1))
            tokens = feats[:, 1:]  # (1, h*w, width), row-major patches
        h, w = self.grid
        grid = tokens.transpose(1, 2).reshape(1, self.width, h, w)
        return grid[0].numpy()


def normalize_planes(planes: np.ndarray, mode: str) -> np.ndarray:
    """Map [0,1] projection channels to the backbone's expected statistics."""
    if mode == "none":
        return planes.astype(np.float32)
    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)[:, None, None]
    std = np.asarray(IMAGENET_STD, dtype=np.float32)[:, None, None]
    return (planes.astype(np.float32) - mean) / std
