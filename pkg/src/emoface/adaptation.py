"""One-shot identity adaptation and image-space plumbing around it.

Adapting to an unseen person updates only the identity encoder and the image
decoder of a trained texture model, for at most five reconstruction steps on
the single neutral frame. The motion pathway stays bitwise untouched, so the
learned audio/emotion dynamics survive the personalization.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from skimage.color import hsv2rgb, rgb2hsv

from .errors import ContractError, TrainingDivergedError
from .texture_gen import (
    FrameImage,
    GTModel,
    RandomConvPyramid,
    perceptual_loss,
    reconstruction_loss,
)

MAX_ADAPT_STEPS = 5


@dataclass(frozen=True)
class AdaptationConfig:
    steps: int = MAX_ADAPT_STEPS
    lr: float = 2e-4
    lambda_per: float = 10.0

    def __post_init__(self):
        if not 1 <= self.steps <= MAX_ADAPT_STEPS:
            raise ContractError(f"adaptation steps must be 1..{MAX_ADAPT_STEPS}")
        if self.lr <= 0:
            raise ContractError("adaptation lr must be positive")


def adaptation_scope(model: GTModel) -> list[torch.nn.Parameter]:
    """Parameters the one-shot finetune may touch: E_T and D_T only."""
    return list(model.identity_encoder.parameters()) + list(
        model.image_decoder.parameters()
    )


def one_shot_finetune(
    model: GTModel,
    image: FrameImage,
    config: AdaptationConfig | None = None,
    extractor: torch.nn.Module | None = None,
) -> GTModel:
    """Personalize a texture model to one neutral frame.

    Optimizes reconstruction plus weighted perceptual loss of the identity
    frame against itself, with the target graph equal to the source graph
    (zero heatmap difference) and a neutral emotion vector. The input model
    is left unmodified; the returned copy differs from it only in the
    identity-encoder and image-decoder parameters.
    """
    cfg = config if config is not None else AdaptationConfig()
    if extractor is None:
        extractor = RandomConvPyramid(seed=0)
    adapted = copy.deepcopy(model)
    for p in adapted.parameters():
        p.requires_grad_(False)
    scope = adaptation_scope(adapted)
    for p in scope:
        p.requires_grad_(True)

    x = adapted._as_batched_image(image)
    grid = adapted.config.heatmap_grid
    heat = torch.zeros(1, 69, grid, grid)
    emotion = torch.zeros(1, 8)
    opt = torch.optim.Adam(scope, lr=cfg.lr)
    for _ in range(cfg.steps):
        out = adapted(x, heat, emotion)
        loss = reconstruction_loss(out, x) + cfg.lambda_per * perceptual_loss(
            extractor, out, x
        )
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"adaptation loss is not finite: {loss.item()}")
        opt.zero_grad()
        loss.backward()
        opt.step()
    for p in adapted.parameters():
        p.requires_grad_(True)
    return adapted


def adaptation_objective(
    model: GTModel,
    image: FrameImage,
    extractor: torch.nn.Module,
    lambda_per: float = 10.0,
) -> float:
    """The loss one_shot_finetune minimizes, for before/after comparisons."""
    x = model._as_batched_image(image)
    grid = model.config.heatmap_grid
    with torch.no_grad():
        out = model(x, torch.zeros(1, 69, grid, grid), torch.zeros(1, 8))
        loss = reconstruction_loss(out, x) + lambda_per * perceptual_loss(extractor, out, x)
    return loss.item()


# ---------------------------------------------------------------------------
# background handling

def _check_mask(mask: np.ndarray, resolution: int) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float32)
    if m.ndim == 3 and m.shape[0] == 1:
        m = m[0]
    if m.shape != (resolution, resolution):
        raise ContractError(f"mask must be ({resolution}, {resolution}), got {m.shape}")
    if m.min() < 0.0 or m.max() > 1.0:
        raise ContractError("mask values must lie in [0, 1]")
    return m


def replace_background(frame: FrameImage, background: FrameImage, mask: np.ndarray) -> FrameImage:
    """mask * frame + (1 - mask) * background, mask 1 on the face."""
    if background.resolution != frame.resolution:
        raise ContractError("background resolution must match the frame")
    m = _check_mask(mask, frame.resolution)
    out = m * frame.pixels + (1.0 - m) * background.pixels
    return FrameImage(out.astype(np.float32))


def restore_background(generated: FrameImage, original: FrameImage, mask: np.ndarray) -> FrameImage:
    """Put the original background back behind a generated face."""
    if original.resolution != generated.resolution:
        raise ContractError("original resolution must match the generated frame")
    m = _check_mask(mask, generated.resolution)
    out = m * generated.pixels + (1.0 - m) * original.pixels
    return FrameImage(out.astype(np.float32))


def load_mask(path: str | Path) -> np.ndarray:
    """Grayscale PNG -> float mask in [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float32)
    return arr / 255.0


# ---------------------------------------------------------------------------
# augmentation

@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 0.2   # additive, in [0, 1] intensity units
    contrast: float = 0.2     # multiplicative around the image mean
    hue: float = 0.05         # fraction of the hue circle

    def __post_init__(self):
        if not 0.0 <= self.brightness <= 1.0:
            raise ContractError("brightness range must lie in [0, 1]")
        if not 0.0 <= self.contrast < 1.0:
            raise ContractError("contrast range must lie in [0, 1)")
        if not 0.0 <= self.hue <= 0.5:
            raise ContractError("hue range must lie in [0, 0.5]")


def augment(frame: FrameImage, params: AugmentParams, seed: int) -> FrameImage:
    """Seeded color jitter: hue rotation, contrast, brightness, then clamp.

    A zero-range configuration skips every stage and returns the input
    pixels unchanged.
    """
    rng = np.random.default_rng(seed)
    d_hue = rng.uniform(-params.hue, params.hue)
    c = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast)
    b = rng.uniform(-params.brightness, params.brightness)

    if params.hue == 0.0 and params.contrast == 0.0 and params.brightness == 0.0:
        return FrameImage(frame.pixels.copy())

    x = (frame.pixels.astype(np.float64) + 1.0) / 2.0
    if params.hue != 0.0:
        hsv = rgb2hsv(np.clip(x, 0.0, 1.0).transpose(1, 2, 0))
        hsv[..., 0] = (hsv[..., 0] + d_hue) % 1.0
        x = hsv2rgb(hsv).transpose(2, 0, 1)
    if params.contrast != 0.0:
        mean = x.mean()
        x = (x - mean) * c + mean
    if params.brightness != 0.0:
        x = x + b
    x = np.clip(x, 0.0, 1.0) * 2.0 - 1.0
    return FrameImage(np.clip(x, -1.0, 1.0).astype(np.float32))
