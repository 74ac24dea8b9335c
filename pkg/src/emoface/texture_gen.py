"""Flow- and occlusion-guided face animation from a single neutral image.

The generator takes a neutral identity image, the heatmap difference between
the neutral landmark graph and a target graph, and an emotion vector. A
motion network predicts a dense flow field plus an occlusion map at 1/4
resolution; an image decoder rebuilds the frame from them, re-injecting
warped, occlusion-gated identity skips at every scale.

Default desk-scale resolution is 64 x 64. Channel widths are fixed; spatial
dims scale with the input, so 256 x 256 uses the same weights per layer.
A ``channel_scale`` below 1 shrinks widths for fast tests only.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from .errors import BackendError, ContractError, TrainingDivergedError
from .geometry import FaceGraph, heatmap_difference
from .landmark_gen import EMOTION_DIM, EmotionVector


# ---------------------------------------------------------------------------
# frames

@dataclass
class FrameImage:
    """RGB frame, channel-first float32 in [-1, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[0] != 3 or px.shape[1] != px.shape[2]:
            raise ContractError(f"frame must be (3, H, H), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ContractError("frame values must be finite")
        if px.min() < -1.0 - 1e-6 or px.max() > 1.0 + 1e-6:
            raise ContractError("frame values must lie in [-1, 1]")
        self.pixels = px

    @property
    def resolution(self) -> int:
        return self.pixels.shape[1]

    def to_tensor(self) -> torch.Tensor:
        return torch.as_tensor(self.pixels)

    @classmethod
    def from_tensor(cls, t: torch.Tensor) -> "FrameImage":
        return cls(t.detach().cpu().numpy().astype(np.float32))


def load_image(path: str | Path) -> FrameImage:
    """8-bit RGB PNG -> [-1, 1] frame (255 maps to exactly 1.0)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return FrameImage(arr.transpose(2, 0, 1) / 127.5 - 1.0)


def save_image(path: str | Path, frame: FrameImage) -> None:
    arr = np.clip((frame.pixels + 1.0) * 127.5, 0.0, 255.0)
    arr = np.round(arr).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# warping

def warp(tensor: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward-warp by a normalized flow field with bilinear sampling.

    ``flow`` holds per-pixel sampling offsets in [-1, 1] normalized
    coordinates (2 maps the full width), so out(p) = in(p + flow(p) * scale).
    Sampling clamps to the border. Zero flow reproduces the input exactly:
    grid points land on integer pixel coordinates with zero fractional part.
    """
    single = tensor.ndim == 3
    if single:
        tensor = tensor.unsqueeze(0)
        flow = flow.unsqueeze(0)
    if tensor.ndim != 4 or flow.ndim != 4 or flow.shape[1] != 2:
        raise ContractError("warp expects (B, C, H, W) tensor and (B, 2, H, W) flow")
    b, c, h, w = tensor.shape
    if flow.shape[0] != b or flow.shape[2:] != (h, w):
        raise ContractError(f"flow shape {tuple(flow.shape)} does not match input")
    dtype = tensor.dtype
    base_x = torch.arange(w, dtype=dtype).view(1, 1, w)
    base_y = torch.arange(h, dtype=dtype).view(1, h, 1)
    xs = (base_x + flow[:, 0] * ((w - 1) / 2.0)).clamp(0, w - 1)
    ys = (base_y + flow[:, 1] * ((h - 1) / 2.0)).clamp(0, h - 1)
    x0 = xs.floor()
    y0 = ys.floor()
    fx = (xs - x0).unsqueeze(1)
    fy = (ys - y0).unsqueeze(1)
    x0l = x0.long()
    y0l = y0.long()
    x1l = (x0l + 1).clamp(max=w - 1)
    y1l = (y0l + 1).clamp(max=h - 1)

    flat = tensor.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    v00 = gather(y0l, x0l)
    v01 = gather(y0l, x1l)
    v10 = gather(y1l, x0l)
    v11 = gather(y1l, x1l)
    top = (1 - fx) * v00 + fx * v01
    bottom = (1 - fx) * v10 + fx * v11
    out = (1 - fy) * top + fy * bottom
    return out.squeeze(0) if single else out


@dataclass
class MotionField:
    """Dense motion at quarter resolution: normalized flow plus occlusion."""

    flow: torch.Tensor       # (2, h, w), values in [-1, 1]
    occlusion: torch.Tensor  # (1, h, w), values in [0, 1]

    def __post_init__(self):
        if self.flow.ndim != 3 or self.flow.shape[0] != 2:
            raise ContractError(f"flow must be (2, h, w), got {tuple(self.flow.shape)}")
        if self.occlusion.shape != (1, *self.flow.shape[1:]):
            raise ContractError("occlusion must be (1, h, w) matching the flow grid")
        if self.flow.abs().max() > 1.0 + 1e-6:
            raise ContractError("flow values must lie in [-1, 1]")
        if self.occlusion.min() < -1e-6 or self.occlusion.max() > 1.0 + 1e-6:
            raise ContractError("occlusion values must lie in [0, 1]")


# ---------------------------------------------------------------------------
# model

@dataclass
class GTConfig:
    resolution: int = 64
    identity_channels: tuple[int, int, int] = (64, 128, 256)
    motion_channels: tuple[int, int, int] = (512, 1024, 1024)
    emotion_channels: int = 128
    heatmap_sigma: float = 1.5    # pixels on a 64 x 64 heatmap grid
    channel_scale: float = 1.0    # < 1 shrinks widths; tests only

    def __post_init__(self):
        if self.resolution < 16 or self.resolution % 16 != 0:
            raise ContractError("resolution must be a multiple of 16, at least 16")
        if self.channel_scale <= 0:
            raise ContractError("channel_scale must be positive")

    def scaled(self, channels: int) -> int:
        return max(4, int(round(channels * self.channel_scale)))

    @property
    def heatmap_grid(self) -> int:
        return self.resolution // 4

    @property
    def grid_sigma(self) -> float:
        return self.heatmap_sigma * self.heatmap_grid / 64.0


@dataclass
class IdentityCode:
    """Output of the identity encoder: deepest feature, skips, AdaIN stats."""

    f_t: torch.Tensor
    skips: tuple[torch.Tensor, ...]
    mean: torch.Tensor
    std: torch.Tensor


def _adain(x: torch.Tensor, mean: torch.Tensor, std: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    mu = x.mean(dim=(-2, -1), keepdim=True)
    var = x.var(dim=(-2, -1), unbiased=False, keepdim=True)
    normed = (x - mu) / torch.sqrt(var + eps)
    return normed * std.unsqueeze(-1).unsqueeze(-1) + mean.unsqueeze(-1).unsqueeze(-1)


class GTModel(nn.Module):
    """Texture generator: identity encoder, motion network, image decoder."""

    def __init__(self, config: GTConfig | None = None):
        super().__init__()
        self.config = config if config is not None else GTConfig()
        cfg = self.config
        c1, c2, c3 = (cfg.scaled(c) for c in cfg.identity_channels)
        m1, m2, m3 = (cfg.scaled(c) for c in cfg.motion_channels)
        ce = cfg.scaled(cfg.emotion_channels)
        self._dims = (c1, c2, c3, m1, m2, m3, ce)

        self.identity_encoder = nn.ModuleList([
            nn.Conv2d(3, c1, 7, stride=1, padding=3),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.Conv2d(c2, c3, 3, stride=2, padding=1),
        ])

        heat = 69
        self.motion_encoder = nn.ModuleList([
            nn.Conv2d(heat + c3, m1, 3, stride=1, padding=1),
            nn.Conv2d(m1, m2, 3, stride=2, padding=1),
            nn.Conv2d(m2, m3, 3, stride=2, padding=1),
        ])
        self.emotion_fc = nn.Linear(EMOTION_DIM, ce)
        nn.init.zeros_(self.emotion_fc.bias)
        self.motion_decoder = nn.ModuleList([
            nn.Conv2d(m3 + ce, m3, 3, stride=1, padding=1),
            nn.Conv2d(m3, m2 // 2, 3, stride=1, padding=1),
            nn.Conv2d(m2 // 2, m1 // 2, 3, stride=1, padding=1),
        ])
        head_in = m1 // 2
        self.flow_head = nn.Conv2d(head_in, 2, 3, padding=1)
        self.occlusion_head = nn.Conv2d(head_in, 1, 3, padding=1)
        # identity motion at init: tanh(0) = 0 flow, sigmoid(0) = 0.5 occlusion
        nn.init.zeros_(self.flow_head.weight)
        nn.init.zeros_(self.flow_head.bias)
        nn.init.zeros_(self.occlusion_head.weight)
        nn.init.zeros_(self.occlusion_head.bias)

        self.image_decoder = nn.ModuleList([
            nn.Conv2d(3, c3, 3, padding=1),
            nn.Conv2d(c3, c2, 3, padding=1),
            nn.Conv2d(c2, c1, 3, padding=1),
            nn.Conv2d(c1, 3, 7, padding=3),
        ])

    # -- identity ----------------------------------------------------------

    def encode_identity(self, image) -> IdentityCode:
        x = self._as_batched_image(image)
        e1, e2, e3 = self.identity_encoder
        s1 = F.relu(e1(x))
        s2 = F.relu(e2(s1))
        f_t = F.relu(e3(s2))
        mean = f_t.mean(dim=(-2, -1))
        std = torch.sqrt(f_t.var(dim=(-2, -1), unbiased=False) + 1e-5)
        return IdentityCode(f_t=f_t, skips=(s1, s2), mean=mean, std=std)

    def _as_batched_image(self, image) -> torch.Tensor:
        if isinstance(image, FrameImage):
            image = image.to_tensor()
        x = torch.as_tensor(image)
        if x.ndim == 3:
            x = x.unsqueeze(0)
        r = self.config.resolution
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != r or x.shape[3] != r:
            raise ContractError(
                f"expected (B, 3, {r}, {r}) image, got {tuple(x.shape)}"
            )
        return x

    def encode_emotion(self, emotion) -> torch.Tensor:
        if isinstance(emotion, EmotionVector):
            emotion = emotion.to_array()
        e = torch.as_tensor(np.asarray(emotion), dtype=self.emotion_fc.weight.dtype)
        if e.shape[-1] != EMOTION_DIM:
            raise ContractError(f"emotion vector must have 8 entries, got {tuple(e.shape)}")
        return self.emotion_fc(e)

    # -- motion ------------------------------------------------------------

    def _motion(
        self, heat_diff: torch.Tensor, f_t: torch.Tensor, f_e: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        grid = self.config.heatmap_grid
        if heat_diff.shape[-3:] != (69, grid, grid):
            raise ContractError(
                f"heatmap difference must be (69, {grid}, {grid}), got {tuple(heat_diff.shape)}"
            )
        x = torch.cat([heat_diff, f_t], dim=-3)
        n1, n2, n3 = self.motion_encoder
        x = F.leaky_relu(n1(x), 0.2)
        x = F.leaky_relu(n2(x), 0.2)
        f_m = F.leaky_relu(n3(x), 0.2)
        e_map = f_e.unsqueeze(-1).unsqueeze(-1).expand(*f_e.shape, *f_m.shape[-2:])
        y = torch.cat([f_m, e_map], dim=-3)
        d1, d2, d3 = self.motion_decoder
        y = F.leaky_relu(d1(y), 0.2)
        y = F.interpolate(y, scale_factor=2, mode="bilinear", align_corners=False)
        y = F.leaky_relu(d2(y), 0.2)
        y = F.interpolate(y, scale_factor=2, mode="bilinear", align_corners=False)
        y = F.leaky_relu(d3(y), 0.2)
        flow = torch.tanh(self.flow_head(y))
        occlusion = torch.sigmoid(self.occlusion_head(y))
        return flow, occlusion

    def predict_motion(self, heat_diff, f_t, f_e) -> MotionField:
        hd = torch.as_tensor(np.asarray(heat_diff), dtype=torch.float32)
        if hd.ndim != 3:
            raise ContractError(
                "predict_motion is a single-sample view; use _motion for batches"
            )
        f_t = torch.as_tensor(f_t)
        f_e = torch.as_tensor(f_e)
        f_t = f_t if f_t.ndim == 4 else f_t.unsqueeze(0)
        f_e = f_e if f_e.ndim == 2 else f_e.unsqueeze(0)
        with torch.no_grad():
            flow, occ = self._motion(hd.unsqueeze(0), f_t, f_e)
        return MotionField(flow[0], occ[0])

    # -- decoding ----------------------------------------------------------

    @staticmethod
    def _inject(x: torch.Tensor, skip: torch.Tensor, flow: torch.Tensor, occ: torch.Tensor) -> torch.Tensor:
        """Add a skip feature, warped by the flow and gated by the occlusion map."""
        size = x.shape[-2:]
        if flow.shape[-2:] != size:
            flow = F.interpolate(flow, size=size, mode="bilinear", align_corners=True)
            occ = F.interpolate(occ, size=size, mode="bilinear", align_corners=True)
        return x + warp(skip, flow) * occ

    def _decode(self, flow: torch.Tensor, occ: torch.Tensor, code: IdentityCode) -> torch.Tensor:
        d_in, d1, d2, d_out = self.image_decoder
        x = F.relu(d_in(torch.cat([flow, occ], dim=-3)))
        x = _adain(x, code.mean, code.std)
        x = self._inject(x, code.f_t, flow, occ)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = F.relu(d1(x))
        x = self._inject(x, code.skips[1], flow, occ)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        x = F.relu(d2(x))
        x = self._inject(x, code.skips[0], flow, occ)
        return torch.tanh(d_out(x))

    def decode_frame(self, motion: MotionField, code: IdentityCode) -> FrameImage:
        flow = motion.flow.unsqueeze(0)
        occ = motion.occlusion.unsqueeze(0)
        with torch.no_grad():
            out = self._decode(flow, occ, code)
        return FrameImage.from_tensor(out[0])

    # -- full path ---------------------------------------------------------

    def forward(
        self, identity: torch.Tensor, heat_diff: torch.Tensor, emotion: torch.Tensor
    ) -> torch.Tensor:
        code = self.encode_identity(identity)
        f_e = self.encode_emotion(emotion)
        flow, occ = self._motion(heat_diff, code.f_t, f_e)
        return self._decode(flow, occ, code)


def encode_identity(model: GTModel, image) -> IdentityCode:
    return model.encode_identity(image)


def predict_motion(model: GTModel, heat_diff, f_t, f_e) -> MotionField:
    return model.predict_motion(heat_diff, f_t, f_e)


def decode_frame(model: GTModel, motion: MotionField, code: IdentityCode) -> FrameImage:
    return model.decode_frame(motion, code)


def render_heat_difference(config: GTConfig, g_in: FaceGraph, g_out: FaceGraph) -> np.ndarray:
    """Heatmap difference on the model's quarter-resolution grid.

    Graph vertices are expected in image pixel coordinates at the model
    resolution and are rescaled onto the heatmap grid.
    """
    grid = config.heatmap_grid
    scale = grid / config.resolution
    return heatmap_difference(
        g_in.with_vertices(g_in.vertices * scale),
        g_out.with_vertices(g_out.vertices * scale),
        grid,
        grid,
        config.grid_sigma,
    )


def generate_frame(
    model: GTModel, image: FrameImage, g_in: FaceGraph, g_out: FaceGraph, emotion: EmotionVector
) -> FrameImage:
    """Animate one frame: heat difference -> motion -> decoded image."""
    heat = torch.as_tensor(render_heat_difference(model.config, g_in, g_out))
    with torch.no_grad():
        out = model(
            model._as_batched_image(image),
            heat.unsqueeze(0),
            torch.as_tensor(emotion.to_array()).unsqueeze(0),
        )
    return FrameImage.from_tensor(out[0])


# ---------------------------------------------------------------------------
# discriminator

class FrameDiscriminator(nn.Module):
    """Patch discriminator emitting a logit map (probabilities via sigmoid)."""

    def __init__(self, config: GTConfig | None = None):
        super().__init__()
        cfg = config if config is not None else GTConfig()
        c = cfg.scaled(64)
        self.net = nn.Sequential(
            nn.Conv2d(3, c, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(c, 2 * c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * c, 4 * c, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * c),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * c, 1, 4, stride=1, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


# ---------------------------------------------------------------------------
# perceptual backends

class RandomConvPyramid(nn.Module):
    """Seeded, frozen random conv pyramid: the test-grade perceptual backend.

    Four levels at full, 1/2, 1/4 and 1/8 scale. Weights are drawn once from
    the given seed and never trained, so feature distances are deterministic.
    """

    def __init__(self, seed: int = 0, channels: tuple[int, int, int, int] = (16, 32, 64, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        dims = [3, *channels]
        strides = [1, 2, 2, 2]
        convs = []
        for i in range(4):
            conv = nn.Conv2d(dims[i], dims[i + 1], 3, stride=strides[i], padding=1)
            fan_in = dims[i] * 9
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) / np.sqrt(fan_in)
                )
                conv.bias.zero_()
            convs.append(conv)
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = torch.tanh(conv(x))
            feats.append(x)
        return feats


class VGG16Features(nn.Module):
    """Pretrained VGG16 feature pyramid (production backend, optional)."""

    def __init__(self):
        super().__init__()
        try:
            from torchvision import models
            vgg = models.vgg16(weights=models.VGG16_Weights.IMAGENET1K_V1).features
        except Exception as exc:
            raise BackendError(f"vgg16 backend unavailable: {exc}") from exc
        self.slices = nn.ModuleList([vgg[:4], vgg[4:9], vgg[9:16], vgg[16:23]])
        for p in self.parameters():
            p.requires_grad_(False)
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = ((x + 1.0) / 2.0 - self.mean) / self.std
        feats = []
        for block in self.slices:
            x = block(x)
            feats.append(x)
        return feats


def make_perceptual_extractor(name: str = "conv-pyramid", seed: int = 0) -> nn.Module:
    if name == "conv-pyramid":
        return RandomConvPyramid(seed=seed)
    if name == "vgg16":
        return VGG16Features()
    raise BackendError(f"unknown perceptual backend {name!r}")


def perceptual_features(extractor: nn.Module, image) -> list[torch.Tensor]:
    x = image.to_tensor().unsqueeze(0) if isinstance(image, FrameImage) else torch.as_tensor(image)
    if x.ndim == 3:
        x = x.unsqueeze(0)
    return extractor(x)


# ---------------------------------------------------------------------------
# losses

def reconstruction_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between frames."""
    if generated.shape != target.shape:
        raise ContractError("reconstruction operands must share a shape")
    return (generated - target).abs().mean()


def perceptual_loss(extractor: nn.Module, generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute feature error, averaged over pyramid levels."""
    feats_g = extractor(generated)
    feats_t = extractor(target)
    per_level = [(fg - ft).abs().mean() for fg, ft in zip(feats_g, feats_t)]
    return torch.stack(per_level).mean()


def adversarial_g_loss(logits_fake: torch.Tensor) -> torch.Tensor:
    """Saturating generator objective E[log(1 - D(fake))], D = sigmoid(logits)."""
    return -F.softplus(logits_fake).mean()


def adversarial_d_loss(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    """-E[log D(real)] - E[log(1 - D(fake))]; zero at a perfect split."""
    return F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()


@dataclass
class TextureLossReport:
    reconstruction: float
    perceptual: float
    adversarial: float
    image: float


def image_loss_terms(
    generated: torch.Tensor,
    target: torch.Tensor,
    disc: nn.Module,
    extractor: nn.Module,
    lambda_rec: float = 1.0,
    lambda_per: float = 10.0,
    lambda_adv: float = 1.0,
) -> dict[str, torch.Tensor]:
    """Differentiable generator loss terms and their weighted sum."""
    rec = reconstruction_loss(generated, target)
    per = perceptual_loss(extractor, generated, target)
    adv = adversarial_g_loss(disc(generated))
    total = lambda_rec * rec + lambda_per * per + lambda_adv * adv
    return {"reconstruction": rec, "perceptual": per, "adversarial": adv, "image": total}


def texture_losses(
    generated,
    target,
    disc: nn.Module,
    extractor: nn.Module,
    lambda_rec: float = 1.0,
    lambda_per: float = 10.0,
    lambda_adv: float = 1.0,
) -> TextureLossReport:
    """Inspection view of the generator objective for a frame pair."""
    g = generated.to_tensor().unsqueeze(0) if isinstance(generated, FrameImage) else generated
    t = target.to_tensor().unsqueeze(0) if isinstance(target, FrameImage) else target
    with torch.no_grad():
        terms = image_loss_terms(g, t, disc, extractor, lambda_rec, lambda_per, lambda_adv)
    return TextureLossReport(
        reconstruction=terms["reconstruction"].item(),
        perceptual=terms["perceptual"].item(),
        adversarial=terms["adversarial"].item(),
        image=terms["image"].item(),
    )


# ---------------------------------------------------------------------------
# training

@dataclass
class TextureSample:
    """One supervised animation example, landmarks in image pixel coordinates."""

    identity: FrameImage
    g_in: FaceGraph
    g_out: FaceGraph
    emotion: EmotionVector
    target: FrameImage


@dataclass
class FrameBatch:
    identity: torch.Tensor   # (B, 3, R, R)
    heat_diff: torch.Tensor  # (B, 69, R/4, R/4)
    emotion: torch.Tensor    # (B, 8)
    target: torch.Tensor     # (B, 3, R, R)


def collate_texture_batch(config: GTConfig, samples: list[TextureSample]) -> FrameBatch:
    if not samples:
        raise ContractError("empty texture batch")
    ident = torch.stack([s.identity.to_tensor() for s in samples])
    heat = torch.stack([
        torch.as_tensor(render_heat_difference(config, s.g_in, s.g_out)) for s in samples
    ])
    emo = torch.stack([torch.as_tensor(s.emotion.to_array()) for s in samples])
    target = torch.stack([s.target.to_tensor() for s in samples])
    return FrameBatch(ident, heat, emo, target)


@dataclass
class TextureTrainReport:
    reconstruction: float
    perceptual: float
    adversarial: float
    image: float
    disc: float


def train_texture_step(
    model: GTModel,
    disc: FrameDiscriminator,
    batch: FrameBatch,
    opt_model: torch.optim.Optimizer,
    opt_disc: torch.optim.Optimizer,
    extractor: nn.Module,
    lambda_rec: float = 1.0,
    lambda_per: float = 10.0,
    lambda_adv: float = 1.0,
) -> TextureTrainReport:
    """One alternating discriminator/generator update on a frame batch."""
    generated = model(batch.identity, batch.heat_diff, batch.emotion)

    loss_d = adversarial_d_loss(disc(batch.target), disc(generated.detach()))
    if not torch.isfinite(loss_d):
        raise TrainingDivergedError(f"discriminator loss is not finite: {loss_d.item()}")
    opt_disc.zero_grad()
    loss_d.backward()
    opt_disc.step()

    terms = image_loss_terms(
        generated, batch.target, disc, extractor, lambda_rec, lambda_per, lambda_adv
    )
    if not torch.isfinite(terms["image"]):
        raise TrainingDivergedError(
            "generator loss is not finite: "
            + ", ".join(f"{k}={v.item()}" for k, v in terms.items())
        )
    opt_model.zero_grad()
    terms["image"].backward()
    opt_model.step()

    return TextureTrainReport(
        reconstruction=terms["reconstruction"].item(),
        perceptual=terms["perceptual"].item(),
        adversarial=terms["adversarial"].item(),
        image=terms["image"].item(),
        disc=loss_d.item(),
    )
