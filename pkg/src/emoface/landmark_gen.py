"""Speech- and emotion-driven landmark displacement model.

The generator maps (audio feature windows, explicit emotion vector, neutral
landmark graph) to per-frame vertex displacements on the 68-point face graph.
It works in the canonical frame; retargeting and blink injection happen
downstream in the pipeline. A graph discriminator conditioned on the emotion
vector provides the least-squares adversarial signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .audio import NUM_CHANNELS, WINDOW, AudioFeatureSequence, window_features
from .errors import ContractError, TrainingDivergedError
from .geometry import (
    NUM_LANDMARKS,
    FaceGraph,
    LandmarkSet,
    RegionPartition,
    build_face_graph,
    canonical_template,
    default_partition,
    region_adjacency,
)

CATEGORIES = ("angry", "disgust", "fear", "happy", "sad", "surprise")
INTENSITIES = ("high", "low")
EMOTION_DIM = len(CATEGORIES) + len(INTENSITIES)


@dataclass(frozen=True)
class EmotionVector:
    """One-hot emotion category (6) plus one-hot intensity (2).

    Neutral is all zeros in both halves; an intensity bit is set exactly when
    a category bit is set.
    """

    category: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        cat = np.asarray(self.category, dtype=np.float32)
        inten = np.asarray(self.intensity, dtype=np.float32)
        if cat.shape != (len(CATEGORIES),) or inten.shape != (len(INTENSITIES),):
            raise ContractError("emotion vector halves must be length 6 and 2")
        for half in (cat, inten):
            if not np.all(np.isin(half, (0.0, 1.0))):
                raise ContractError("emotion vector entries must be 0 or 1")
        if cat.sum() > 1 or inten.sum() > 1:
            raise ContractError("at most one category and one intensity bit")
        if cat.sum() != inten.sum():
            raise ContractError("intensity must be set exactly when a category is set")
        object.__setattr__(self, "category", cat)
        object.__setattr__(self, "intensity", inten)

    @classmethod
    def neutral(cls) -> "EmotionVector":
        return cls(np.zeros(len(CATEGORIES)), np.zeros(len(INTENSITIES)))

    @classmethod
    def of(cls, category: str, intensity: str = "high") -> "EmotionVector":
        if category == "neutral":
            return cls.neutral()
        if category not in CATEGORIES:
            raise ContractError(f"unknown emotion category {category!r}")
        if intensity not in INTENSITIES:
            raise ContractError(f"unknown intensity {intensity!r}")
        cat = np.zeros(len(CATEGORIES))
        cat[CATEGORIES.index(category)] = 1.0
        inten = np.zeros(len(INTENSITIES))
        inten[INTENSITIES.index(intensity)] = 1.0
        return cls(cat, inten)

    @property
    def is_neutral(self) -> bool:
        return self.category.sum() == 0

    def label(self) -> str:
        if self.is_neutral:
            return "neutral"
        return CATEGORIES[int(np.argmax(self.category))]

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.category, self.intensity]).astype(np.float32)


# ---------------------------------------------------------------------------
# graph convolution

_ACTIVATIONS = {
    "relu": F.relu,
    "tanh": torch.tanh,
    "leaky_relu": lambda x: F.leaky_relu(x, 0.2),
    "identity": lambda x: x,
}

# softplus(raw) == 1, so edge weights start at exactly one on the support
_OMEGA_RAW_INIT = math.log(math.expm1(1.0))


class GraphConv(nn.Module):
    """Graph convolution with learnable non-negative per-edge weights.

    out = act( N (omega * A_hat) N @ x @ W ) where A_hat = A + I, N is the
    inverse square-root degree of the *unweighted* A_hat, and omega is
    softplus-reparameterized and masked to the A_hat support, initialized to
    one on every supported entry. Entries off the support receive exactly
    zero gradient. There is no bias term.
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        adjacency: np.ndarray,
        activation: str = "relu",
        zero_init: bool = False,
    ):
        super().__init__()
        adj = np.asarray(adjacency, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ContractError(f"adjacency must be square, got {adj.shape}")
        if np.any(adj != adj.T) or np.any(np.diag(adj) != 0):
            raise ContractError("adjacency must be symmetric with zero diagonal")
        if activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        n = adj.shape[0]
        a_hat = adj + np.eye(n)
        inv_sqrt_deg = a_hat.sum(axis=1) ** -0.5
        norm = np.outer(inv_sqrt_deg, inv_sqrt_deg) * (a_hat > 0)
        self.register_buffer("norm", torch.as_tensor(norm, dtype=torch.float32))
        self.register_buffer(
            "support", torch.as_tensor(a_hat > 0, dtype=torch.float32)
        )
        self.raw_omega = nn.Parameter(torch.full((n, n), _OMEGA_RAW_INIT))
        weight = torch.zeros(in_features, out_features)
        if not zero_init:
            bound = 1.0 / math.sqrt(out_features)
            weight.uniform_(-bound, bound)
        self.weight = nn.Parameter(weight)

    @property
    def num_vertices(self) -> int:
        return self.norm.shape[0]

    @property
    def edge_weights(self) -> torch.Tensor:
        return F.softplus(self.raw_omega) * self.support

    def propagation(self) -> torch.Tensor:
        # support is already folded into norm (zero off-support)
        return self.norm * F.softplus(self.raw_omega)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] != self.num_vertices or x.shape[-1] != self.in_features:
            raise ContractError(
                f"expected features (..., {self.num_vertices}, {self.in_features}), "
                f"got {tuple(x.shape)}"
            )
        out = torch.matmul(self.propagation(), x) @ self.weight
        return _ACTIVATIONS[self.activation](out)


def graph_convolve(features, graph: FaceGraph, layer: GraphConv) -> torch.Tensor:
    """Apply a GraphConv layer, checking that its support matches the graph."""
    n = graph.num_vertices
    a_hat = graph.adjacency.astype(np.float64) + np.eye(n)
    if layer.num_vertices != n or not np.array_equal(
        a_hat > 0, layer.support.cpu().numpy() > 0
    ):
        raise ContractError("layer edge-weight support does not match graph A+I")
    x = torch.as_tensor(np.asarray(features), dtype=layer.weight.dtype)
    return layer(x)


# ---------------------------------------------------------------------------
# hierarchical pooling

def pooling_matrices(
    partition: RegionPartition, num_vertices: int = NUM_LANDMARKS
) -> tuple[np.ndarray, np.ndarray]:
    """(pool, unpool): per-region mean pooling and its broadcast inverse."""
    k = partition.num_regions
    pool = np.zeros((k, num_vertices))
    unpool = np.zeros((num_vertices, k))
    for r, idx in enumerate(partition.regions):
        pool[r, idx] = 1.0 / len(idx)
        unpool[idx, r] = 1.0
    return pool, unpool


def graph_pool(features, partition: RegionPartition) -> torch.Tensor:
    pool, _ = pooling_matrices(partition, np.asarray(features).shape[-2])
    x = torch.as_tensor(np.asarray(features))
    return torch.matmul(torch.as_tensor(pool, dtype=x.dtype), x)


def graph_unpool(features, partition: RegionPartition, num_vertices: int = NUM_LANDMARKS) -> torch.Tensor:
    _, unpool = pooling_matrices(partition, num_vertices)
    x = torch.as_tensor(np.asarray(features))
    return torch.matmul(torch.as_tensor(unpool, dtype=x.dtype), x)


# ---------------------------------------------------------------------------
# generator

@dataclass
class GLConfig:
    feature_dim: int = 128
    audio_hidden: int = 256
    audio_layers: int = 3
    encoder_dims: tuple[int, int, int] = (64, 128, 128)

    def __post_init__(self):
        if self.encoder_dims[-1] != self.feature_dim:
            raise ContractError("last encoder dim must equal feature_dim (skip adds)")


class GLModel(nn.Module):
    """Landmark displacement generator.

    Three encoders feed a mirrored graph decoder:
      - audio: 3-layer LSTM over windowed logits, causal across frames;
      - emotion: single linear map of the 8-dim emotion vector;
      - geometry: graph convolutions with region (68 -> 8) and global
        (8 -> 1) mean pooling.
    The decoder unpools back to 68 vertices with additive encoder skips and a
    zero-initialized final layer, so displacements start at exactly zero.
    """

    def __init__(
        self,
        graph: FaceGraph | None = None,
        partition: RegionPartition | None = None,
        config: GLConfig | None = None,
    ):
        super().__init__()
        self.graph = graph if graph is not None else build_face_graph(canonical_template())
        if self.graph.num_vertices != NUM_LANDMARKS:
            raise ContractError("landmark model requires a 68-vertex graph")
        self.partition = partition if partition is not None else default_partition()
        self.config = config if config is not None else GLConfig()
        cfg = self.config
        d = cfg.feature_dim
        c1, c2, c3 = cfg.encoder_dims

        adj = self.graph.adjacency
        adj_r = region_adjacency(self.graph, self.partition)
        pool, unpool = pooling_matrices(self.partition)
        self.register_buffer("pool_mat", torch.as_tensor(pool, dtype=torch.float32))
        self.register_buffer("unpool_mat", torch.as_tensor(unpool, dtype=torch.float32))

        self.audio_lstm = nn.LSTM(
            NUM_CHANNELS, cfg.audio_hidden, cfg.audio_layers, batch_first=True
        )
        self.audio_proj = nn.Linear(cfg.audio_hidden, d)
        self.emotion_fc = nn.Linear(EMOTION_DIM, d)
        nn.init.zeros_(self.emotion_fc.bias)  # neutral all-zeros maps to zero

        self.enc1 = GraphConv(2, c1, adj)
        self.enc2 = GraphConv(c1, c2, adj)
        self.enc3 = GraphConv(c2, c3, adj)
        self.enc_region = GraphConv(c3, d, adj_r)

        self.fuse = nn.Linear(3 * d, d)
        self.dec_region = GraphConv(d, d, adj_r)
        self.dec1 = GraphConv(d, c2, adj)
        self.dec2 = GraphConv(c2, c1, adj)
        self.dec3 = GraphConv(c1, 2, adj, activation="identity", zero_init=True)

    def encode_audio(self, windows) -> torch.Tensor:
        """(B, T, 6, 29) windows -> (B, T, d) features, causal over t.

        The LSTM consumes the window stream as T*6 consecutive steps with
        state carried across frames, then each frame keeps the state at its
        window's final step. Truncating the window sequence after frame t
        leaves features 0..t unchanged.
        """
        if isinstance(windows, (AudioFeatureSequence,)):
            windows = window_features(windows).windows
        if hasattr(windows, "windows"):
            windows = windows.windows
        x = torch.as_tensor(np.asarray(windows), dtype=self.audio_proj.weight.dtype)
        squeeze = x.ndim == 3
        if squeeze:
            x = x.unsqueeze(0)
        if x.ndim != 4 or x.shape[2] != WINDOW or x.shape[3] != NUM_CHANNELS:
            raise ContractError(f"expected windows (B, T, 6, 29), got {tuple(x.shape)}")
        b, t = x.shape[0], x.shape[1]
        out, _ = self.audio_lstm(x.reshape(b, t * WINDOW, NUM_CHANNELS))
        per_frame = out[:, WINDOW - 1 :: WINDOW]
        feats = self.audio_proj(per_frame)
        return feats.squeeze(0) if squeeze else feats

    def encode_emotion(self, emotion) -> torch.Tensor:
        if isinstance(emotion, EmotionVector):
            emotion = emotion.to_array()
        e = torch.as_tensor(np.asarray(emotion), dtype=self.emotion_fc.weight.dtype)
        if e.shape[-1] != EMOTION_DIM:
            raise ContractError(f"emotion vector must have 8 entries, got {e.shape}")
        return self.emotion_fc(e)

    def encode_graph(self, points) -> tuple[torch.Tensor, tuple[torch.Tensor, ...]]:
        """(..., 68, 2) vertices -> ((..., d) global feature, encoder skips)."""
        if isinstance(points, LandmarkSet):
            points = points.points
        x = torch.as_tensor(np.asarray(points), dtype=self.fuse.weight.dtype)
        if x.shape[-2:] != (NUM_LANDMARKS, 2):
            raise ContractError(f"expected (..., 68, 2) vertices, got {tuple(x.shape)}")
        s1 = self.enc1(x)
        s2 = self.enc2(s1)
        s3 = self.enc3(s2)
        pooled = torch.matmul(self.pool_mat, s3)
        r = self.enc_region(pooled)
        f_l = r.mean(dim=-2)
        return f_l, (s1, s2, s3, r)

    def decode(
        self,
        f_audio: torch.Tensor,
        f_landmark: torch.Tensor,
        f_emotion: torch.Tensor,
        skips: tuple[torch.Tensor, ...],
    ) -> torch.Tensor:
        """Per-frame fused features -> (..., T, 68, 2) displacements."""
        s1, s2, s3, r = skips
        t = f_audio.shape[-2]
        expand = lambda f: f.unsqueeze(-2).expand(*f.shape[:-1], t, f.shape[-1])
        z = self.fuse(torch.cat([f_audio, expand(f_landmark), expand(f_emotion)], dim=-1))
        # global -> regions is broadcast; encoder skips add at each level
        y = z.unsqueeze(-2) + r.unsqueeze(-3)
        y = self.dec_region(y)
        y = torch.matmul(self.unpool_mat, y) + s3.unsqueeze(-3)
        y = self.dec1(y) + s2.unsqueeze(-3)
        y = self.dec2(y) + s1.unsqueeze(-3)
        return self.dec3(y)

    def forward(
        self, windows: torch.Tensor, neutral: torch.Tensor, emotion: torch.Tensor
    ) -> torch.Tensor:
        """-> (B, T, 68, 2) predicted landmarks: neutral + displacement."""
        f_a = self.encode_audio(windows)
        f_l, skips = self.encode_graph(neutral)
        f_e = self.encode_emotion(emotion)
        delta = self.decode(f_a, f_l, f_e, skips)
        return neutral.unsqueeze(-3) + delta


def infer_landmark_sequence(
    model: GLModel,
    features: AudioFeatureSequence,
    neutral: LandmarkSet,
    emotion: EmotionVector,
) -> list[LandmarkSet]:
    """Run the generator over a clip. Output stays in the canonical frame."""
    if not neutral.canonical:
        raise ContractError("inference expects a canonical-frame neutral face")
    windows = window_features(features).windows
    w = torch.as_tensor(windows, dtype=torch.float32).unsqueeze(0)
    pts = torch.as_tensor(neutral.points, dtype=torch.float32).unsqueeze(0)
    e = torch.as_tensor(emotion.to_array(), dtype=torch.float32).unsqueeze(0)
    with torch.no_grad():
        pred = model(w, pts, e)[0]
    return [
        LandmarkSet(pred[t].numpy().astype(np.float64), canonical=True)
        for t in range(pred.shape[0])
    ]


# ---------------------------------------------------------------------------
# discriminator

class GraphDiscriminator(nn.Module):
    """Emotion-conditioned realism score for a landmark graph."""

    def __init__(
        self,
        graph: FaceGraph | None = None,
        partition: RegionPartition | None = None,
        feature_dim: int = 128,
    ):
        super().__init__()
        self.graph = graph if graph is not None else build_face_graph(canonical_template())
        self.partition = partition if partition is not None else default_partition()
        adj = self.graph.adjacency
        adj_r = region_adjacency(self.graph, self.partition)
        pool, _ = pooling_matrices(self.partition)
        self.register_buffer("pool_mat", torch.as_tensor(pool, dtype=torch.float32))
        d = feature_dim
        self.gc1 = GraphConv(2, 64, adj, activation="leaky_relu")
        self.gc2 = GraphConv(64, d, adj, activation="leaky_relu")
        self.gc_region = GraphConv(d, d, adj_r, activation="leaky_relu")
        self.emotion_fc = nn.Linear(EMOTION_DIM, d)
        self.head = nn.Sequential(
            nn.Linear(2 * d, d), nn.LeakyReLU(0.2), nn.Linear(d, 1)
        )

    def forward(self, points: torch.Tensor, emotion: torch.Tensor) -> torch.Tensor:
        x = self.gc2(self.gc1(points))
        pooled = torch.matmul(self.pool_mat, x)
        g = self.gc_region(pooled).mean(dim=-2)
        e = self.emotion_fc(emotion)
        return self.head(torch.cat([g, e], dim=-1)).squeeze(-1)


# ---------------------------------------------------------------------------
# losses and training

def vertex_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all landmark coordinates."""
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def lsgan_d_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * (((d_real - 1.0) ** 2).mean() + (d_fake ** 2).mean())


def lsgan_g_loss(d_fake: torch.Tensor) -> torch.Tensor:
    return 0.5 * ((d_fake - 1.0) ** 2).mean()


def _as_vertex_tensor(graph_or_points, dtype=torch.float32) -> torch.Tensor:
    if isinstance(graph_or_points, FaceGraph):
        graph_or_points = graph_or_points.vertices
    if isinstance(graph_or_points, LandmarkSet):
        graph_or_points = graph_or_points.points
    return torch.as_tensor(np.asarray(graph_or_points), dtype=dtype)


def lsgan_losses(disc, real, fake, emotion) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares adversarial pair (discriminator loss, generator loss)."""
    e = torch.as_tensor(
        emotion.to_array() if isinstance(emotion, EmotionVector) else np.asarray(emotion),
        dtype=torch.float32,
    )
    d_real = disc(_as_vertex_tensor(real), e)
    d_fake = disc(_as_vertex_tensor(fake), e)
    return lsgan_d_loss(d_real, d_fake), lsgan_g_loss(d_fake)


def landmark_loss(
    loss_ver: torch.Tensor,
    loss_gan: torch.Tensor,
    lambda_ver: float = 1.0,
    lambda_gan: float = 0.5,
) -> torch.Tensor:
    return lambda_ver * loss_ver + lambda_gan * loss_gan


@dataclass
class ClipBatch:
    """A batch of equal-length clips for landmark training."""

    windows: torch.Tensor   # (B, T, 6, 29)
    neutral: torch.Tensor   # (B, 68, 2)
    emotion: torch.Tensor   # (B, 8)
    targets: torch.Tensor   # (B, T, 68, 2)

    def __post_init__(self):
        b, t = self.windows.shape[0], self.windows.shape[1]
        if self.windows.shape != (b, t, WINDOW, NUM_CHANNELS):
            raise ContractError(f"windows must be (B, T, 6, 29), got {tuple(self.windows.shape)}")
        if self.neutral.shape != (b, NUM_LANDMARKS, 2):
            raise ContractError("neutral must be (B, 68, 2)")
        if self.emotion.shape != (b, EMOTION_DIM):
            raise ContractError("emotion must be (B, 8)")
        if self.targets.shape != (b, t, NUM_LANDMARKS, 2):
            raise ContractError("targets must be (B, T, 68, 2)")


@dataclass
class LandmarkLossReport:
    vertex: float
    gen_adversarial: float
    disc_adversarial: float
    total: float


def train_landmark_step(
    model: GLModel,
    disc: GraphDiscriminator,
    batch: ClipBatch,
    opt_model: torch.optim.Optimizer,
    opt_disc: torch.optim.Optimizer,
    lambda_ver: float = 1.0,
    lambda_gan: float = 0.5,
) -> LandmarkLossReport:
    """One alternating discriminator/generator update.

    Deterministic for a fixed seed and single-threaded execution; a non-finite
    loss aborts with TrainingDivergedError before the corresponding step.
    """
    pred = model(batch.windows, batch.neutral, batch.emotion)
    b, t = pred.shape[0], pred.shape[1]
    flat_fake = pred.reshape(b * t, NUM_LANDMARKS, 2)
    flat_real = batch.targets.reshape(b * t, NUM_LANDMARKS, 2)
    flat_e = batch.emotion.unsqueeze(1).expand(b, t, EMOTION_DIM).reshape(b * t, EMOTION_DIM)

    d_real = disc(flat_real, flat_e)
    d_fake = disc(flat_fake.detach(), flat_e)
    loss_d = lsgan_d_loss(d_real, d_fake)
    if not torch.isfinite(loss_d):
        raise TrainingDivergedError(f"discriminator loss is not finite: {loss_d.item()}")
    opt_disc.zero_grad()
    loss_d.backward()
    opt_disc.step()

    loss_ver = vertex_loss(pred, batch.targets)
    loss_g = lsgan_g_loss(disc(flat_fake, flat_e))
    total = landmark_loss(loss_ver, loss_g, lambda_ver, lambda_gan)
    if not torch.isfinite(total):
        raise TrainingDivergedError(
            f"generator loss is not finite: ver={loss_ver.item()}, gan={loss_g.item()}"
        )
    opt_model.zero_grad()
    total.backward()
    opt_model.step()

    return LandmarkLossReport(
        vertex=loss_ver.item(),
        gen_adversarial=loss_g.item(),
        disc_adversarial=loss_d.item(),
        total=total.item(),
    )
