"""Quality metrics for generated talking-face video.

Frame metrics (PSNR, SSIM, CPBD), a Frechet distance over embedded frame
sets, landmark trajectory distances, and pluggable scorers for identity
similarity, emotion accuracy, and audio-visual sync. Scorers are protocols;
the bundled implementations are deterministic stand-ins suitable for the
synthetic data in this repository, not pretrained perceptual models.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from skimage.feature import canny
from skimage.metrics import structural_similarity

from .audio import AudioFeatureSequence
from .errors import ContractError
from .geometry import FACE_INDICES, MOUTH_INDICES, LandmarkSet
from .texture_gen import FrameImage

PSNR_CAP_DB = 100.0


def _to_unit(frame: FrameImage) -> np.ndarray:
    """(3, H, W) pixels in [-1, 1] -> float64 in [0, 1]."""
    return (frame.pixels.astype(np.float64) + 1.0) / 2.0


def _gray(frame: FrameImage) -> np.ndarray:
    x = _to_unit(frame)
    return 0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]


def psnr(a: FrameImage, b: FrameImage) -> float:
    """Peak signal-to-noise ratio in dB over [0, 1] intensities, capped at 100."""
    if a.resolution != b.resolution:
        raise ContractError("psnr requires frames of equal resolution")
    mse = float(np.mean((_to_unit(a) - _to_unit(b)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse)))


def ssim(a: FrameImage, b: FrameImage) -> float:
    """Mean structural similarity (11x11 Gaussian windows, sigma 1.5)."""
    if a.resolution != b.resolution:
        raise ContractError("ssim requires frames of equal resolution")
    return float(
        structural_similarity(
            _to_unit(a),
            _to_unit(b),
            channel_axis=0,
            data_range=1.0,
            win_size=11,
            gaussian_weights=True,
            sigma=1.5,
            K1=0.01,
            K2=0.03,
            use_sample_covariance=False,
        )
    )


# ---------------------------------------------------------------------------
# CPBD sharpness

_CPBD_BETA = 3.6
_P_JNB = 0.63
_CPBD_BLOCK = 64
_CPBD_EDGE_FRACTION = 0.002


def _edge_width(row: np.ndarray, col: int, rising: bool) -> int:
    """Distance between the local extrema bracketing an edge pixel."""
    n = row.shape[0]
    left = col
    right = col
    if rising:
        while left > 0 and row[left - 1] < row[left]:
            left -= 1
        while right < n - 1 and row[right + 1] > row[right]:
            right += 1
    else:
        while left > 0 and row[left - 1] > row[left]:
            left -= 1
        while right < n - 1 and row[right + 1] < row[right]:
            right += 1
    return right - left


def cpbd(frame: FrameImage) -> float:
    """Cumulative probability of blur detection, in [0, 1], higher is sharper.

    Edge pixels come from a Canny detector; widths are traced along rows for
    pixels whose gradient is predominantly horizontal. The just-noticeable
    blur width is 5 for block contrast at or below 50 intensity levels and 3
    above, and an edge of width w contributes blur probability
    1 - exp(-(w / w_jnb) ** 3.6). The score is the fraction of edges with
    blur probability at most 0.63. An image with no detectable edges scores
    0.
    """
    gray = _gray(frame)
    edges = canny(gray, sigma=1.0)
    if not edges.any():
        return 0.0
    gx = np.gradient(gray, axis=1)
    gy = np.gradient(gray, axis=0)
    horizontal = np.abs(gx) >= np.abs(gy)

    h, w = gray.shape
    sharp = 0
    total = 0
    for by in range(0, h, _CPBD_BLOCK):
        for bx in range(0, w, _CPBD_BLOCK):
            sl = (slice(by, min(by + _CPBD_BLOCK, h)), slice(bx, min(bx + _CPBD_BLOCK, w)))
            block_edges = edges[sl] & horizontal[sl]
            count = int(block_edges.sum())
            area = (sl[0].stop - sl[0].start) * (sl[1].stop - sl[1].start)
            if count <= _CPBD_EDGE_FRACTION * area:
                continue
            contrast = (gray[sl].max() - gray[sl].min()) * 255.0
            w_jnb = 5.0 if contrast <= 50.0 else 3.0
            ys, xs = np.nonzero(block_edges)
            for y, x in zip(ys + sl[0].start, xs + sl[1].start):
                width = _edge_width(gray[y], x, rising=gx[y, x] >= 0.0)
                p_blur = 1.0 - np.exp(-((width / w_jnb) ** _CPBD_BETA))
                total += 1
                if p_blur <= _P_JNB:
                    sharp += 1
    if total == 0:
        return 0.0
    return sharp / total


# ---------------------------------------------------------------------------
# Frechet distance over embedded frame sets

@runtime_checkable
class Embedder(Protocol):
    def embed(self, frame: FrameImage) -> np.ndarray:
        ...


class PixelStatEmbedder:
    """64-dim embedding: the grayscale image block-averaged onto an 8x8 grid."""

    dim = 64

    def embed(self, frame: FrameImage) -> np.ndarray:
        gray = _gray(frame)
        rows = np.array_split(gray, 8, axis=0)
        cells = [np.array_split(r, 8, axis=1) for r in rows]
        return np.array([c.mean() for row in cells for c in row], dtype=np.float64)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Matrix square root of a symmetric PSD matrix, eigenvalues clamped."""
    sym = (m + m.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, 1e-10)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(emb_a: np.ndarray, emb_b: np.ndarray) -> float:
    """Frechet distance between Gaussians fit to two embedding sets.

    ||mu_a - mu_b||^2 + Tr(S_a) + Tr(S_b) - 2 Tr((S_a S_b)^(1/2)), with the
    cross term averaged over both orderings so the result is symmetric in
    its arguments, and clamped at zero.
    """
    a = np.asarray(emb_a, dtype=np.float64)
    b = np.asarray(emb_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ContractError("embeddings must be (N, D) with matching D")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ContractError("need at least two samples per set")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    diff = float(((mu_a - mu_b) ** 2).sum())
    sa = _psd_sqrt(cov_a)
    sb = _psd_sqrt(cov_b)
    t_ab = float(np.trace(_psd_sqrt(sa @ cov_b @ sa)))
    t_ba = float(np.trace(_psd_sqrt(sb @ cov_a @ sb)))
    val = diff + float(np.trace(cov_a)) + float(np.trace(cov_b)) - (t_ab + t_ba)
    return max(val, 0.0)


def fid(
    frames_a: Sequence[FrameImage],
    frames_b: Sequence[FrameImage],
    embedder: Embedder | None = None,
) -> float:
    """Frechet distance between two frame sets under an embedder."""
    if embedder is None:
        embedder = PixelStatEmbedder()
    emb_a = np.stack([embedder.embed(f) for f in frames_a])
    emb_b = np.stack([embedder.embed(f) for f in frames_b])
    return frechet_distance(emb_a, emb_b)


# ---------------------------------------------------------------------------
# landmark trajectory distances

def _sequence_array(seq) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        arr = np.asarray(seq, dtype=np.float64)
    else:
        arr = np.stack(
            [s.points if isinstance(s, LandmarkSet) else np.asarray(s, dtype=np.float64) for s in seq]
        )
    if arr.ndim != 3 or arr.shape[1:] != (68, 2):
        raise ContractError(f"landmark sequence must be (T, 68, 2), got {arr.shape}")
    return arr


def landmark_distance(pred, target, indices: np.ndarray | None = None) -> tuple[float, float]:
    """(LD, LVD): mean vertex distance and mean velocity-difference norm.

    LD averages the Euclidean distance per vertex over all frames; LVD does
    the same for frame-to-frame velocity vectors (zero for single-frame
    sequences). `indices` restricts both to a vertex subset.
    """
    p = _sequence_array(pred)
    t = _sequence_array(target)
    if p.shape != t.shape:
        raise ContractError("sequences must have matching shapes")
    if indices is not None:
        p = p[:, indices]
        t = t[:, indices]
    ld = float(np.sqrt(((p - t) ** 2).sum(axis=-1)).mean())
    if p.shape[0] < 2:
        return ld, 0.0
    vp = np.diff(p, axis=0)
    vt = np.diff(t, axis=0)
    lvd = float(np.sqrt(((vp - vt) ** 2).sum(axis=-1)).mean())
    return ld, lvd


def mouth_landmark_distance(pred, target) -> tuple[float, float]:
    return landmark_distance(pred, target, MOUTH_INDICES)


def face_landmark_distance(pred, target) -> tuple[float, float]:
    return landmark_distance(pred, target, FACE_INDICES)


# ---------------------------------------------------------------------------
# scorers

def cosine_similarity_score(
    embedder: Embedder, frames: Sequence[FrameImage], identity: FrameImage
) -> float:
    """Mean cosine similarity between frame embeddings and the identity frame."""
    ref = embedder.embed(identity)
    ref_n = np.linalg.norm(ref)
    sims = []
    for f in frames:
        e = embedder.embed(f)
        denom = np.linalg.norm(e) * ref_n
        sims.append(0.0 if denom == 0.0 else float(np.dot(e, ref) / denom))
    return float(np.mean(sims))


@runtime_checkable
class EmotionClassifier(Protocol):
    def classify(self, frames: Sequence[FrameImage]) -> str:
        ...


@runtime_checkable
class SyncScorer(Protocol):
    def score(self, frames: Sequence[FrameImage], features: AudioFeatureSequence) -> float:
        ...


class MarkerEmotionClassifier:
    """Reads the emotion label the synthetic renderer stamps into frames."""

    def classify(self, frames: Sequence[FrameImage]) -> str:
        from .data import decode_emotion_marker

        if not frames:
            raise ContractError("cannot classify an empty frame sequence")
        return decode_emotion_marker(frames[0])


class EnergySyncScorer:
    """Correlation of frame-difference energy with feature-difference energy.

    A deterministic proxy for audio-visual sync confidence: both signals are
    per-step change magnitudes, compared with Pearson correlation and mapped
    to [0, 1].
    """

    def score(self, frames: Sequence[FrameImage], features: AudioFeatureSequence) -> float:
        if len(frames) != features.num_frames:
            raise ContractError("frame count must match feature frame count")
        if len(frames) < 3:
            return 0.0
        visual = np.array(
            [
                float(np.abs(frames[i + 1].pixels - frames[i].pixels).mean())
                for i in range(len(frames) - 1)
            ]
        )
        audio = np.abs(np.diff(features.logits, axis=0)).mean(axis=1)
        if visual.std() == 0.0 or audio.std() == 0.0:
            return 0.0
        corr = float(np.corrcoef(visual, audio)[0, 1])
        return (corr + 1.0) / 2.0


# ---------------------------------------------------------------------------
# report

@dataclass
class MetricReport:
    psnr: float
    ssim: float
    cpbd: float
    fid: float
    m_ld: float | None = None
    m_lvd: float | None = None
    f_ld: float | None = None
    f_lvd: float | None = None
    csim: float | None = None
    emo_acc: float | None = None
    sync_conf: float | None = None

    def to_dict(self) -> dict[str, float]:
        """Flat key-value view; unset optional fields are omitted."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                out[f.name] = float(value)
        return out

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "MetricReport":
        return cls(**json.loads(Path(path).read_text()))


def frame_metrics(
    pred: Sequence[FrameImage],
    target: Sequence[FrameImage],
    embedder: Embedder | None = None,
) -> tuple[float, float, float, float]:
    """(mean PSNR, mean SSIM, mean CPBD of pred, FID) over paired frame lists."""
    if len(pred) != len(target):
        raise ContractError("pred and target frame counts differ")
    if not pred:
        raise ContractError("cannot score an empty frame list")
    psnrs = [psnr(p, t) for p, t in zip(pred, target)]
    ssims = [ssim(p, t) for p, t in zip(pred, target)]
    cpbds = [cpbd(p) for p in pred]
    return (
        float(np.mean(psnrs)),
        float(np.mean(ssims)),
        float(np.mean(cpbds)),
        fid(pred, target, embedder),
    )


def scored_metrics(
    pred_frames: Sequence[FrameImage],
    identity: FrameImage | None = None,
    emotion_label: str | None = None,
    features: AudioFeatureSequence | None = None,
    embedder: Embedder | None = None,
    classifier: EmotionClassifier | None = None,
    sync_scorer: SyncScorer | None = None,
) -> dict[str, float]:
    """Optional scored metrics; entries are omitted (with a warning) when the
    scorer or its inputs are not configured."""
    out: dict[str, float] = {}
    if embedder is not None and identity is not None:
        out["csim"] = cosine_similarity_score(embedder, pred_frames, identity)
    else:
        warnings.warn("identity embedder not configured; csim omitted", stacklevel=2)
    if classifier is not None and emotion_label is not None:
        predicted = classifier.classify(pred_frames)
        out["emo_acc"] = 100.0 if predicted == emotion_label else 0.0
    else:
        warnings.warn("emotion classifier not configured; emo_acc omitted", stacklevel=2)
    if sync_scorer is not None and features is not None:
        out["sync_conf"] = sync_scorer.score(pred_frames, features)
    else:
        warnings.warn("sync scorer not configured; sync_conf omitted", stacklevel=2)
    return out
