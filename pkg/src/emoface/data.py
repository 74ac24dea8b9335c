"""Dataset layout, indexing, and a fully synthetic data generator.

Clips live under `<root>/<subject>/<emotion>/<intensity>/<clip>/` holding a
`frames/` directory of PNGs, a `landmarks.txt` trajectory in image pixel
coordinates, and an `audio.af` feature file. Frame count, landmark count,
and feature count must agree; inconsistent clips are skipped with a warning
and an empty index is an error.

The synthetic generator renders flat-shaded faces from the landmark
template: per-subject shape and skin-tone jitter, speech-energy-driven mouth
opening, emotion-dependent displacement and skin tint, and a small
machine-readable emotion marker block in the top-left corner that the
bundled stand-in emotion classifier decodes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .audio import (
    AudioFeatureSequence,
    SyntheticFeatureExtractor,
    load_features,
    save_features,
    window_features,
)
from .errors import ContractError, DatasetError
from .geometry import (
    LandmarkSet,
    build_face_graph,
    canonical_template,
    load_landmark_file,
    save_landmark_file,
)
from .landmark_gen import CATEGORIES, INTENSITIES, ClipBatch, EmotionVector
from .texture_gen import FrameImage, TextureSample, save_image

EMOTION_LABELS = ("neutral",) + CATEGORIES

FRAMES_DIR = "frames"
LANDMARK_FILE = "landmarks.txt"
AUDIO_FILE = "audio.af"

MARKER_SIZE = 4
BACKGROUND_RGB = (40, 48, 64)

# additive skin-tone shift per emotion, in 8-bit intensity levels
_EMOTION_TINT = {
    "neutral": (0, 0, 0),
    "angry": (18, -8, -8),
    "disgust": (-6, 12, -6),
    "fear": (-12, 2, 14),
    "happy": (14, 6, -6),
    "sad": (-10, -6, 12),
    "surprise": (10, 12, 2),
}


# ---------------------------------------------------------------------------
# dataset index

@dataclass
class ClipEntry:
    subject: str
    emotion: str
    intensity: str
    clip: str
    path: Path
    frame_files: list[Path]
    landmark_file: Path
    audio_file: Path
    num_frames: int

    def load_landmarks(self) -> list[LandmarkSet]:
        return load_landmark_file(self.landmark_file)

    def load_features(self) -> AudioFeatureSequence:
        return load_features(self.audio_file)


@dataclass
class DatasetIndex:
    root: Path
    entries: list[ClipEntry]

    def subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries})

    def entries_for(self, subject: str) -> list[ClipEntry]:
        return [e for e in self.entries if e.subject == subject]

    def neutral_entry(self, subject: str) -> ClipEntry | None:
        for e in self.entries_for(subject):
            if e.emotion == "neutral":
                return e
        return None


def _skip(clip_dir: Path, reason: str) -> None:
    warnings.warn(f"skipping clip {clip_dir}: {reason}", stacklevel=3)


def index_dataset(root: str | Path) -> DatasetIndex:
    """Walk a dataset tree, validating per-clip consistency.

    Clips with unknown emotion or intensity labels, missing pieces, or
    mismatched frame/landmark/feature counts are skipped with a warning.
    Raises DatasetError when nothing usable remains.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root is not a directory: {root}")
    entries: list[ClipEntry] = []
    for subject_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for emotion_dir in sorted(p for p in subject_dir.iterdir() if p.is_dir()):
            if emotion_dir.name not in EMOTION_LABELS:
                warnings.warn(
                    f"skipping {emotion_dir}: unknown emotion label", stacklevel=2
                )
                continue
            for intensity_dir in sorted(p for p in emotion_dir.iterdir() if p.is_dir()):
                if intensity_dir.name not in INTENSITIES:
                    warnings.warn(
                        f"skipping {intensity_dir}: unknown intensity label", stacklevel=2
                    )
                    continue
                for clip_dir in sorted(p for p in intensity_dir.iterdir() if p.is_dir()):
                    entry = _index_clip(subject_dir.name, emotion_dir.name,
                                        intensity_dir.name, clip_dir)
                    if entry is not None:
                        entries.append(entry)
    if not entries:
        raise DatasetError(f"no usable clips under {root}")
    return DatasetIndex(root, entries)


def _index_clip(subject: str, emotion: str, intensity: str, clip_dir: Path) -> ClipEntry | None:
    frames_dir = clip_dir / FRAMES_DIR
    landmark_file = clip_dir / LANDMARK_FILE
    audio_file = clip_dir / AUDIO_FILE
    for piece in (frames_dir, landmark_file, audio_file):
        if not piece.exists():
            _skip(clip_dir, f"missing {piece.name}")
            return None
    frame_files = sorted(frames_dir.glob("*.png"))
    if not frame_files:
        _skip(clip_dir, "no frames")
        return None
    try:
        num_landmarks = len(load_landmark_file(landmark_file))
        num_features = load_features(audio_file).num_frames
    except Exception as exc:
        _skip(clip_dir, str(exc))
        return None
    if not len(frame_files) == num_landmarks == num_features:
        _skip(
            clip_dir,
            f"count mismatch: {len(frame_files)} frames, "
            f"{num_landmarks} landmark rows, {num_features} feature rows",
        )
        return None
    return ClipEntry(
        subject=subject,
        emotion=emotion,
        intensity=intensity,
        clip=clip_dir.name,
        path=clip_dir,
        frame_files=frame_files,
        landmark_file=landmark_file,
        audio_file=audio_file,
        num_frames=len(frame_files),
    )


# ---------------------------------------------------------------------------
# emotion marker

def emotion_marker_value(label: str) -> float:
    """[0, 1] gray level encoding an emotion label."""
    if label not in EMOTION_LABELS:
        raise ContractError(f"unknown emotion label: {label}")
    return (EMOTION_LABELS.index(label) + 1) / 8.0


def decode_emotion_marker(frame: FrameImage) -> str:
    """Recover the label stamped by the synthetic renderer."""
    block = frame.pixels[:, :MARKER_SIZE, :MARKER_SIZE]
    value = float((block.mean() + 1.0) / 2.0)
    idx = int(np.clip(round(value * 8.0) - 1, 0, len(EMOTION_LABELS) - 1))
    return EMOTION_LABELS[idx]


# ---------------------------------------------------------------------------
# face rendering

def _clamp_rgb(rgb) -> tuple[int, int, int]:
    return tuple(int(np.clip(v, 0, 255)) for v in rgb)


def render_face(
    landmarks,
    resolution: int,
    emotion_label: str = "neutral",
    tone: tuple[int, int, int] = (214, 178, 148),
) -> FrameImage:
    """Flat-shaded face image from canonical landmarks.

    Forehead and skull are synthesized (landmarks stop at the brows); eyes,
    brows, nose, and lips are drawn from their landmark polygons. The skin
    tone is shifted by an emotion-specific tint and the top-left corner
    carries the emotion marker block.
    """
    pts = landmarks.points if isinstance(landmarks, LandmarkSet) else np.asarray(landmarks)
    if pts.shape != (68, 2):
        raise ContractError(f"expected (68, 2) landmarks, got {pts.shape}")
    px = pts * resolution

    skin = _clamp_rgb(np.array(tone) + np.array(_EMOTION_TINT[emotion_label]))
    img = Image.new("RGB", (resolution, resolution), BACKGROUND_RGB)
    draw = ImageDraw.Draw(img)

    jaw = [tuple(p) for p in px[0:17]]
    left_top = px[0]
    right_top = px[16]
    cx = (left_top[0] + right_top[0]) / 2.0
    rx = (right_top[0] - left_top[0]) / 2.0
    base_y = (left_top[1] + right_top[1]) / 2.0
    ry = 0.22 * resolution
    forehead = [
        (cx + rx * np.cos(a), base_y - ry * np.sin(a))
        for a in np.linspace(0.0, np.pi, 9)
    ]
    draw.polygon(jaw + forehead, fill=skin)

    line_w = max(1, resolution // 48)
    brow_color = (70, 45, 28)
    draw.line([tuple(p) for p in px[17:22]], fill=brow_color, width=line_w)
    draw.line([tuple(p) for p in px[22:27]], fill=brow_color, width=line_w)

    for start in (36, 42):
        eye = px[start : start + 6]
        draw.polygon([tuple(p) for p in eye], fill=(245, 245, 245))
        center = eye.mean(axis=0)
        r = max(1.0, 0.016 * resolution)
        draw.ellipse(
            [center[0] - r, center[1] - r, center[0] + r, center[1] + r],
            fill=(60, 40, 30),
        )

    nose_color = _clamp_rgb(np.array(skin) - 30)
    draw.line([tuple(p) for p in px[27:31]], fill=nose_color, width=line_w)
    draw.line([tuple(p) for p in px[31:36]], fill=nose_color, width=line_w)

    draw.polygon([tuple(p) for p in px[48:60]], fill=(172, 84, 84))
    draw.polygon([tuple(p) for p in px[60:68]], fill=(44, 16, 16))

    g = int(round(255 * emotion_marker_value(emotion_label)))
    draw.rectangle([0, 0, MARKER_SIZE - 1, MARKER_SIZE - 1], fill=(g, g, g))

    arr = np.asarray(img, dtype=np.float32) / 127.5 - 1.0
    return FrameImage(arr.transpose(2, 0, 1))


# ---------------------------------------------------------------------------
# synthetic motion

def emotion_displacement(label: str, intensity: str = "high") -> np.ndarray:
    """Canonical-unit landmark displacement for an emotion at an intensity."""
    if label not in EMOTION_LABELS:
        raise ContractError(f"unknown emotion label: {label}")
    if intensity not in INTENSITIES:
        raise ContractError(f"unknown intensity: {intensity}")
    amp = 1.0 if intensity == "high" else 0.55
    d = np.zeros((68, 2))
    if label == "neutral":
        return d
    if label == "happy":
        d[[48, 54, 60, 64], 1] -= 0.030          # lip corners up
        d[48, 0] -= 0.015
        d[60, 0] -= 0.010
        d[54, 0] += 0.015
        d[64, 0] += 0.010
        d[17:27, 1] -= 0.008
    elif label == "sad":
        d[[48, 54, 60, 64], 1] += 0.025          # lip corners down
        d[[21, 22], 1] -= 0.018                  # inner brows up
        d[[17, 26], 1] += 0.008
    elif label == "angry":
        d[17:27, 1] += 0.022                     # brows down
        d[[20, 21], 0] += 0.012                  # and inward
        d[[22, 23], 0] -= 0.012
        d[60:68, 1] += np.array([0, 0.004, 0.006, 0.004, 0, -0.004, -0.006, -0.004])
    elif label == "surprise":
        d[17:27, 1] -= 0.030                     # brows up
        d[[65, 66, 67], 1] += 0.035              # mouth drops open
        d[[56, 57, 58], 1] += 0.030
        d[6:11, 1] += 0.020
    elif label == "fear":
        d[17:27, 1] -= 0.022
        d[[20, 21], 0] += 0.010
        d[[22, 23], 0] -= 0.010
        d[[56, 57, 58, 65, 66, 67], 1] += 0.015
    elif label == "disgust":
        d[31:36, 1] -= 0.012                     # nose base up
        d[[50, 51, 52, 61, 62, 63], 1] -= 0.012  # upper lip raised
        d[17:22, 1] += 0.010
    return amp * d


def speech_openness(features: AudioFeatureSequence) -> np.ndarray:
    """(T,) mouth-opening drive in [0, 1] from feature-energy over time."""
    energy = np.abs(features.logits.astype(np.float64)).mean(axis=1)
    if energy.shape[0] >= 3:
        kernel = np.ones(3) / 3.0
        energy = np.convolve(energy, kernel, mode="same")
    lo, hi = energy.min(), energy.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(energy)
    return (energy - lo) / (hi - lo)


def mouth_displacement(openness: float) -> np.ndarray:
    """Canonical-unit displacement opening the mouth by `openness` in [0, 1]."""
    d = np.zeros((68, 2))
    d[[55, 56, 57, 58, 59], 1] += openness * np.array([0.015, 0.035, 0.045, 0.035, 0.015])
    d[[65, 66, 67], 1] += openness * np.array([0.040, 0.050, 0.040])
    d[[61, 62, 63], 1] -= openness * 0.006
    d[6:11, 1] += openness * np.array([0.008, 0.015, 0.020, 0.015, 0.008])
    return d


def synthetic_landmark_sequence(
    neutral: LandmarkSet,
    label: str,
    intensity: str,
    features: AudioFeatureSequence,
    onset_frames: int = 6,
) -> np.ndarray:
    """(T, 68, 2) canonical trajectory: emotion eases in, speech drives the mouth."""
    t_count = features.num_frames
    openness = speech_openness(features)
    emo = emotion_displacement(label, intensity)
    ramp = np.clip(np.arange(t_count) / max(onset_frames, 1), 0.0, 1.0)
    out = np.empty((t_count, 68, 2))
    for t in range(t_count):
        pts = neutral.points + ramp[t] * emo + mouth_displacement(float(openness[t]))
        out[t] = np.clip(pts, 0.0, 1.0)
    return out


def synthetic_neutral_landmarks(rng: np.random.Generator) -> LandmarkSet:
    """Template face with per-subject shape jitter, still canonical."""
    pts = canonical_template().points.copy()
    center = pts.mean(axis=0)
    scale = rng.uniform(0.92, 1.02, size=2)
    pts = center + (pts - center) * scale

    mouth = pts[48:68]
    mc = mouth.mean(axis=0)
    pts[48:68] = mc + (mouth - mc) * rng.uniform(0.9, 1.1)
    for start in (36, 42):
        eye = pts[start : start + 6]
        ec = eye.mean(axis=0)
        pts[start : start + 6] = ec + (eye - ec) * rng.uniform(0.9, 1.1)
    pts[17:27, 1] += rng.uniform(-0.01, 0.01)
    return LandmarkSet(np.clip(pts, 0.0, 1.0), canonical=True)


def synthetic_tone(rng: np.random.Generator) -> tuple[int, int, int]:
    return (
        int(rng.integers(196, 227)),
        int(rng.integers(160, 191)),
        int(rng.integers(130, 161)),
    )


# ---------------------------------------------------------------------------
# dataset generation

@dataclass
class SyntheticDatasetSpec:
    subjects: int = 2
    emotions: tuple[str, ...] = ("happy", "sad")
    intensities: tuple[str, ...] = ("high",)
    clips_per_condition: int = 1
    frames_per_clip: int = 24
    resolution: int = 64
    seed: int = 0
    include_neutral: bool = True

    def __post_init__(self):
        for label in self.emotions:
            if label not in CATEGORIES:
                raise ContractError(f"unknown emotion category: {label}")
        for level in self.intensities:
            if level not in INTENSITIES:
                raise ContractError(f"unknown intensity: {level}")
        if self.subjects < 1 or self.clips_per_condition < 1 or self.frames_per_clip < 1:
            raise ContractError("subjects, clips, and frames must be positive")


def write_synthetic_dataset(root: str | Path, spec: SyntheticDatasetSpec) -> DatasetIndex:
    """Render a complete dataset tree and return its index."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for s in range(spec.subjects):
        subject_rng = np.random.default_rng([spec.seed, s])
        neutral = synthetic_neutral_landmarks(subject_rng)
        tone = synthetic_tone(subject_rng)
        conditions = []
        if spec.include_neutral:
            conditions.append(("neutral", INTENSITIES[0]))
        conditions.extend(
            (label, level) for label in spec.emotions for level in spec.intensities
        )
        for cond_idx, (label, level) in enumerate(conditions):
            for k in range(spec.clips_per_condition):
                clip_dir = root / f"subject{s:02d}" / label / level / f"clip{k:02d}"
                feat_seed = int(
                    np.random.default_rng([spec.seed, s, cond_idx, k]).integers(2**31)
                )
                features = SyntheticFeatureExtractor(
                    spec.frames_per_clip, seed=feat_seed
                ).extract()
                write_synthetic_clip(clip_dir, neutral, tone, label, level,
                                     features, spec.resolution)
    return index_dataset(root)


def write_synthetic_clip(
    clip_dir: Path,
    neutral: LandmarkSet,
    tone: tuple[int, int, int],
    label: str,
    level: str,
    features: AudioFeatureSequence,
    resolution: int,
) -> None:
    frames_dir = clip_dir / FRAMES_DIR
    frames_dir.mkdir(parents=True, exist_ok=True)
    trajectory = synthetic_landmark_sequence(neutral, label, level, features)
    for t in range(trajectory.shape[0]):
        frame = render_face(trajectory[t], resolution, label, tone)
        save_image(frames_dir / f"{t:06d}.png", frame)
    save_landmark_file(clip_dir / LANDMARK_FILE, trajectory * resolution)
    save_features(clip_dir / AUDIO_FILE, features)


# ---------------------------------------------------------------------------
# in-memory toy sets (no file I/O), used by experiments and tests

@dataclass
class LandmarkClip:
    """One supervised landmark-animation example in canonical coordinates."""

    features: AudioFeatureSequence
    emotion: EmotionVector
    neutral: LandmarkSet
    targets: np.ndarray  # (T, 68, 2)


def synthetic_landmark_clips(
    num_clips: int, num_frames: int, seed: int = 0
) -> list[LandmarkClip]:
    """Procedural clips cycling through subjects and emotion conditions."""
    clips = []
    labels = ("neutral",) + CATEGORIES
    for i in range(num_clips):
        rng = np.random.default_rng([seed, i])
        neutral = synthetic_neutral_landmarks(rng)
        label = labels[i % len(labels)]
        level = INTENSITIES[(i // len(labels)) % len(INTENSITIES)]
        features = SyntheticFeatureExtractor(
            num_frames, seed=int(rng.integers(2**31))
        ).extract()
        emotion = (
            EmotionVector.neutral() if label == "neutral" else EmotionVector.of(label, level)
        )
        targets = synthetic_landmark_sequence(neutral, label, level, features)
        clips.append(LandmarkClip(features, emotion, neutral, targets))
    return clips


def landmark_clip_batch(clips: list[LandmarkClip]) -> ClipBatch:
    """Stack equal-length clips into one training batch."""
    lengths = {c.targets.shape[0] for c in clips}
    if len(lengths) != 1:
        raise ContractError("all clips in a batch must share the same length")
    windows = torch.stack(
        [torch.as_tensor(window_features(c.features).windows) for c in clips]
    )
    neutral = torch.stack(
        [torch.as_tensor(c.neutral.points, dtype=torch.float32) for c in clips]
    )
    emotion = torch.stack([torch.as_tensor(c.emotion.to_array()) for c in clips])
    targets = torch.stack(
        [torch.as_tensor(c.targets, dtype=torch.float32) for c in clips]
    )
    return ClipBatch(windows, neutral, emotion, targets)


def synthetic_texture_samples(
    num_identities: int,
    resolution: int,
    seed: int = 0,
    emotions: tuple[str, ...] = ("happy", "sad"),
    mouth_states: tuple[float, ...] = (0.0, 0.8),
    emotion_geometry: bool = False,
) -> list[TextureSample]:
    """Animation examples where emotion pairs share identical graphs.

    With emotion_geometry off, the same mouth pose appears once per emotion
    label and the targets differ only in emotion-dependent appearance, so a
    generator can only separate them through the emotion vector.
    """
    samples = []
    for i in range(num_identities):
        rng = np.random.default_rng([seed, i])
        neutral = synthetic_neutral_landmarks(rng)
        tone = synthetic_tone(rng)
        identity = render_face(neutral, resolution, "neutral", tone)
        g_in = build_face_graph(neutral.points * resolution)
        for openness in mouth_states:
            for label in emotions:
                pts = neutral.points + mouth_displacement(openness)
                if emotion_geometry:
                    pts = pts + emotion_displacement(label, "high")
                pts = np.clip(pts, 0.0, 1.0)
                g_out = g_in.with_vertices(pts * resolution)
                target = render_face(pts, resolution, label, tone)
                samples.append(
                    TextureSample(
                        identity=identity,
                        g_in=g_in,
                        g_out=g_out,
                        emotion=EmotionVector.of(label, "high"),
                        target=target,
                    )
                )
    return samples
