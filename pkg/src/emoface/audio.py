"""Per-frame speech feature handling.

A clip's speech track is a T x 29 array of character logits, one row per
video frame at 30 fps. The on-disk format is a small binary container:

    bytes 0-3   magic "AF01"
    bytes 4-7   uint32 T (frame count), little-endian
    bytes 8-11  uint32 C (channel count, always 29), little-endian
    bytes 12-   T * C float32 values, row-major, little-endian

Raw audio decoding is out of scope; a pluggable FeatureExtractor produces the
logits, and the bundled synthetic extractor generates seeded band-limited
noise for tests and demos.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import ContractError, FeatureFormatError

NUM_CHANNELS = 29
WINDOW = 6
WINDOW_BACK = 2   # window t covers frames t-2 .. t+3
WINDOW_FWD = 3

MAGIC = b"AF01"


@dataclass
class AudioFeatureSequence:
    """T x 29 per-frame character logits."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logits, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != NUM_CHANNELS:
            raise ContractError(f"feature array must be (T, 29), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ContractError("feature sequence must contain at least one frame")
        if not np.all(np.isfinite(arr)):
            raise ContractError("feature values must be finite")
        self.logits = arr

    @property
    def num_frames(self) -> int:
        return self.logits.shape[0]


@dataclass
class FeatureWindowSequence:
    """T x 6 x 29 sliding windows over a feature sequence."""

    windows: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.windows, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[1] != WINDOW or arr.shape[2] != NUM_CHANNELS:
            raise ContractError(f"window array must be (T, 6, 29), got {arr.shape}")
        self.windows = arr

    @property
    def num_frames(self) -> int:
        return self.windows.shape[0]


def window_features(sequence: AudioFeatureSequence) -> FeatureWindowSequence:
    """Slide a 6-frame window over the sequence, replicate-padded at the edges.

    Window t stacks padded frames t-2 .. t+3, so the windowed sequence keeps
    one entry per original frame.
    """
    logits = sequence.logits
    padded = np.concatenate(
        [
            np.repeat(logits[:1], WINDOW_BACK, axis=0),
            logits,
            np.repeat(logits[-1:], WINDOW_FWD, axis=0),
        ],
        axis=0,
    )
    t = logits.shape[0]
    windows = np.stack([padded[i : i + WINDOW] for i in range(t)], axis=0)
    return FeatureWindowSequence(windows)


def save_features(path: str | Path, sequence: AudioFeatureSequence) -> None:
    logits = np.ascontiguousarray(sequence.logits, dtype="<f4")
    header = MAGIC + struct.pack("<II", logits.shape[0], logits.shape[1])
    Path(path).write_bytes(header + logits.tobytes())


def load_features(path: str | Path) -> AudioFeatureSequence:
    """Parse a feature container, reporting the byte offset of any defect."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise FeatureFormatError("bad magic, expected AF01", offset=0)
    if len(raw) < 12:
        raise FeatureFormatError("truncated header", offset=len(raw))
    t, c = struct.unpack("<II", raw[4:12])
    if t < 1:
        raise FeatureFormatError("frame count must be positive", offset=4)
    if c != NUM_CHANNELS:
        raise FeatureFormatError(f"channel count must be 29, got {c}", offset=8)
    expected = 12 + 4 * t * c
    if len(raw) != expected:
        raise FeatureFormatError(
            f"body has {len(raw) - 12} bytes, expected {expected - 12}",
            offset=min(len(raw), expected),
        )
    body = np.frombuffer(raw, dtype="<f4", offset=12).reshape(t, c)
    return AudioFeatureSequence(body.copy())


class FeatureExtractor(Protocol):
    """Anything that turns an audio file into per-frame logits."""

    def extract(self, path: str | Path) -> AudioFeatureSequence: ...


class SyntheticFeatureExtractor:
    """Deterministic stand-in for a real speech model.

    Emits seeded band-limited noise: white noise over T frames smoothed with a
    short moving-average kernel along time, so neighboring frames correlate
    like real speech features do. The audio path argument is ignored; length
    and seed come from the constructor.
    """

    def __init__(self, num_frames: int, seed: int = 0, smooth: int = 5):
        if num_frames < 1:
            raise ContractError("num_frames must be positive")
        self.num_frames = num_frames
        self.seed = seed
        self.smooth = max(1, smooth)

    def extract(self, path: str | Path | None = None) -> AudioFeatureSequence:
        rng = np.random.default_rng(self.seed)
        pad = self.smooth - 1
        noise = rng.standard_normal((self.num_frames + pad, NUM_CHANNELS))
        kernel = np.ones(self.smooth) / self.smooth
        smoothed = np.stack(
            [np.convolve(noise[:, c], kernel, mode="valid") for c in range(NUM_CHANNELS)],
            axis=1,
        )
        return AudioFeatureSequence(smoothed.astype(np.float32))
