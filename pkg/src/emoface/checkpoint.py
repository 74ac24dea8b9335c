"""Versioned model checkpoints.

A checkpoint is a torch archive holding a format version, a kind tag, the
constructor configuration, and the state dict. Loading validates all three
before any weights are touched, and reconstructs the model from the stored
configuration so a checkpoint is self-describing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointFormatError, CheckpointVersionError
from .geometry import FaceGraph, RegionPartition
from .landmark_gen import GLConfig, GLModel
from .texture_gen import GTConfig, GTModel

FORMAT_VERSION = 1

KIND_LANDMARK = "landmark-generator"
KIND_TEXTURE = "texture-generator"


def _write(path: str | Path, kind: str, config: dict, state: dict) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "state": state,
    }
    torch.save(payload, path)


def _read(path: str | Path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointFormatError(f"{path} is not a model checkpoint")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path} has format version {version}, expected {FORMAT_VERSION}"
        )
    for key in ("kind", "config", "state"):
        if key not in payload:
            raise CheckpointFormatError(f"{path} is missing the '{key}' field")
    if expected_kind is not None and payload["kind"] != expected_kind:
        raise CheckpointFormatError(
            f"{path} holds a '{payload['kind']}' model, expected '{expected_kind}'"
        )
    return payload


def save_landmark_model(path: str | Path, model: GLModel) -> None:
    cfg = model.config
    config = {
        "feature_dim": cfg.feature_dim,
        "audio_hidden": cfg.audio_hidden,
        "audio_layers": cfg.audio_layers,
        "encoder_dims": list(cfg.encoder_dims),
        "vertices": torch.from_numpy(model.graph.vertices.copy()),
        "adjacency": torch.from_numpy(model.graph.adjacency.astype(np.uint8)),
        "region_names": list(model.partition.names),
        "regions": [torch.from_numpy(np.asarray(r, dtype=np.int64)) for r in model.partition.regions],
    }
    _write(path, KIND_LANDMARK, config, model.state_dict())


def load_landmark_model(path: str | Path) -> GLModel:
    payload = _read(path, KIND_LANDMARK)
    cfg = payload["config"]
    try:
        graph = FaceGraph.from_adjacency(
            cfg["vertices"].numpy().astype(np.float64),
            cfg["adjacency"].numpy().astype(bool),
        )
        partition = RegionPartition(
            tuple(cfg["region_names"]),
            tuple(r.numpy() for r in cfg["regions"]),
        )
        model = GLModel(
            graph=graph,
            partition=partition,
            config=GLConfig(
                feature_dim=cfg["feature_dim"],
                audio_hidden=cfg["audio_hidden"],
                audio_layers=cfg["audio_layers"],
                encoder_dims=tuple(cfg["encoder_dims"]),
            ),
        )
        model.load_state_dict(payload["state"])
    except (KeyError, TypeError, RuntimeError, ValueError) as exc:
        raise CheckpointFormatError(f"malformed landmark checkpoint: {exc}") from exc
    model.eval()
    return model


def save_texture_model(path: str | Path, model: GTModel) -> None:
    cfg = model.config
    config = {
        "resolution": cfg.resolution,
        "identity_channels": list(cfg.identity_channels),
        "motion_channels": list(cfg.motion_channels),
        "emotion_channels": cfg.emotion_channels,
        "heatmap_sigma": cfg.heatmap_sigma,
        "channel_scale": cfg.channel_scale,
    }
    _write(path, KIND_TEXTURE, config, model.state_dict())


def load_texture_model(path: str | Path) -> GTModel:
    payload = _read(path, KIND_TEXTURE)
    cfg = payload["config"]
    try:
        model = GTModel(
            GTConfig(
                resolution=cfg["resolution"],
                identity_channels=tuple(cfg["identity_channels"]),
                motion_channels=tuple(cfg["motion_channels"]),
                emotion_channels=cfg["emotion_channels"],
                heatmap_sigma=cfg["heatmap_sigma"],
                channel_scale=cfg["channel_scale"],
            )
        )
        model.load_state_dict(payload["state"])
    except (KeyError, TypeError, RuntimeError, ValueError) as exc:
        raise CheckpointFormatError(f"malformed texture checkpoint: {exc}") from exc
    model.eval()
    return model
