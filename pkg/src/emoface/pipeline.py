"""End-to-end orchestration: preprocessing, training, animation, evaluation.

The animation path runs fixed stages in order: load, background replacement,
optional one-shot adaptation, landmark inference (with blinks and
retargeting), per-frame texture generation, background restoration, and
frame writing. Any failure is re-raised as a PipelineStageError tagged with
the stage it happened in, so callers can tell a bad checkpoint from a bad
audio file.
"""

from __future__ import annotations

import random
import warnings
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import torch

from .adaptation import (
    AdaptationConfig,
    load_mask,
    one_shot_finetune,
    replace_background,
    restore_background,
)
from .audio import AudioFeatureSequence, load_features
from .checkpoint import (
    load_landmark_model,
    load_texture_model,
    save_landmark_model,
    save_texture_model,
)
from .config import PipelineConfig
from .data import (
    DatasetIndex,
    LandmarkClip,
    index_dataset,
    landmark_clip_batch,
)
from .errors import (
    ContractError,
    DatasetError,
    EmofaceError,
    PipelineStageError,
)
from .geometry import (
    BlinkParams,
    LandmarkSet,
    add_blinks,
    align_to_canonical,
    build_face_graph,
    canonical_template,
    load_landmark_file,
    save_landmark_file,
    save_template,
)
from .landmark_gen import (
    EmotionVector,
    GLConfig,
    GLModel,
    GraphDiscriminator,
    LandmarkLossReport,
    infer_landmark_sequence,
    train_landmark_step,
)
from .metrics import (
    EnergySyncScorer,
    MarkerEmotionClassifier,
    MetricReport,
    PixelStatEmbedder,
    face_landmark_distance,
    frame_metrics,
    mouth_landmark_distance,
    psnr,
    scored_metrics,
)
from .texture_gen import (
    FrameBatch,
    FrameDiscriminator,
    FrameImage,
    GTConfig,
    GTModel,
    TextureSample,
    TextureTrainReport,
    collate_texture_batch,
    generate_frame,
    load_image,
    make_perceptual_extractor,
    save_image,
    train_texture_step,
)


def seed_all(seed: int) -> None:
    """Seed every RNG the pipeline touches."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


@contextmanager
def pipeline_stage(name: str):
    """Re-raise anything from the block as a stage-tagged pipeline error."""
    try:
        yield
    except PipelineStageError:
        raise
    except EmofaceError as exc:
        raise PipelineStageError(name, str(exc)) from exc
    except Exception as exc:
        raise PipelineStageError(name, f"{type(exc).__name__}: {exc}") from exc


# ---------------------------------------------------------------------------
# preprocessing

def preprocess(data_root: str | Path, out_dir: str | Path) -> DatasetIndex:
    """Index a dataset, write the alignment template and canonical landmarks.

    Each clip gets a mirrored `<out>/<subject>/<emotion>/<intensity>/<clip>/
    landmarks_canonical.txt` with every frame aligned to the template by the
    clip's first-frame transform, so relative motion is preserved.
    """
    index = index_dataset(data_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    template = canonical_template()
    save_template(out / "template.txt", template)
    for entry in index.entries:
        sets = entry.load_landmarks()
        _, transform = align_to_canonical(sets[0], template)
        aligned = np.stack([transform.apply(s.points) for s in sets])
        clip_out = out / entry.subject / entry.emotion / entry.intensity / entry.clip
        clip_out.mkdir(parents=True, exist_ok=True)
        save_landmark_file(clip_out / "landmarks_canonical.txt", aligned)
    return index


# ---------------------------------------------------------------------------
# training data preparation

def landmark_clips_from_dataset(index: DatasetIndex) -> list[LandmarkClip]:
    """Canonical-frame training clips: per-clip landmarks normalized by the
    subject's neutral-frame transform so displacements stay comparable."""
    template = canonical_template()
    clips = []
    for entry in index.entries:
        neutral_entry = index.neutral_entry(entry.subject) or entry
        neutral_pixel = neutral_entry.load_landmarks()[0]
        canonical_neutral, transform = align_to_canonical(neutral_pixel, template)
        sets = entry.load_landmarks()
        targets = np.stack([transform.apply(s.points) for s in sets])
        emotion = (
            EmotionVector.neutral()
            if entry.emotion == "neutral"
            else EmotionVector.of(entry.emotion, entry.intensity)
        )
        clips.append(
            LandmarkClip(
                features=entry.load_features(),
                emotion=emotion,
                neutral=canonical_neutral,
                targets=targets,
            )
        )
    return clips


def texture_samples_from_dataset(
    index: DatasetIndex, frame_stride: int = 1
) -> list[TextureSample]:
    """Per-frame animation pairs against each subject's neutral identity frame."""
    samples = []
    for subject in index.subjects():
        entries = index.entries_for(subject)
        neutral_entry = index.neutral_entry(subject) or entries[0]
        identity = load_image(neutral_entry.frame_files[0])
        neutral_lm = neutral_entry.load_landmarks()[0]
        g_in = build_face_graph(neutral_lm.points)
        for entry in entries:
            emotion = (
                EmotionVector.neutral()
                if entry.emotion == "neutral"
                else EmotionVector.of(entry.emotion, entry.intensity)
            )
            sets = entry.load_landmarks()
            for t in range(0, entry.num_frames, frame_stride):
                samples.append(
                    TextureSample(
                        identity=identity,
                        g_in=g_in,
                        g_out=g_in.with_vertices(sets[t].points),
                        emotion=emotion,
                        target=load_image(entry.frame_files[t]),
                    )
                )
    return samples


# ---------------------------------------------------------------------------
# training loops

def train_landmark_model(
    clips: list[LandmarkClip],
    config: PipelineConfig | None = None,
    steps: int | None = None,
    callback=None,
) -> tuple[GLModel, GraphDiscriminator, list[LandmarkLossReport]]:
    """Adversarial landmark-generator training over procedural or dataset clips."""
    cfg = config if config is not None else PipelineConfig()
    if not clips:
        raise ContractError("no training clips")
    seed_all(cfg.seed)
    gl_config = GLConfig(
        feature_dim=cfg.feature_dim, encoder_dims=(64, cfg.feature_dim, cfg.feature_dim)
    )
    model = GLModel(config=gl_config)
    disc = GraphDiscriminator(feature_dim=cfg.feature_dim)
    opt_g = torch.optim.Adam(model.parameters(), lr=cfg.landmark_lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.landmark_lr)

    groups: dict[int, list[LandmarkClip]] = {}
    for clip in clips:
        groups.setdefault(clip.targets.shape[0], []).append(clip)
    group_list = [groups[k] for k in sorted(groups)]

    rng = np.random.default_rng(cfg.seed)
    history = []
    total = steps if steps is not None else cfg.landmark_steps
    for step in range(total):
        group = group_list[int(rng.integers(len(group_list)))]
        size = min(cfg.landmark_batch, len(group))
        chosen = rng.choice(len(group), size=size, replace=False)
        batch = landmark_clip_batch([group[i] for i in chosen])
        report = train_landmark_step(
            model, disc, batch, opt_g, opt_d,
            lambda_ver=cfg.lambda_ver, lambda_gan=cfg.lambda_gan,
        )
        history.append(report)
        if callback is not None:
            callback(step, report)
    model.eval()
    return model, disc, history


def mean_sample_psnr(model: GTModel, batch: FrameBatch) -> float:
    """Reconstruction PSNR of a texture model over a pre-collated batch."""
    with torch.no_grad():
        generated = model(batch.identity, batch.heat_diff, batch.emotion)
    values = [
        psnr(FrameImage.from_tensor(g), FrameImage.from_tensor(t))
        for g, t in zip(generated, batch.target)
    ]
    return float(np.mean(values))


def train_texture_model(
    samples: list[TextureSample],
    config: PipelineConfig | None = None,
    steps: int | None = None,
    early_stop_psnr: float | None = None,
    check_every: int = 25,
    callback=None,
) -> tuple[GTModel, FrameDiscriminator, list[TextureTrainReport]]:
    """Adversarial texture-generator training over animation samples."""
    cfg = config if config is not None else PipelineConfig()
    if not samples:
        raise ContractError("no training samples")
    if samples[0].identity.resolution != cfg.resolution:
        raise ContractError(
            f"sample resolution {samples[0].identity.resolution} does not match "
            f"configured resolution {cfg.resolution}"
        )
    seed_all(cfg.seed)
    gt_config = GTConfig(
        resolution=cfg.resolution,
        heatmap_sigma=cfg.heatmap_sigma,
        channel_scale=cfg.channel_scale,
    )
    model = GTModel(gt_config)
    disc = FrameDiscriminator(gt_config)
    extractor = make_perceptual_extractor(cfg.perceptual_backend, seed=cfg.seed)
    opt_g = torch.optim.Adam(model.parameters(), lr=cfg.texture_lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.texture_lr)

    full = collate_texture_batch(gt_config, samples)
    n = full.identity.shape[0]
    rng = np.random.default_rng(cfg.seed)
    history = []
    total = steps if steps is not None else cfg.texture_steps
    for step in range(total):
        idx = torch.as_tensor(
            rng.choice(n, size=min(cfg.texture_batch, n), replace=False)
        )
        batch = FrameBatch(
            full.identity[idx], full.heat_diff[idx], full.emotion[idx], full.target[idx]
        )
        report = train_texture_step(
            model, disc, batch, opt_g, opt_d, extractor,
            lambda_rec=cfg.lambda_rec, lambda_per=cfg.lambda_per, lambda_adv=cfg.lambda_adv,
        )
        history.append(report)
        if callback is not None:
            callback(step, report)
        if early_stop_psnr is not None and (step + 1) % check_every == 0:
            if mean_sample_psnr(model, full) >= early_stop_psnr:
                break
    model.eval()
    return model, disc, history


def run_landmark_training(
    data_root: str | Path, out_path: str | Path, config: PipelineConfig | None = None
) -> Path:
    index = index_dataset(data_root)
    clips = landmark_clips_from_dataset(index)
    model, _, _ = train_landmark_model(clips, config)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_landmark_model(out_path, model)
    return out_path


def run_texture_training(
    data_root: str | Path, out_path: str | Path, config: PipelineConfig | None = None
) -> Path:
    index = index_dataset(data_root)
    samples = texture_samples_from_dataset(index)
    model, _, _ = train_texture_model(samples, config)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_texture_model(out_path, model)
    return out_path


# ---------------------------------------------------------------------------
# animation

def animate(
    identity: FrameImage | str | Path,
    features: AudioFeatureSequence | str | Path,
    emotion: EmotionVector,
    out_dir: str | Path,
    landmark_model: GLModel | str | Path,
    texture_model: GTModel | str | Path,
    target_landmarks: LandmarkSet | str | Path | None = None,
    mask: np.ndarray | str | Path | None = None,
    background: FrameImage | str | Path | None = None,
    adapt: bool = False,
    seed: int = 0,
    jobs: int = 1,
    blink_params: BlinkParams | None = None,
    adaptation_config: AdaptationConfig | None = None,
    extractor: torch.nn.Module | None = None,
    fps: float = 30.0,
) -> list[Path]:
    """Animate one identity frame from speech features and an emotion vector.

    Writes `%06d.png` frames plus the predicted landmark trajectory to
    `out_dir` and returns the frame paths. `target_landmarks` locates the
    neutral face inside the identity image (one frame, image pixel
    coordinates); when omitted, the identity face is assumed to sit at the
    bundled template position scaled to the image. `jobs` parallelizes
    per-frame texture generation without changing the result.
    """
    if jobs < 1:
        raise ContractError("jobs must be at least 1")

    with pipeline_stage("load"):
        gl = (
            landmark_model
            if isinstance(landmark_model, GLModel)
            else load_landmark_model(landmark_model)
        )
        gt = (
            texture_model
            if isinstance(texture_model, GTModel)
            else load_texture_model(texture_model)
        )
        image = identity if isinstance(identity, FrameImage) else load_image(identity)
        feats = (
            features
            if isinstance(features, AudioFeatureSequence)
            else load_features(features)
        )
        resolution = gt.config.resolution
        if image.resolution != resolution:
            raise ContractError(
                f"identity image is {image.resolution}px but the texture model "
                f"expects {resolution}px"
            )
        template = canonical_template()
        if target_landmarks is None:
            neutral_pixel = LandmarkSet(template.points * resolution)
        elif isinstance(target_landmarks, LandmarkSet):
            neutral_pixel = target_landmarks
        else:
            neutral_pixel = load_landmark_file(target_landmarks)[0]
        face_mask = None
        if mask is not None:
            face_mask = mask if isinstance(mask, np.ndarray) else load_mask(mask)
        bg = None
        if background is not None:
            bg = background if isinstance(background, FrameImage) else load_image(background)

    original = image
    with pipeline_stage("background"):
        if face_mask is not None and bg is not None:
            image = replace_background(image, bg, face_mask)

    with pipeline_stage("adapt"):
        if adapt:
            gt = one_shot_finetune(gt, image, adaptation_config, extractor)

    with pipeline_stage("landmarks"):
        canonical_neutral, transform = align_to_canonical(neutral_pixel, template)
        sequence = infer_landmark_sequence(gl, feats, canonical_neutral, emotion)
        sequence = add_blinks(
            sequence, blink_params if blink_params is not None else BlinkParams(),
            seed=seed, fps=fps,
        )
        back = transform.inverse()
        frame_points = [
            neutral_pixel.points
            + back.apply_to_displacements(s.points - canonical_neutral.points)
            for s in sequence
        ]
        g_in = build_face_graph(neutral_pixel.points)
        g_outs = [g_in.with_vertices(p) for p in frame_points]

    with pipeline_stage("texture"):
        def render(t: int) -> FrameImage:
            return generate_frame(gt, image, g_in, g_outs[t], emotion)

        if jobs == 1:
            frames = [render(t) for t in range(len(g_outs))]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                frames = list(pool.map(render, range(len(g_outs))))

    with pipeline_stage("restore"):
        if face_mask is not None:
            frames = [restore_background(f, original, face_mask) for f in frames]

    with pipeline_stage("write"):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for t, frame in enumerate(frames):
            path = out / f"{t:06d}.png"
            save_image(path, frame)
            paths.append(path)
        save_landmark_file(out / "landmarks.txt", np.stack(frame_points))
    return paths


# ---------------------------------------------------------------------------
# evaluation

def load_frame_dir(path: str | Path) -> list[FrameImage]:
    files = sorted(Path(path).glob("*.png"))
    if not files:
        raise DatasetError(f"no PNG frames under {path}")
    return [load_image(f) for f in files]


def evaluate_directories(
    pred_dir: str | Path,
    gt_dir: str | Path,
    report_path: str | Path | None = None,
    use_stub_scorers: bool = False,
    features: AudioFeatureSequence | str | Path | None = None,
    emotion_label: str | None = None,
) -> MetricReport:
    """Metric battery over two directories of frames (plus landmark files).

    Landmark distances are included when both directories carry a
    `landmarks.txt`; scored metrics (csim, emo_acc, sync_conf) only with
    `use_stub_scorers`, which plugs in the deterministic stand-in scorers.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred = load_frame_dir(pred_dir)
    target = load_frame_dir(gt_dir)
    if len(pred) != len(target):
        raise DatasetError(
            f"frame count mismatch: {len(pred)} generated vs {len(target)} reference"
        )
    mean_psnr, mean_ssim, mean_cpbd, fid_value = frame_metrics(pred, target)
    report = MetricReport(psnr=mean_psnr, ssim=mean_ssim, cpbd=mean_cpbd, fid=fid_value)

    pred_lm_file = pred_dir / "landmarks.txt"
    gt_lm_file = gt_dir / "landmarks.txt"
    if pred_lm_file.exists() and gt_lm_file.exists():
        pred_lm = load_landmark_file(pred_lm_file)
        gt_lm = load_landmark_file(gt_lm_file)
        if len(pred_lm) != len(gt_lm):
            raise DatasetError("landmark trajectory lengths differ")
        report.m_ld, report.m_lvd = mouth_landmark_distance(pred_lm, gt_lm)
        report.f_ld, report.f_lvd = face_landmark_distance(pred_lm, gt_lm)
    else:
        warnings.warn(
            "landmarks.txt missing on one side; landmark distances omitted",
            stacklevel=2,
        )

    if use_stub_scorers:
        feats = None
        if features is not None:
            feats = (
                features
                if isinstance(features, AudioFeatureSequence)
                else load_features(features)
            )
        scored = scored_metrics(
            pred,
            identity=target[0],
            emotion_label=emotion_label,
            features=feats,
            embedder=PixelStatEmbedder(),
            classifier=MarkerEmotionClassifier() if emotion_label is not None else None,
            sync_scorer=EnergySyncScorer() if feats is not None else None,
        )
        report.csim = scored.get("csim")
        report.emo_acc = scored.get("emo_acc")
        report.sync_conf = scored.get("sync_conf")

    if report_path is not None:
        report.write(report_path)
    return report
