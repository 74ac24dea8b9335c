"""Emotional talking-face generation from a single image and speech features.

Two trainable stages: a graph network over facial landmarks that turns
per-frame speech features and an explicit emotion vector into landmark
displacements, and a flow-and-occlusion guided texture generator that
animates one neutral photograph along the predicted landmarks. One-shot
adaptation personalizes a trained texture model to an unseen face from a
single frame.
"""

from .adaptation import (
    AdaptationConfig,
    AugmentParams,
    augment,
    one_shot_finetune,
    replace_background,
    restore_background,
)
from .audio import (
    AudioFeatureSequence,
    FeatureWindowSequence,
    SyntheticFeatureExtractor,
    load_features,
    save_features,
    window_features,
)
from .checkpoint import (
    load_landmark_model,
    load_texture_model,
    save_landmark_model,
    save_texture_model,
)
from .config import PipelineConfig, load_config, parse_config, save_config, serialize_config
from .data import (
    DatasetIndex,
    SyntheticDatasetSpec,
    index_dataset,
    synthetic_landmark_clips,
    synthetic_texture_samples,
    write_synthetic_dataset,
)
from .errors import (
    BackendError,
    CheckpointError,
    CheckpointFormatError,
    CheckpointVersionError,
    ConfigError,
    ContractError,
    DatasetError,
    DegenerateGeometryError,
    EmofaceError,
    FeatureFormatError,
    PipelineStageError,
    TrainingDivergedError,
)
from .geometry import (
    BlinkParams,
    FaceGraph,
    LandmarkSet,
    SimilarityTransform,
    add_blinks,
    align_to_canonical,
    build_face_graph,
    canonical_template,
    delaunay_triangulate,
    heatmap_difference,
    procrustes_align,
    render_heatmaps,
    retarget_displacements,
)
from .landmark_gen import (
    EmotionVector,
    GLConfig,
    GLModel,
    GraphConv,
    GraphDiscriminator,
    infer_landmark_sequence,
    landmark_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    train_landmark_step,
    vertex_loss,
)
from .metrics import (
    MetricReport,
    PixelStatEmbedder,
    cpbd,
    fid,
    frechet_distance,
    landmark_distance,
    psnr,
    ssim,
)
from .pipeline import (
    animate,
    evaluate_directories,
    preprocess,
    seed_all,
    train_landmark_model,
    train_texture_model,
)
from .texture_gen import (
    FrameDiscriminator,
    FrameImage,
    GTConfig,
    GTModel,
    MotionField,
    RandomConvPyramid,
    generate_frame,
    load_image,
    make_perceptual_extractor,
    save_image,
    warp,
)

__version__ = "0.1.0"
