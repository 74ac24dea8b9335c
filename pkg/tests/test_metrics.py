"""Metric oracles.

PSNR and landmark distances get exact closed forms. SSIM gets the
constant-image closed form, which holds for any normalized window: a
constant image has window mean equal to the constant and zero variance
everywhere, so the score reduces to (2 m1 m2 + C1) / (m1^2 + m2^2 + C1).
The Frechet distance gets the translation oracle: shifting a point cloud
leaves its covariance unchanged, so the distance equals the squared shift.
"""

import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from emoface.audio import AudioFeatureSequence
from emoface.data import EMOTION_LABELS, render_face, synthetic_neutral_landmarks
from emoface.errors import ContractError
from emoface.geometry import MOUTH_INDICES, LandmarkSet, canonical_template
from emoface.metrics import (
    EnergySyncScorer,
    MarkerEmotionClassifier,
    MetricReport,
    PixelStatEmbedder,
    cosine_similarity_score,
    cpbd,
    face_landmark_distance,
    fid,
    frame_metrics,
    frechet_distance,
    landmark_distance,
    mouth_landmark_distance,
    psnr,
    scored_metrics,
    ssim,
)
from emoface.texture_gen import FrameImage


def const_frame(value: float, resolution: int = 32) -> FrameImage:
    return FrameImage(np.full((3, resolution, resolution), value, dtype=np.float32))


def random_frame(rng: np.random.Generator, resolution: int = 32) -> FrameImage:
    return FrameImage(rng.uniform(-1, 1, (3, resolution, resolution)).astype(np.float32))


# ---------------------------------------------------------------------------
# PSNR

class TestPsnr:
    def test_identity_hits_cap(self, rng):
        f = random_frame(rng)
        assert psnr(f, f) == 100.0

    def test_full_range_error_is_zero_db(self):
        # unit-domain difference of exactly 1 gives mse 1, hence 0 dB
        assert psnr(const_frame(-1.0), const_frame(1.0)) == pytest.approx(0.0, abs=1e-12)

    def test_half_range_closed_form(self):
        # unit-domain difference 0.5 -> mse 0.25 -> 10 log10(4)
        expected = 10.0 * math.log10(4.0)
        assert psnr(const_frame(-1.0), const_frame(0.0)) == pytest.approx(expected, rel=1e-12)

    def test_symmetric(self, rng):
        a, b = random_frame(rng), random_frame(rng)
        assert psnr(a, b) == psnr(b, a)

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ContractError):
            psnr(random_frame(rng, 32), random_frame(rng, 16))


# ---------------------------------------------------------------------------
# SSIM

class TestSsim:
    def test_identity(self, rng):
        assert ssim(random_frame(rng), random_frame(rng)) < 1.0
        f = random_frame(rng)
        assert ssim(f, f) == pytest.approx(1.0, abs=1e-12)

    def test_constant_image_closed_form(self):
        # pixels 0.0 and 0.5 map to unit means 0.5 and 0.75
        m1, m2 = 0.5, 0.75
        c1 = (0.01 * 1.0) ** 2
        expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1)
        assert ssim(const_frame(0.0), const_frame(0.5)) == pytest.approx(expected, rel=1e-9)

    def test_symmetric(self, rng):
        a, b = random_frame(rng), random_frame(rng)
        assert ssim(a, b) == pytest.approx(ssim(b, a), rel=1e-12)

    def test_anticorrelated_checkerboard_is_negative(self):
        yy, xx = np.mgrid[0:32, 0:32]
        board = (((yy + xx) % 2) * 1.2 - 0.6).astype(np.float32)
        a = FrameImage(np.broadcast_to(board, (3, 32, 32)).copy())
        b = FrameImage((-board).reshape(1, 32, 32).repeat(3, axis=0))
        # identical means and variances, covariance equal to -variance
        assert ssim(a, b) < 0.0

    def test_blur_lowers_similarity(self, rng):
        sharp = random_frame(rng)
        blurred = FrameImage(
            gaussian_filter(sharp.pixels, sigma=(0, 1.5, 1.5)).astype(np.float32)
        )
        assert ssim(sharp, blurred) < ssim(sharp, sharp)

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ContractError):
            ssim(random_frame(rng, 32), random_frame(rng, 16))


# ---------------------------------------------------------------------------
# CPBD

class TestCpbd:
    def test_constant_image_has_no_edges(self):
        assert cpbd(const_frame(0.3)) == 0.0

    def test_bounded(self, rng):
        face = render_face(canonical_template(), 64)
        assert 0.0 <= cpbd(face) <= 1.0
        assert 0.0 <= cpbd(random_frame(rng, 64)) <= 1.0

    def test_sharp_face_beats_blurred(self):
        face = render_face(canonical_template(), 128)
        blurred = FrameImage(
            np.clip(gaussian_filter(face.pixels, sigma=(0, 3.0, 3.0)), -1, 1).astype(np.float32)
        )
        assert cpbd(face) > cpbd(blurred)


# ---------------------------------------------------------------------------
# Frechet distance

class TestFrechet:
    def test_translation_oracle(self, rng):
        # identical covariances cancel, leaving exactly the squared shift
        x = rng.normal(size=(200, 8))
        mu = np.array([2.0, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0, 0.0])
        fd = frechet_distance(x, x + mu)
        assert fd == pytest.approx(float((mu**2).sum()), rel=1e-6)

    def test_self_distance_vanishes(self, rng):
        x = rng.normal(size=(100, 8))
        assert frechet_distance(x, x) < 1e-6

    def test_symmetric(self, rng):
        a = rng.normal(size=(60, 5))
        b = rng.normal(size=(80, 5), loc=0.3)
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-12)

    def test_nonnegative(self, rng):
        for _ in range(5):
            a = rng.normal(size=(30, 4))
            b = rng.normal(size=(30, 4))
            assert frechet_distance(a, b) >= 0.0

    def test_validation(self, rng):
        with pytest.raises(ContractError):
            frechet_distance(rng.normal(size=(10, 4)), rng.normal(size=(10, 5)))
        with pytest.raises(ContractError):
            frechet_distance(rng.normal(size=(1, 4)), rng.normal(size=(10, 4)))
        with pytest.raises(ContractError):
            frechet_distance(rng.normal(size=10), rng.normal(size=10))

    def test_fid_over_frames(self, rng):
        frames_a = [random_frame(rng) for _ in range(6)]
        frames_b = [random_frame(rng) for _ in range(6)]
        assert fid(frames_a, frames_a) < 1e-6
        assert fid(frames_a, frames_b) >= 0.0


class TestPixelStatEmbedder:
    def test_dim_and_constant_value(self):
        emb = PixelStatEmbedder().embed(const_frame(0.0))
        assert emb.shape == (64,)
        # gray of unit 0.5 everywhere: every block mean is 0.5
        assert np.allclose(emb, 0.5, atol=1e-7)

    def test_spatial_sensitivity(self, rng):
        a = PixelStatEmbedder().embed(random_frame(rng))
        b = PixelStatEmbedder().embed(random_frame(rng))
        assert not np.allclose(a, b)


# ---------------------------------------------------------------------------
# landmark distances

def annotate(points: np.ndarray) -> LandmarkSet:
    return LandmarkSet(points.astype(np.float64))


class TestLandmarkDistance:
    def base_sequence(self, rng, frames: int = 6) -> np.ndarray:
        base = canonical_template().points * 100.0
        seq = np.stack([base + rng.normal(scale=0.5, size=base.shape) for _ in range(frames)])
        return seq

    def test_constant_offset_closed_form(self, rng):
        target = self.base_sequence(rng)
        pred = target + np.array([3.0, 4.0])
        ld, lvd = landmark_distance(pred, target)
        assert ld == pytest.approx(5.0, abs=1e-12)
        # constant offsets cancel in the velocity term up to float rounding
        assert lvd == pytest.approx(0.0, abs=1e-12)

    def test_velocity_ramp_closed_form(self, rng):
        frames = 6
        target = self.base_sequence(rng, frames)
        drift = np.zeros_like(target)
        drift[:, :, 0] = 2.0 * np.arange(frames)[:, None]
        pred = target + drift
        ld, lvd = landmark_distance(pred, target)
        # per-frame displacement 2t: mean over t = 0..5 is 5; velocity gap
        # is the constant (2, 0)
        assert ld == pytest.approx(frames - 1.0, rel=1e-12)
        assert lvd == pytest.approx(2.0, rel=1e-12)

    def test_index_subsets(self, rng):
        target = self.base_sequence(rng)
        pred = target.copy()
        pred[:, MOUTH_INDICES, 1] += 1.0
        mouth_ld, _ = mouth_landmark_distance(pred, target)
        full_ld, _ = face_landmark_distance(pred, target)
        assert mouth_ld == pytest.approx(1.0, abs=1e-12)
        assert full_ld == pytest.approx(len(MOUTH_INDICES) / 68.0, rel=1e-12)

    def test_single_frame_has_zero_velocity_term(self, rng):
        target = self.base_sequence(rng, frames=1)
        ld, lvd = landmark_distance(target + 1.0, target)
        assert ld == pytest.approx(math.sqrt(2.0), rel=1e-12)
        assert lvd == 0.0

    def test_landmark_set_and_array_inputs_agree(self, rng):
        target = self.base_sequence(rng)
        pred = target + 0.25
        as_sets = landmark_distance(
            [annotate(p) for p in pred], [annotate(t) for t in target]
        )
        as_arrays = landmark_distance(pred, target)
        assert as_sets == as_arrays

    def test_validation(self, rng):
        a = self.base_sequence(rng, 3)
        with pytest.raises(ContractError):
            landmark_distance(a, a[:2])
        with pytest.raises(ContractError):
            landmark_distance(a[:, :10], a[:, :10])


# ---------------------------------------------------------------------------
# scorers

class TestCosineSimilarity:
    def test_identity_frames_score_one(self, rng):
        f = random_frame(rng)
        score = cosine_similarity_score(PixelStatEmbedder(), [f, f], f)
        assert score == pytest.approx(1.0, abs=1e-12)

    def test_zero_embedding_scores_zero(self):
        # pixels of -1 map to unit 0, so every block mean is zero
        black = const_frame(-1.0)
        assert cosine_similarity_score(PixelStatEmbedder(), [black], black) == 0.0

    def test_range(self, rng):
        frames = [random_frame(rng) for _ in range(4)]
        score = cosine_similarity_score(PixelStatEmbedder(), frames, random_frame(rng))
        assert -1.0 <= score <= 1.0


class TestMarkerEmotionClassifier:
    def test_round_trip_every_label(self):
        template = canonical_template()
        clf = MarkerEmotionClassifier()
        for label in EMOTION_LABELS:
            frame = render_face(template, 64, emotion_label=label)
            assert clf.classify([frame]) == label

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            MarkerEmotionClassifier().classify([])


class TestEnergySyncScorer:
    def features_from_values(self, values) -> AudioFeatureSequence:
        logits = np.tile(np.asarray(values, dtype=np.float32)[:, None], (1, 29))
        return AudioFeatureSequence(logits)

    def frames_from_values(self, values):
        return [const_frame(float(np.clip(v, -1, 1))) for v in values]

    def test_perfectly_tracking_signals_score_one(self):
        values = [0.0, 0.1, 0.3, 0.6, 1.0]
        frames = self.frames_from_values(values)
        features = self.features_from_values(values)
        score = EnergySyncScorer().score(frames, features)
        assert score == pytest.approx(1.0, abs=1e-9)

    def test_short_sequences_score_zero(self):
        values = [0.0, 0.5]
        assert (
            EnergySyncScorer().score(
                self.frames_from_values(values), self.features_from_values(values)
            )
            == 0.0
        )

    def test_static_video_scores_zero(self):
        frames = [const_frame(0.2)] * 5
        features = self.features_from_values([0.0, 0.3, 0.1, 0.7, 0.2])
        assert EnergySyncScorer().score(frames, features) == 0.0

    def test_count_mismatch_rejected(self):
        with pytest.raises(ContractError):
            EnergySyncScorer().score(
                self.frames_from_values([0, 0.1, 0.2]),
                self.features_from_values([0, 0.1, 0.2, 0.3]),
            )

    def test_range_and_determinism(self, rng):
        frames = [random_frame(rng, 16) for _ in range(8)]
        features = AudioFeatureSequence(rng.normal(size=(8, 29)).astype(np.float32))
        a = EnergySyncScorer().score(frames, features)
        b = EnergySyncScorer().score(frames, features)
        assert a == b
        assert 0.0 <= a <= 1.0


# ---------------------------------------------------------------------------
# report plumbing

class TestMetricReport:
    def test_to_dict_omits_unset(self):
        report = MetricReport(psnr=30.0, ssim=0.9, cpbd=0.5, fid=1.0)
        assert report.to_dict() == {"psnr": 30.0, "ssim": 0.9, "cpbd": 0.5, "fid": 1.0}

    def test_round_trip(self, tmp_path):
        report = MetricReport(
            psnr=28.5, ssim=0.87, cpbd=0.42, fid=3.2,
            m_ld=1.1, m_lvd=0.2, f_ld=0.9, f_lvd=0.15,
            csim=0.99, emo_acc=100.0, sync_conf=0.8,
        )
        path = tmp_path / "report.json"
        report.write(path)
        assert MetricReport.read(path) == report

    def test_partial_round_trip(self, tmp_path):
        report = MetricReport(psnr=30.0, ssim=0.9, cpbd=0.5, fid=1.0, f_ld=2.0)
        path = tmp_path / "report.json"
        report.write(path)
        loaded = MetricReport.read(path)
        assert loaded == report
        assert loaded.m_ld is None


class TestFrameMetrics:
    def test_identical_sequences(self, rng):
        frames = [random_frame(rng) for _ in range(4)]
        mean_psnr, mean_ssim, mean_cpbd, fd = frame_metrics(frames, frames)
        assert mean_psnr == 100.0
        assert mean_ssim == pytest.approx(1.0, abs=1e-9)
        assert 0.0 <= mean_cpbd <= 1.0
        assert fd < 1e-6

    def test_validation(self, rng):
        frames = [random_frame(rng) for _ in range(3)]
        with pytest.raises(ContractError):
            frame_metrics(frames, frames[:2])
        with pytest.raises(ContractError):
            frame_metrics([], [])


class TestScoredMetrics:
    def test_unconfigured_scorers_warn_and_omit(self, rng):
        frames = [random_frame(rng) for _ in range(3)]
        with pytest.warns(UserWarning):
            out = scored_metrics(frames)
        assert out == {}

    def test_fully_configured(self):
        template = canonical_template()
        frames = [render_face(template, 64, emotion_label="happy") for _ in range(4)]
        rng = np.random.default_rng(0)
        features = AudioFeatureSequence(rng.normal(size=(4, 29)).astype(np.float32))
        out = scored_metrics(
            frames,
            identity=frames[0],
            emotion_label="happy",
            features=features,
            embedder=PixelStatEmbedder(),
            classifier=MarkerEmotionClassifier(),
            sync_scorer=EnergySyncScorer(),
        )
        assert set(out) == {"csim", "emo_acc", "sync_conf"}
        assert out["emo_acc"] == 100.0
        assert out["csim"] == pytest.approx(1.0, abs=1e-9)

    def test_wrong_label_scores_zero(self):
        template = canonical_template()
        frames = [render_face(template, 64, emotion_label="sad")]
        with pytest.warns(UserWarning):
            out = scored_metrics(
                frames, emotion_label="happy", classifier=MarkerEmotionClassifier()
            )
        assert out["emo_acc"] == 0.0
