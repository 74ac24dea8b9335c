"""Facial landmark geometry: graphs, alignment, heatmaps, blinks.

All operations use the 68-point iBUG landmark convention with inter-coordinate
order (x, y), y growing downward. Canonical-frame coordinates live in the unit
square. Everything here is plain numpy; torch enters only in the model modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay as _ScipyDelaunay
from scipy.spatial import QhullError

from .errors import ContractError, DegenerateGeometryError

NUM_LANDMARKS = 68

# Index ranges of the 8 facial regions (iBUG ordering).
REGION_INDICES: dict[str, np.ndarray] = {
    "jaw": np.arange(0, 17),
    "left_brow": np.arange(17, 22),
    "right_brow": np.arange(22, 27),
    "nose": np.arange(27, 36),
    "left_eye": np.arange(36, 42),
    "right_eye": np.arange(42, 48),
    "outer_lip": np.arange(48, 60),
    "inner_lip": np.arange(60, 68),
}

MOUTH_INDICES = np.arange(48, 68)
FACE_INDICES = np.arange(0, 68)

# Upper-lid vertex paired with the lower-lid vertex it closes onto.
EYELID_PAIRS = ((37, 41), (38, 40), (43, 47), (44, 46))


def _as_points(landmarks) -> np.ndarray:
    if isinstance(landmarks, LandmarkSet):
        return landmarks.points
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ContractError(f"expected (N, 2) point array, got {pts.shape}")
    return pts


@dataclass
class LandmarkSet:
    """68 facial landmarks. ``canonical`` marks unit-square canonical-frame sets."""

    points: np.ndarray
    canonical: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise ContractError(f"landmark array must be (68, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ContractError("landmark coordinates must be finite")
        if self.canonical and (pts.min() < -1e-9 or pts.max() > 1 + 1e-9):
            raise ContractError("canonical landmarks must lie within the unit square")
        self.points = pts

    def copy(self) -> "LandmarkSet":
        return LandmarkSet(self.points.copy(), self.canonical)

    def with_points(self, points: np.ndarray) -> "LandmarkSet":
        return LandmarkSet(points, self.canonical)


@dataclass(frozen=True)
class RegionPartition:
    """Disjoint cover of the 68 vertices by K facial regions."""

    names: tuple[str, ...]
    regions: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.names) != len(self.regions):
            raise ContractError("names and regions must pair up")
        flat = np.concatenate(self.regions)
        if len(flat) != NUM_LANDMARKS or len(np.unique(flat)) != NUM_LANDMARKS:
            raise ContractError("regions must disjointly cover all 68 vertices")

    @property
    def num_regions(self) -> int:
        return len(self.regions)


def default_partition() -> RegionPartition:
    return RegionPartition(tuple(REGION_INDICES), tuple(REGION_INDICES.values()))


# ---------------------------------------------------------------------------
# canonical template

def canonical_template() -> LandmarkSet:
    """Bundled synthetic mean face: symmetric, unit-square, general position.

    Jaw and lips are ellipse arcs, eyes small ellipses, brows arched segments.
    Deterministic by construction; serves as the alignment target when no
    dataset-derived template is supplied.
    """
    pts = np.zeros((NUM_LANDMARKS, 2))

    jaw_angles = np.deg2rad(np.linspace(180.0, 360.0, 17))
    pts[0:17, 0] = 0.5 + 0.32 * np.cos(jaw_angles)
    pts[0:17, 1] = 0.42 - 0.40 * np.sin(jaw_angles)

    brow_dx = np.array([-0.10, -0.05, 0.0, 0.05, 0.10])
    brow_dy = np.array([0.023, 0.006, 0.0, 0.006, 0.023])
    pts[17:22, 0] = 0.345 + brow_dx
    pts[17:22, 1] = 0.312 + brow_dy
    pts[22:27, 0] = 0.655 + brow_dx
    pts[22:27, 1] = 0.312 + brow_dy

    pts[27:31, 0] = 0.5
    pts[27:31, 1] = np.array([0.400, 0.460, 0.520, 0.575])
    pts[31:36, 0] = np.array([0.440, 0.470, 0.500, 0.530, 0.560])
    pts[31:36, 1] = np.array([0.625, 0.635, 0.640, 0.635, 0.625])

    eye_angles = np.deg2rad(np.array([180.0, 120.0, 60.0, 0.0, -60.0, -120.0]))
    for start, cx in ((36, 0.345), (42, 0.655)):
        pts[start : start + 6, 0] = cx + 0.055 * np.cos(eye_angles)
        pts[start : start + 6, 1] = 0.400 - 0.025 * np.sin(eye_angles)

    outer_angles = np.deg2rad(np.array(
        [180.0, 150.0, 120.0, 90.0, 60.0, 30.0, 0.0,
         -30.0, -60.0, -90.0, -120.0, -150.0]))
    pts[48:60, 0] = 0.5 + 0.115 * np.cos(outer_angles)
    pts[48:60, 1] = 0.695 - 0.048 * np.sin(outer_angles)

    inner_angles = np.deg2rad(np.array(
        [180.0, 135.0, 90.0, 45.0, 0.0, -45.0, -90.0, -135.0]))
    pts[60:68, 0] = 0.5 + 0.078 * np.cos(inner_angles)
    pts[60:68, 1] = 0.695 - 0.018 * np.sin(inner_angles)

    return LandmarkSet(pts, canonical=True)


# ---------------------------------------------------------------------------
# triangulation and graphs

def _check_not_degenerate(points: np.ndarray) -> None:
    if len(points) < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {len(points)}")
    if len(np.unique(points, axis=0)) != len(points):
        raise DegenerateGeometryError("duplicate points in triangulation input")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateGeometryError("points are collinear")


def delaunay_triangles(points) -> np.ndarray:
    """Delaunay triangulation, returned as an (M, 3) array of vertex indices.

    Each triangle's circumcircle contains no other input point in its strict
    interior. Ties from cocircular inputs are resolved deterministically by
    the underlying Qhull run, so equal inputs give equal outputs.
    """
    pts = _as_points(points)
    _check_not_degenerate(pts)
    try:
        tri = _ScipyDelaunay(pts)
    except QhullError as exc:  # pragma: no cover - pre-checks catch the common cases
        raise DegenerateGeometryError(f"triangulation failed: {exc}") from exc
    simplices = np.sort(np.asarray(tri.simplices, dtype=np.int64), axis=1)
    order = np.lexsort((simplices[:, 2], simplices[:, 1], simplices[:, 0]))
    return simplices[order]


def delaunay_triangulate(points) -> frozenset[tuple[int, int]]:
    """Edge set of the Delaunay triangulation as sorted index pairs."""
    simplices = delaunay_triangles(points)
    edges = set()
    for a, b, c in simplices:
        edges.add((int(a), int(b)))
        edges.add((int(a), int(c)))
        edges.add((int(b), int(c)))
    return frozenset(edges)


@dataclass
class FaceGraph:
    """Vertices plus the symmetric, zero-diagonal adjacency of their edges."""

    vertices: np.ndarray
    edges: frozenset[tuple[int, int]]
    adjacency: np.ndarray

    def __post_init__(self):
        self.vertices = _as_points(self.vertices)
        n = len(self.vertices)
        adj = np.asarray(self.adjacency)
        if adj.shape != (n, n):
            raise ContractError(f"adjacency must be ({n}, {n}), got {adj.shape}")
        if np.any(adj != adj.T):
            raise ContractError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ContractError("adjacency diagonal must be zero")
        rebuilt = np.zeros_like(adj)
        for a, b in self.edges:
            rebuilt[a, b] = rebuilt[b, a] = 1
        if np.any(rebuilt != adj):
            raise ContractError("edge set and adjacency disagree")
        self.adjacency = adj.astype(np.uint8)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def with_vertices(self, points) -> "FaceGraph":
        """Same topology over displaced vertices."""
        pts = _as_points(points)
        if pts.shape != self.vertices.shape:
            raise ContractError("replacement vertices must match in count")
        return FaceGraph(pts, self.edges, self.adjacency.copy())

    @classmethod
    def from_adjacency(cls, vertices, adjacency) -> "FaceGraph":
        """Rebuild the edge set from an adjacency matrix."""
        adj = np.asarray(adjacency).astype(np.uint8)
        rows, cols = np.nonzero(np.triu(adj, k=1))
        edges = frozenset((int(a), int(b)) for a, b in zip(rows, cols))
        return cls(_as_points(vertices), edges, adj)


def build_face_graph(landmarks) -> FaceGraph:
    """Triangulate the landmarks and package vertices, edges and adjacency."""
    pts = _as_points(landmarks)
    edges = delaunay_triangulate(pts)
    adj = np.zeros((len(pts), len(pts)), dtype=np.uint8)
    for a, b in edges:
        adj[a, b] = adj[b, a] = 1
    return FaceGraph(pts, edges, adj)


def region_adjacency(graph: FaceGraph, partition: RegionPartition) -> np.ndarray:
    """K x K adjacency of the pooled graph: regions joined by any cross edge."""
    k = partition.num_regions
    label = np.empty(graph.num_vertices, dtype=np.int64)
    for r, idx in enumerate(partition.regions):
        label[idx] = r
    adj = np.zeros((k, k), dtype=np.uint8)
    for a, b in graph.edges:
        ra, rb = label[a], label[b]
        if ra != rb:
            adj[ra, rb] = adj[rb, ra] = 1
    return adj


# ---------------------------------------------------------------------------
# similarity alignment

@dataclass(frozen=True)
class SimilarityTransform:
    """y = scale * x @ rotation.T + translation, with det(rotation) = +1."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        pts = _as_points(points)
        return self.scale * pts @ self.rotation.T + self.translation

    def apply_to_displacements(self, disp: np.ndarray) -> np.ndarray:
        """Linear part only; displacement vectors carry no translation."""
        return self.scale * np.asarray(disp, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        return SimilarityTransform(
            scale=inv_scale,
            rotation=self.rotation.T,
            translation=-inv_scale * self.translation @ self.rotation,
        )


def procrustes_align(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity mapping source points onto target points.

    Reflections are never returned; a mirror-related pair comes back as the
    best proper rotation. Zero-variance source raises DegenerateGeometryError.
    """
    src = _as_points(source)
    dst = _as_points(target)
    if src.shape != dst.shape:
        raise ContractError("source and target must have equal shapes")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    var_s = (src_c ** 2).sum() / len(src)
    if var_s <= 0.0:
        raise DegenerateGeometryError("source points have zero variance")
    cov = dst_c.T @ src_c / len(src)
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[-1] = -1.0
    rotation = u @ np.diag(s) @ vt
    scale = float((d * s).sum() / var_s)
    translation = mu_d - scale * mu_s @ rotation.T
    return SimilarityTransform(scale, rotation, translation)


def align_to_canonical(
    landmarks: LandmarkSet, template: LandmarkSet | None = None
) -> tuple[LandmarkSet, SimilarityTransform]:
    """Map landmarks into the canonical frame of the template.

    Returns the transformed landmarks (flagged canonical) and the transform
    that produced them; ``transform.apply(landmarks.points)`` reproduces the
    returned coordinates.
    """
    tpl = template if template is not None else canonical_template()
    transform = procrustes_align(landmarks.points, tpl.points)
    aligned = transform.apply(landmarks.points)
    return LandmarkSet(aligned, canonical=True), transform


def retarget_displacements(
    displacements: np.ndarray,
    target_neutral: LandmarkSet,
    template: LandmarkSet | None = None,
) -> LandmarkSet:
    """Carry canonical-frame displacements onto a target-frame neutral face.

    The displacement vectors pass through the inverse of the target's
    canonical alignment (linear part only) and are added to the neutral
    landmarks. Zero displacement returns the neutral face unchanged.
    """
    disp = np.asarray(displacements, dtype=np.float64)
    if disp.shape != (NUM_LANDMARKS, 2):
        raise ContractError(f"displacements must be (68, 2), got {disp.shape}")
    _, to_canonical = align_to_canonical(target_neutral, template)
    back = to_canonical.inverse()
    moved = target_neutral.points + back.apply_to_displacements(disp)
    return LandmarkSet(moved, canonical=False)


# ---------------------------------------------------------------------------
# heatmaps

@dataclass
class HeatmapStack:
    """69 channels: one Gaussian bump per landmark plus a background channel."""

    channels: np.ndarray
    sigma: float

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float32)
        if ch.ndim != 3 or ch.shape[0] != NUM_LANDMARKS + 1:
            raise ContractError(f"heatmap stack must be (69, H, W), got {ch.shape}")
        if self.sigma <= 0:
            raise ContractError("sigma must be positive")
        self.channels = ch


def render_heatmaps(landmarks, height: int, width: int, sigma: float) -> HeatmapStack:
    """Peak-normalized Gaussian heatmaps on an integer pixel grid.

    Landmark coordinates are interpreted in pixels of the target grid. Each
    landmark channel evaluates exp(-d^2 / (2 sigma^2)) against pixel centers,
    so the value at the exact vertex position is 1. Channel 68 is the
    background: 1 minus the pointwise maximum over landmark channels.
    """
    pts = _as_points(landmarks)
    if pts.shape != (NUM_LANDMARKS, 2):
        raise ContractError(f"expected 68 landmarks, got {pts.shape}")
    if height < 1 or width < 1:
        raise ContractError("heatmap grid must be at least 1 x 1")
    if sigma <= 0:
        raise ContractError("sigma must be positive")
    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)
    dy = ys[None, :, None] - pts[:, 1, None, None]
    dx = xs[None, None, :] - pts[:, 0, None, None]
    bumps = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    background = np.clip(1.0 - bumps.max(axis=0, keepdims=True), 0.0, 1.0)
    stack = np.concatenate([bumps, background], axis=0).astype(np.float32)
    return HeatmapStack(stack, float(sigma))


def heatmap_difference(
    g_in: FaceGraph, g_out: FaceGraph, height: int, width: int, sigma: float
) -> np.ndarray:
    """render(g_out) - render(g_in), the 69-channel motion cue for the texture net."""
    if g_in.num_vertices != g_out.num_vertices:
        raise ContractError("graphs must have equal vertex counts")
    h_in = render_heatmaps(g_in.vertices, height, width, sigma)
    h_out = render_heatmaps(g_out.vertices, height, width, sigma)
    return h_out.channels - h_in.channels


# ---------------------------------------------------------------------------
# blinks

@dataclass(frozen=True)
class BlinkParams:
    mean_interval_s: float = 3.0
    duration_s: float = 0.3
    amplitude: float = 0.8

    def __post_init__(self):
        if self.mean_interval_s <= 0 or self.duration_s <= 0:
            raise ContractError("blink interval and duration must be positive")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ContractError("blink amplitude must lie in [0, 1]")


def add_blinks(
    sequence: list[LandmarkSet],
    params: BlinkParams,
    seed: int,
    fps: float = 30.0,
) -> list[LandmarkSet]:
    """Inject seeded eye blinks into a 30 fps landmark sequence.

    Blink onsets follow an exponential inter-arrival process (mean
    ``mean_interval_s``); each blink closes the upper lids onto their paired
    lower-lid vertices with a raised-cosine profile over ``duration_s``.
    At the apex the per-pair lid gap shrinks by ``amplitude`` times the gap.
    Only vertices 37, 38, 43, 44 ever move. Deterministic under a fixed seed.
    """
    out = [ls.copy() for ls in sequence]
    n = len(out)
    if n == 0:
        return out
    dur_frames = max(2, int(round(params.duration_s * fps)))
    rng = np.random.default_rng(seed)
    onsets: list[int] = []
    t = rng.exponential(params.mean_interval_s)
    while t * fps < n:
        frame = int(round(t * fps))
        if not onsets or frame > onsets[-1] + dur_frames:
            onsets.append(frame)
        t += rng.exponential(params.mean_interval_s)
    for f0 in onsets:
        for k in range(dur_frames + 1):
            f = f0 + k
            if f >= n:
                break
            w = params.amplitude * 0.5 * (1.0 - np.cos(2.0 * np.pi * k / dur_frames))
            pts = out[f].points
            for upper, lower in EYELID_PAIRS:
                pts[upper] = pts[upper] + w * (pts[lower] - pts[upper])
    return out


# ---------------------------------------------------------------------------
# landmark file I/O

def save_landmark_file(path: str | Path, sequence) -> None:
    """One frame per line: 136 comma-separated floats (x0, y0, ..., x67, y67)."""
    lines = []
    for frame in sequence:
        pts = _as_points(frame)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise ContractError(f"each frame must be (68, 2), got {pts.shape}")
        lines.append(",".join(format(v, ".17g") for v in pts.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_landmark_file(path: str | Path, canonical: bool = False) -> list[LandmarkSet]:
    text = Path(path).read_text()
    frames = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        values = line.split(",")
        if len(values) != NUM_LANDMARKS * 2:
            raise ContractError(
                f"{path}:{lineno}: expected 136 values, got {len(values)}"
            )
        try:
            flat = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise ContractError(f"{path}:{lineno}: non-numeric landmark value") from exc
        frames.append(LandmarkSet(flat.reshape(NUM_LANDMARKS, 2), canonical=canonical))
    if not frames:
        raise ContractError(f"{path}: no landmark frames found")
    return frames


def save_template(path: str | Path, template: LandmarkSet) -> None:
    save_landmark_file(path, [template])


def load_template(path: str | Path) -> LandmarkSet:
    return load_landmark_file(path, canonical=True)[0]
