"""Geometry oracles: triangulation, alignment, heatmaps, blinks, file I/O.

The Delaunay and Procrustes checks are independent re-derivations (in-circle
determinants, explicit similarity maps), not comparisons against the code
under test.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emoface.errors import ContractError, DegenerateGeometryError
from emoface.geometry import (
    EYELID_PAIRS,
    MOUTH_INDICES,
    NUM_LANDMARKS,
    BlinkParams,
    FaceGraph,
    LandmarkSet,
    RegionPartition,
    SimilarityTransform,
    add_blinks,
    align_to_canonical,
    build_face_graph,
    canonical_template,
    default_partition,
    delaunay_triangles,
    delaunay_triangulate,
    heatmap_difference,
    load_landmark_file,
    load_template,
    procrustes_align,
    region_adjacency,
    render_heatmaps,
    retarget_displacements,
    save_landmark_file,
    save_template,
)


# ---------------------------------------------------------------------------
# Delaunay: brute-force empty-circumcircle oracle

def incircle_violations(points: np.ndarray, triangles: np.ndarray, eps: float = 1e-9) -> int:
    """Count points strictly inside any triangle's circumcircle.

    Classic in-circle determinant, evaluated for every (triangle, other
    point) pair. Zero violations is the defining property of a Delaunay
    triangulation.
    """
    violations = 0
    n = len(points)
    for tri in triangles:
        a, b, c = (points[i] for i in tri)
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if area2 < 0:  # orient counterclockwise so det > 0 means inside
            b, c = c, b
        others = points[np.setdiff1d(np.arange(n), tri)]
        rows = []
        for v in (a, b, c):
            dx = v[0] - others[:, 0]
            dy = v[1] - others[:, 1]
            rows.append((dx, dy, dx * dx + dy * dy))
        (m00, m01, m02), (m10, m11, m12), (m20, m21, m22) = rows
        det = (
            m00 * (m11 * m22 - m12 * m21)
            - m01 * (m10 * m22 - m12 * m20)
            + m02 * (m10 * m21 - m11 * m20)
        )
        violations += int(np.sum(det > eps))
    return violations


class TestDelaunay:
    def test_template_graph_shape(self):
        graph = build_face_graph(canonical_template())
        assert graph.num_vertices == NUM_LANDMARKS
        # planar graph on 68 vertices: at most 3n - 6 edges
        assert len(graph.edges) <= 3 * NUM_LANDMARKS - 6
        assert len(graph.edges) == 178

    def test_template_triangulation_is_delaunay(self):
        pts = canonical_template().points
        tris = delaunay_triangles(pts)
        assert incircle_violations(pts, tris) == 0

    def test_empty_circumcircle_on_random_point_sets(self):
        # the full 100-set sweep lives in the acceptance suite
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(4, 51))
            pts = rng.uniform(0.0, 1.0, size=(n, 2))
            tris = delaunay_triangles(pts)
            assert incircle_violations(pts, tris) == 0, f"seed {seed}"

    def test_triangle_indices_are_valid(self, rng):
        pts = rng.uniform(size=(30, 2))
        tris = delaunay_triangles(pts)
        assert tris.min() >= 0 and tris.max() < 30
        # each simplex has three distinct vertices
        assert all(len(set(t)) == 3 for t in tris)

    def test_deterministic(self, rng):
        pts = rng.uniform(size=(40, 2))
        assert np.array_equal(delaunay_triangles(pts), delaunay_triangles(pts.copy()))
        assert delaunay_triangulate(pts) == delaunay_triangulate(pts.copy())

    def test_edge_set_matches_simplices(self, rng):
        pts = rng.uniform(size=(25, 2))
        tris = delaunay_triangles(pts)
        expected = set()
        for a, b, c in tris:
            expected |= {
                tuple(sorted((int(a), int(b)))),
                tuple(sorted((int(a), int(c)))),
                tuple(sorted((int(b), int(c)))),
            }
        assert delaunay_triangulate(pts) == frozenset(expected)

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            delaunay_triangles(np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_duplicate_points(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateGeometryError):
            delaunay_triangles(pts)

    def test_collinear_points(self):
        pts = np.stack([np.linspace(0, 1, 5), np.linspace(0, 2, 5)], axis=1)
        with pytest.raises(DegenerateGeometryError):
            delaunay_triangles(pts)


class TestFaceGraph:
    def test_build_consistency(self, rng):
        graph = build_face_graph(canonical_template())
        adj = graph.adjacency
        assert np.array_equal(adj, adj.T)
        assert np.all(np.diag(adj) == 0)
        for a, b in graph.edges:
            assert adj[a, b] == 1 and adj[b, a] == 1
        assert adj.sum() == 2 * len(graph.edges)

    def test_with_vertices_preserves_topology(self, rng):
        graph = build_face_graph(canonical_template())
        moved = graph.with_vertices(graph.vertices + 0.01)
        assert moved.edges == graph.edges
        assert np.array_equal(moved.adjacency, graph.adjacency)
        with pytest.raises(ContractError):
            graph.with_vertices(np.zeros((10, 2)))

    def test_from_adjacency_round_trip(self):
        graph = build_face_graph(canonical_template())
        rebuilt = FaceGraph.from_adjacency(graph.vertices, graph.adjacency)
        assert rebuilt.edges == graph.edges
        assert np.array_equal(rebuilt.adjacency, graph.adjacency)

    def test_inconsistent_edges_rejected(self):
        pts = canonical_template().points
        adj = np.zeros((68, 68), dtype=np.uint8)
        adj[0, 1] = adj[1, 0] = 1
        with pytest.raises(ContractError):
            FaceGraph(pts, frozenset(), adj)  # adjacency says edge, edge set empty

    def test_asymmetric_adjacency_rejected(self):
        pts = canonical_template().points
        adj = np.zeros((68, 68), dtype=np.uint8)
        adj[0, 1] = 1
        with pytest.raises(ContractError):
            FaceGraph(pts, frozenset({(0, 1)}), adj)


class TestRegionAdjacency:
    def test_matches_cross_edge_existence(self):
        graph = build_face_graph(canonical_template())
        partition = default_partition()
        adj_r = region_adjacency(graph, partition)
        label = np.empty(68, dtype=int)
        for r, idx in enumerate(partition.regions):
            label[idx] = r
        k = partition.num_regions
        expected = np.zeros((k, k), dtype=np.uint8)
        for a, b in graph.edges:
            if label[a] != label[b]:
                expected[label[a], label[b]] = expected[label[b], label[a]] = 1
        assert np.array_equal(adj_r, expected)
        assert np.all(np.diag(adj_r) == 0)

    def test_partition_must_cover(self):
        with pytest.raises(ContractError):
            RegionPartition(("a",), (np.arange(10),))


# ---------------------------------------------------------------------------
# similarity alignment

def random_similarity(rng: np.random.Generator) -> SimilarityTransform:
    theta = rng.uniform(-np.pi, np.pi)
    rot = np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    return SimilarityTransform(
        scale=float(rng.uniform(0.5, 2.0)),
        rotation=rot,
        translation=rng.uniform(-1.0, 1.0, size=2),
    )


class TestProcrustes:
    def test_round_trip_recovery(self):
        template = canonical_template().points
        for seed in range(10):
            rng = np.random.default_rng(seed)
            transform = random_similarity(rng)
            moved = transform.apply(template)
            est = procrustes_align(moved, template)
            assert np.max(np.abs(est.apply(moved) - template)) <= 1e-6

    def test_exact_parameter_recovery(self, rng):
        src = rng.uniform(size=(20, 2))
        transform = random_similarity(rng)
        est = procrustes_align(src, transform.apply(src))
        assert est.scale == pytest.approx(transform.scale, abs=1e-9)
        assert np.allclose(est.rotation, transform.rotation, atol=1e-9)
        assert np.allclose(est.translation, transform.translation, atol=1e-9)

    def test_never_returns_reflection(self, rng):
        src = rng.uniform(size=(15, 2))
        mirrored = src * np.array([-1.0, 1.0])
        est = procrustes_align(src, mirrored)
        assert np.linalg.det(est.rotation) == pytest.approx(1.0, abs=1e-9)

    def test_inverse_composition(self, rng):
        transform = random_similarity(rng)
        pts = rng.uniform(size=(12, 2))
        back = transform.inverse()
        assert np.allclose(back.apply(transform.apply(pts)), pts, atol=1e-12)
        assert np.allclose(transform.apply(back.apply(pts)), pts, atol=1e-12)

    def test_displacements_are_the_linear_part(self, rng):
        transform = random_similarity(rng)
        pts = rng.uniform(size=(8, 2))
        disp = rng.normal(size=(8, 2))
        direct = transform.apply(pts + disp) - transform.apply(pts)
        assert np.allclose(direct, transform.apply_to_displacements(disp), atol=1e-12)

    def test_zero_variance_is_degenerate(self):
        same = np.ones((68, 2))
        with pytest.raises(DegenerateGeometryError):
            procrustes_align(same, canonical_template().points)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ContractError):
            procrustes_align(rng.uniform(size=(5, 2)), rng.uniform(size=(6, 2)))

    def test_align_to_canonical_contract(self, rng):
        transform = random_similarity(rng)
        pixel_face = LandmarkSet(transform.apply(canonical_template().points))
        aligned, est = align_to_canonical(pixel_face)
        assert aligned.canonical
        assert np.array_equal(aligned.points, est.apply(pixel_face.points))
        assert np.max(np.abs(aligned.points - canonical_template().points)) <= 1e-6


class TestRetarget:
    def test_zero_displacement_is_identity(self, rng):
        transform = random_similarity(rng)
        neutral = LandmarkSet(transform.apply(canonical_template().points))
        out = retarget_displacements(np.zeros((68, 2)), neutral)
        assert np.array_equal(out.points, neutral.points)
        assert not out.canonical

    def test_pure_scale_doubles_displacements(self):
        # target face is the template at twice the size: canonical-frame
        # displacements must come back doubled, unrotated
        neutral = LandmarkSet(canonical_template().points * 2.0 + 3.0)
        disp = np.random.default_rng(1).normal(scale=0.01, size=(68, 2))
        out = retarget_displacements(disp, neutral)
        assert np.allclose(out.points - neutral.points, 2.0 * disp, atol=1e-9)

    def test_rejects_wrong_shape(self):
        neutral = canonical_template()
        with pytest.raises(ContractError):
            retarget_displacements(np.zeros((67, 2)), neutral)


# ---------------------------------------------------------------------------
# heatmaps

class TestHeatmaps:
    def test_peak_is_one_at_integer_vertex(self):
        pts = canonical_template().points * 64.0
        pts[0] = (3.0, 4.0)
        stack = render_heatmaps(pts, 16, 16, sigma=1.5)
        assert stack.channels[0, 4, 3] == 1.0  # exp(0) exactly
        assert stack.channels[0].max() == 1.0

    def test_off_grid_peak_below_one(self):
        pts = canonical_template().points * 16.0 + 0.5
        stack = render_heatmaps(pts, 16, 16, sigma=1.5)
        assert stack.channels[:68].max() < 1.0

    def test_channel_count_and_range(self):
        pts = canonical_template().points * 32.0
        stack = render_heatmaps(pts, 32, 48, sigma=2.0)
        assert stack.channels.shape == (69, 32, 48)
        assert stack.channels.dtype == np.float32
        assert stack.channels.min() >= 0.0 and stack.channels.max() <= 1.0

    def test_background_complements_the_maximum(self):
        pts = canonical_template().points * 24.0
        stack = render_heatmaps(pts, 24, 24, sigma=1.5)
        expected = np.clip(1.0 - stack.channels[:68].max(axis=0), 0.0, 1.0)
        assert np.allclose(stack.channels[68], expected, atol=1e-7)

    def test_difference_antisymmetry_exact(self):
        g1 = build_face_graph(canonical_template().points * 16.0)
        g2 = g1.with_vertices(g1.vertices + 0.7)
        fwd = heatmap_difference(g1, g2, 16, 16, 1.5)
        bwd = heatmap_difference(g2, g1, 16, 16, 1.5)
        assert np.array_equal(fwd, -bwd)
        assert np.array_equal(heatmap_difference(g1, g1, 16, 16, 1.5), np.zeros_like(fwd))

    def test_validation(self):
        pts = canonical_template().points
        with pytest.raises(ContractError):
            render_heatmaps(pts, 0, 16, 1.5)
        with pytest.raises(ContractError):
            render_heatmaps(pts, 16, 16, 0.0)
        with pytest.raises(ContractError):
            render_heatmaps(pts[:10], 16, 16, 1.5)


# ---------------------------------------------------------------------------
# blinks

def static_sequence(n: int) -> list[LandmarkSet]:
    return [canonical_template() for _ in range(n)]


class TestBlinks:
    def test_zero_amplitude_is_identity(self):
        seq = static_sequence(90)
        out = add_blinks(seq, BlinkParams(amplitude=0.0), seed=0)
        for a, b in zip(seq, out):
            assert np.array_equal(a.points, b.points)

    def test_only_upper_lid_vertices_move(self):
        seq = static_sequence(300)
        out = add_blinks(seq, BlinkParams(mean_interval_s=1.0), seed=0)
        movable = {upper for upper, _ in EYELID_PAIRS}
        fixed = np.array(sorted(set(range(68)) - movable))
        moved_any = False
        for a, b in zip(seq, out):
            assert np.array_equal(a.points[fixed], b.points[fixed])
            if not np.array_equal(a.points, b.points):
                moved_any = True
        assert moved_any  # 300 frames at 1 s mean interval must blink

    def test_apex_closes_by_amplitude(self):
        # duration 8/30 s at 30 fps: an even 8-frame blink puts its apex
        # exactly on a frame, where the lid gap shrinks by the amplitude
        amp = 0.75
        seq = static_sequence(400)
        out = add_blinks(
            seq, BlinkParams(mean_interval_s=1.0, duration_s=8.0 / 30.0, amplitude=amp),
            seed=3,
        )
        base_gap = np.linalg.norm(
            canonical_template().points[37] - canonical_template().points[41]
        )
        gaps = np.array(
            [np.linalg.norm(f.points[37] - f.points[41]) for f in out]
        )
        assert gaps.min() == pytest.approx((1.0 - amp) * base_gap, abs=1e-9)

    def test_deterministic_under_seed(self):
        seq = static_sequence(200)
        p = BlinkParams(mean_interval_s=1.5)
        a = add_blinks(seq, p, seed=7)
        b = add_blinks(seq, p, seed=7)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.points, fb.points)
        c = add_blinks(seq, p, seed=8)
        assert any(
            not np.array_equal(fa.points, fc.points) for fa, fc in zip(a, c)
        )

    def test_no_blinks_when_interval_exceeds_clip(self):
        seq = static_sequence(30)
        out = add_blinks(seq, BlinkParams(mean_interval_s=1e6), seed=0)
        for a, b in zip(seq, out):
            assert np.array_equal(a.points, b.points)

    def test_input_not_mutated(self):
        seq = static_sequence(300)
        before = [f.points.copy() for f in seq]
        add_blinks(seq, BlinkParams(mean_interval_s=1.0), seed=0)
        for f, b in zip(seq, before):
            assert np.array_equal(f.points, b)

    def test_empty_sequence(self):
        assert add_blinks([], BlinkParams(), seed=0) == []

    def test_params_validation(self):
        with pytest.raises(ContractError):
            BlinkParams(mean_interval_s=0.0)
        with pytest.raises(ContractError):
            BlinkParams(amplitude=1.5)


# ---------------------------------------------------------------------------
# landmark containers and file I/O

class TestLandmarkSet:
    def test_validation(self):
        with pytest.raises(ContractError):
            LandmarkSet(np.zeros((67, 2)))
        bad = np.zeros((68, 2))
        bad[0, 0] = np.nan
        with pytest.raises(ContractError):
            LandmarkSet(bad)
        with pytest.raises(ContractError):
            LandmarkSet(np.full((68, 2), 1.5), canonical=True)

    def test_copy_is_independent(self):
        a = canonical_template()
        b = a.copy()
        b.points[0, 0] = 0.123
        assert a.points[0, 0] != 0.123

    def test_mouth_indices_span_both_lips(self):
        assert MOUTH_INDICES[0] == 48 and MOUTH_INDICES[-1] == 67


class TestLandmarkFiles:
    def test_round_trip_bitwise(self, tmp_path, rng):
        seq = rng.uniform(size=(5, 68, 2)) * 100.0
        path = tmp_path / "landmarks.txt"
        save_landmark_file(path, seq)
        loaded = load_landmark_file(path)
        assert len(loaded) == 5
        for t in range(5):
            # %.17g round-trips float64 exactly
            assert np.array_equal(loaded[t].points, seq[t])

    def test_line_errors_carry_location(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0,2.0\n")
        with pytest.raises(ContractError, match=r"bad\.txt:1"):
            load_landmark_file(path)
        path.write_text(",".join(["x"] * 136) + "\n")
        with pytest.raises(ContractError, match="non-numeric"):
            load_landmark_file(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n")
        with pytest.raises(ContractError, match="no landmark frames"):
            load_landmark_file(path)

    def test_template_round_trip(self, tmp_path):
        path = tmp_path / "template.txt"
        save_template(path, canonical_template())
        loaded = load_template(path)
        assert loaded.canonical
        assert np.array_equal(loaded.points, canonical_template().points)


class TestCanonicalTemplate:
    def test_unit_square_and_symmetry(self):
        tpl = canonical_template()
        assert tpl.canonical
        assert tpl.points.min() >= 0.0 and tpl.points.max() <= 1.0
        pts = tpl.points
        # bilateral symmetry about x = 0.5 for jaw and brow chains
        for i in range(17):
            assert pts[i, 0] + pts[16 - i, 0] == pytest.approx(1.0, abs=1e-12)
            assert pts[i, 1] == pytest.approx(pts[16 - i, 1], abs=1e-12)
        assert np.allclose(pts[27:31, 0], 0.5)

    def test_general_position(self):
        # the bundled template must triangulate without degeneracies
        build_face_graph(canonical_template())


# ---------------------------------------------------------------------------
# property tests

coord = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, width=64)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    scale=st.floats(min_value=0.25, max_value=4.0),
    theta=st.floats(min_value=-np.pi, max_value=np.pi),
    tx=coord,
    ty=coord,
)
def test_procrustes_round_trip_property(seed, scale, theta, tx, ty):
    rng = np.random.default_rng(seed)
    src = rng.uniform(size=(68, 2))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    transform = SimilarityTransform(scale, rot, np.array([tx, ty]))
    moved = transform.apply(src)
    est = procrustes_align(moved, src)
    assert np.max(np.abs(est.apply(moved) - src)) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), size=st.integers(4, 24))
def test_heatmap_antisymmetry_property(seed, size):
    rng = np.random.default_rng(seed)
    g1 = build_face_graph(canonical_template().points * size)
    g2 = g1.with_vertices(g1.vertices + rng.normal(scale=0.5, size=(68, 2)))
    fwd = heatmap_difference(g1, g2, size, size, 1.5)
    assert np.array_equal(fwd, -heatmap_difference(g2, g1, size, size, 1.5))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), frames=st.integers(1, 6))
def test_landmark_file_round_trip_property(tmp_path_factory, seed, frames):
    rng = np.random.default_rng(seed)
    seq = rng.normal(scale=50.0, size=(frames, 68, 2))
    path = tmp_path_factory.mktemp("lm") / "seq.txt"
    save_landmark_file(path, seq)
    loaded = load_landmark_file(path)
    assert np.array_equal(np.stack([f.points for f in loaded]), seq)
