"""Mesh measures against analytic oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from steershape.mesh import (DegenerateMeshError, NotWatertightError, TriMesh,
                             chamfer_distance, cross_section_area, load_obj,
                             load_stl, mesh_volume, mirror_iou,
                             normalize_population, sample_surface, save_obj,
                             signed_distance)
from steershape.primitives import box, icosphere

SPHERE_R = 0.3
SPHERE_VOL = 4.0 / 3.0 * np.pi * SPHERE_R ** 3


@pytest.fixture(scope="module")
def sphere():
    return icosphere(radius=SPHERE_R, subdivisions=4)


class TestTriMesh:
    def test_face_index_validation(self):
        with pytest.raises(Exception):
            TriMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))

    def test_watertight_cube(self):
        assert box().is_watertight()

    def test_open_surface_not_watertight(self):
        b = box()
        assert not TriMesh(b.vertices, b.faces[:-1]).is_watertight()

    def test_flipped_face_breaks_consistency(self):
        b = box()
        f = b.faces.copy()
        f[0] = f[0][::-1]
        assert not TriMesh(b.vertices, f).is_watertight()

    def test_component_count(self, sphere):
        assert sphere.connected_component_count() == 1
        two = TriMesh(
            np.concatenate([sphere.vertices, sphere.vertices + 2.0]),
            np.concatenate([sphere.faces, sphere.faces + sphere.n_vertices]))
        assert two.connected_component_count() == 2


class TestSignedDistance:
    def test_sphere_center(self, sphere):
        d = signed_distance(sphere, np.array([0.5, 0.5, 0.5]))
        assert d == pytest.approx(-SPHERE_R, abs=2e-3)

    def test_sphere_outside(self, sphere):
        d = signed_distance(sphere, np.array([0.9, 0.5, 0.5]))
        assert d == pytest.approx(0.1, abs=2e-3)

    def test_vertex_distance_zero(self, sphere):
        d = signed_distance(sphere, sphere.vertices[17])
        assert abs(d) < 1e-12

    def test_sign_matches_ray_parity(self, sphere):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.05, 0.95, size=(1000, 3))
        s = signed_distance(sphere, pts)
        inside_oracle = _ray_parity_inside(sphere, pts, rng)
        agree = (s < 0) == inside_oracle
        # ignore points essentially on the surface
        agree |= np.abs(s) < 1e-9
        assert agree.all()

    def test_unsigned_on_open_mesh(self, sphere):
        open_mesh = TriMesh(sphere.vertices, sphere.faces[:-10])
        with pytest.raises(NotWatertightError):
            signed_distance(open_mesh, np.array([0.5, 0.5, 0.5]))
        d = signed_distance(open_mesh, np.array([0.5, 0.5, 0.5]), unsigned=True)
        assert d == pytest.approx(SPHERE_R, abs=2e-3)


def _ray_parity_inside(mesh, points, rng):
    """Independent inside test: Moller-Trumbore crossings along a random ray."""
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    tri = mesh.vertices[mesh.faces]
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(direction, e2)
    det = (e1 * pvec).sum(axis=1)
    ok = np.abs(det) > 1e-12
    inside = np.zeros(len(points), dtype=bool)
    for i, p in enumerate(points):
        tvec = p - v0
        u = (tvec * pvec).sum(axis=1) / np.where(ok, det, 1.0)
        qvec = np.cross(tvec, e1)
        v = (qvec * direction[None, :]).sum(axis=1) / np.where(ok, det, 1.0)
        t = (e2 * qvec).sum(axis=1) / np.where(ok, det, 1.0)
        hits = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-12)
        inside[i] = hits.sum() % 2 == 1
    return inside


class TestSampleSurface:
    def test_samples_on_surface(self, sphere):
        pts = sample_surface(sphere, 500, 3)
        d = signed_distance(sphere, pts, unsigned=True)
        assert d.max() < 1e-9

    def test_chi_square_uniformity_on_square(self):
        # unit square as two triangles; 4x4 occupancy bins at alpha = 0.01
        verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        faces = np.array([[0, 1, 2], [0, 2, 3]])
        square = TriMesh(verts, faces)
        n = 100_000
        pts = sample_surface(square, n, 11)
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1],
                                      bins=[4, 4], range=[[0, 1], [0, 1]])
        expected = n / 16.0
        chi2 = ((counts - expected) ** 2 / expected).sum()
        assert chi2 < stats.chi2.ppf(0.99, df=15)

    def test_seed_determinism(self, sphere):
        a = sample_surface(sphere, 100, 42)
        b = sample_surface(sphere, 100, 42)
        assert np.array_equal(a, b)

    def test_zero_area_mesh(self):
        degenerate = TriMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(DegenerateMeshError):
            sample_surface(degenerate, 10, 0)


class TestVolume:
    def test_unit_cube(self):
        assert mesh_volume(box()) == pytest.approx(1.0, abs=1e-12)

    def test_icosphere(self, sphere):
        assert mesh_volume(sphere) == pytest.approx(SPHERE_VOL, rel=0.01)

    def test_flipped_winding_same_positive_volume(self, sphere):
        flipped = TriMesh(sphere.vertices, sphere.faces[:, [0, 2, 1]])
        assert mesh_volume(flipped) == pytest.approx(mesh_volume(sphere), abs=1e-15)

    def test_non_watertight_rejected(self, sphere):
        with pytest.raises(NotWatertightError):
            mesh_volume(TriMesh(sphere.vertices, sphere.faces[:-1]))


class TestNormalizePopulation:
    def test_single_unit_cube_maps_exactly(self):
        cube = box((3, 5, 7), (4, 6, 8))
        normed, _ = normalize_population([cube])
        lo, hi = normed[0].bounds()
        assert np.allclose(lo, 0.0, atol=1e-12)
        assert np.allclose(hi, 1.0, atol=1e-12)

    def test_two_cubes_preserve_ratio(self):
        big = box((-1, -1, -1), (1, 1, 1))
        small = box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
        normed, _ = normalize_population([big, small])
        sizes = [m.bounds()[1] - m.bounds()[0] for m in normed]
        assert np.allclose(sizes[0], 1.0)
        assert np.allclose(sizes[1], 0.5)

    def test_round_trip(self):
        meshes = [box((0, 0, 0), (2, 1, 3)), box((-1, 0, 1), (0, 2, 2))]
        normed, tf = normalize_population(meshes)
        for orig, new in zip(meshes, normed):
            back = tf.invert(new.vertices)
            assert np.abs(back - orig.vertices).max() < 1e-9

    def test_everything_inside_unit_cube(self):
        rng = np.random.default_rng(0)
        meshes = []
        for _ in range(5):
            lo = rng.uniform(-2, 0, 3)
            hi = lo + rng.uniform(0.5, 3.0, 3)
            meshes.append(box(lo, hi))
        normed, _ = normalize_population(meshes)
        for m in normed:
            lo, hi = m.bounds()
            assert lo.min() >= -1e-12 and hi.max() <= 1 + 1e-12


class TestCrossSection:
    def test_unit_cube_midplane(self):
        assert cross_section_area(box(), 0, 0.5) == pytest.approx(1.0, abs=1e-12)

    def test_sphere_through_center(self, sphere):
        area = cross_section_area(sphere, 0, 0.5)
        assert area == pytest.approx(np.pi * SPHERE_R ** 2, rel=0.01)

    def test_plane_missing_solid(self, sphere):
        assert cross_section_area(sphere, 0, 0.95) == 0.0

    def test_two_disjoint_lobes_zero_at_gap(self):
        left = box((0.1, 0.3, 0.3), (0.4, 0.7, 0.7))
        right = box((0.6, 0.3, 0.3), (0.9, 0.7, 0.7))
        both = TriMesh(
            np.concatenate([left.vertices, right.vertices]),
            np.concatenate([left.faces, right.faces + left.n_vertices]))
        assert cross_section_area(both, 0, 0.5) == 0.0
        # the same solid cut through a lobe is the lobe's section
        assert cross_section_area(both, 0, 0.25) == pytest.approx(0.16, abs=1e-12)

    def test_continuity_in_offset(self, sphere):
        # dense sweep: jumps only where the plane leaves the solid
        offsets = np.linspace(0.21, 0.79, 117)
        areas = [cross_section_area(sphere, 0, c) for c in offsets]
        diffs = np.abs(np.diff(areas))
        interior = (offsets[:-1] > 0.25) & (offsets[1:] < 0.75)
        # bound: |dA/dc| <= 2 pi r for a sphere, times the step size
        step = offsets[1] - offsets[0]
        assert diffs[interior].max() < 5 * 2 * np.pi * SPHERE_R * step


class TestMirrorIoU:
    def test_centered_cube(self):
        cube = box((0.2, 0.3, 0.35), (0.8, 0.7, 0.65))
        assert mirror_iou(cube, 0, 0.5, 128) >= 0.98

    def test_two_congruent_lobes(self):
        left = box((0.15, 0.35, 0.35), (0.4, 0.65, 0.65))
        right = box((0.6, 0.35, 0.35), (0.85, 0.65, 0.65))
        both = TriMesh(
            np.concatenate([left.vertices, right.vertices]),
            np.concatenate([left.faces, right.faces + left.n_vertices]))
        assert mirror_iou(both, 0, 0.5, 128) >= 0.95

    def test_single_side_lobe_zero(self):
        lobe = box((0.1, 0.3, 0.3), (0.4, 0.7, 0.7))
        assert mirror_iou(lobe, 0, 0.5, 128) == 0.0

    def test_reflection_involution(self):
        cube = box((0.25, 0.3, 0.4), (0.55, 0.6, 0.7))
        reflected = TriMesh(cube.vertices * np.array([-1, 1, 1]) + np.array([1, 0, 0]),
                            cube.faces[:, [0, 2, 1]])
        a = mirror_iou(cube, 0, 0.5, 128)
        b = mirror_iou(reflected, 0, 0.5, 128)
        assert a == pytest.approx(b, abs=1e-3)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            mirror_iou(box(), 0, 0.5, 16)


class TestChamfer:
    def test_identity(self, sphere):
        assert chamfer_distance(sphere, sphere, 5000, 1) < 1e-9

    def test_concentric_spheres(self):
        a = icosphere(radius=0.30, subdivisions=3)
        b = icosphere(radius=0.31, subdivisions=3)
        d = chamfer_distance(a, b, 20000, 2)
        assert d == pytest.approx(0.01, rel=0.10)

    def test_swap_symmetric(self):
        a = icosphere(radius=0.30, subdivisions=2)
        b = icosphere((0.45, 0.5, 0.5), 0.25, 2)
        assert chamfer_distance(a, b, 4000, 5) == chamfer_distance(b, a, 4000, 5)

    def test_rigid_motion_invariance(self):
        a = icosphere(radius=0.30, subdivisions=2)
        b = icosphere((0.45, 0.55, 0.5), 0.22, 2)
        theta = 0.3
        rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                        [np.sin(theta), np.cos(theta), 0],
                        [0, 0, 1.0]])
        shift = np.array([0.05, -0.02, 0.01])
        a2 = TriMesh(a.vertices @ rot.T + shift, a.faces)
        b2 = TriMesh(b.vertices @ rot.T + shift, b.faces)
        d1 = chamfer_distance(a, b, 4000, 7)
        d2 = chamfer_distance(a2, b2, 4000, 7)
        assert d1 == pytest.approx(d2, abs=1e-9)

    def test_empty_mesh_rejected(self, sphere):
        empty = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        with pytest.raises(DegenerateMeshError):
            chamfer_distance(sphere, empty)


class TestMeshIO:
    def test_obj_round_trip(self, tmp_path, sphere):
        path = tmp_path / "m.obj"
        save_obj(sphere, path)
        again = load_obj(path)
        assert np.array_equal(again.vertices, sphere.vertices)
        assert np.array_equal(again.faces, sphere.faces)

    def test_obj_parses_slashed_faces(self, tmp_path):
        path = tmp_path / "slashed.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
        mesh = load_obj(path)
        assert mesh.n_faces == 1

    def test_stl_round_trip(self, tmp_path):
        import struct

        cube = box()
        tri = cube.vertices[cube.faces].astype("<f4")
        blob = b"\0" * 80 + struct.pack("<I", len(tri))
        for t in tri:
            blob += b"\0" * 12
            blob += t.tobytes()
            blob += b"\0\0"
        path = tmp_path / "m.stl"
        path.write_bytes(blob)
        mesh = load_stl(path)
        assert mesh.n_faces == 12
        assert mesh.is_watertight()
        assert mesh_volume(mesh) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.3, 3.0), shift=st.floats(-2.0, 2.0))
def test_volume_scales_cubically(scale, shift):
    cube = box((0, 0, 0), (1, 1, 1))
    moved = TriMesh(cube.vertices * scale + shift, cube.faces)
    assert mesh_volume(moved) == pytest.approx(scale ** 3, rel=1e-9)
