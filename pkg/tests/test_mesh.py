import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshnoise.mesh import (
    DegenerateFaceError,
    MeshError,
    ObjParseError,
    TriMesh,
    bisect_edges,
    load_obj,
    load_ply,
    save_obj,
    save_ply,
    scale,
    subdivide_midpoint,
    validate,
)
from meshnoise.primitives import equilateral_triangle, icosahedron, icosphere, square_grid, unit_square


def euler(mesh):
    return mesh.n_vertices - len(mesh.edges()) + mesh.n_faces


class TestTriMesh:
    def test_rejects_bad_index(self):
        with pytest.raises(MeshError):
            TriMesh(np.zeros((3, 3)), [[0, 1, 3]])

    def test_rejects_repeated_index(self):
        with pytest.raises(MeshError):
            TriMesh(np.zeros((3, 3)), [[0, 1, 1]])

    def test_arrays_are_read_only(self):
        m = unit_square()
        with pytest.raises(ValueError):
            m.vertices[0, 0] = 5.0

    def test_edges_unique_and_sorted(self):
        e = unit_square().edges()
        assert len(e) == 5
        assert np.all(e[:, 0] < e[:, 1])


class TestObj:
    def test_minimal_file(self, tmp_path):
        p = tmp_path / "tri.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        m = load_obj(p)
        assert (m.n_vertices, m.n_faces) == (3, 1)

    def test_quad_rejected(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(ObjParseError) as exc:
            load_obj(p)
        assert exc.value.lineno == 5

    def test_slash_suffixes_and_comments(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("# hi\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n")
        assert load_obj(p).n_faces == 1

    def test_out_of_range(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
        with pytest.raises(MeshError):
            load_obj(p)

    def test_icosahedron_fixture_euler(self, tmp_path):
        p = tmp_path / "ico.obj"
        save_obj(icosahedron(), p)
        m = load_obj(p)
        assert (m.n_vertices, m.n_faces) == (12, 20)
        assert euler(m) == 2
        assert validate(m).euler_characteristic == 2


class TestPly:
    def test_field_header(self, tmp_path):
        m = unit_square()
        p = tmp_path / "a.ply"
        save_ply(m, {"noise": np.arange(4.0)}, p)
        assert "property double noise" in p.read_text()

    def test_plain_geometry(self, tmp_path):
        p = tmp_path / "a.ply"
        save_ply(unit_square(), {}, p)
        text = p.read_text()
        assert "property double x" in text and "noise" not in text

    def test_round_trip(self, tmp_path):
        m = icosphere(1)
        vals = np.linspace(-1, 1, m.n_vertices) / 3
        p = tmp_path / "s.ply"
        save_ply(m, {"noise": vals}, p)
        m2, fields = load_ply(p)
        np.testing.assert_allclose(m2.vertices, m.vertices, rtol=1e-15, atol=0)
        np.testing.assert_array_equal(m2.faces, m.faces)
        np.testing.assert_array_equal(fields["noise"], vals)

    def test_field_length_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            save_ply(unit_square(), {"noise": np.zeros(3)}, tmp_path / "x.ply")


class TestValidate:
    def test_closed_icosahedron(self):
        r = validate(icosahedron())
        assert r.is_manifold and r.boundary_edge_count == 0 and r.connected_components == 1
        assert r.orientation_consistent

    def test_single_triangle(self):
        r = validate(equilateral_triangle())
        assert r.is_manifold and r.boundary_edge_count == 3 and r.connected_components == 1
        assert r.min_angle == pytest.approx(np.pi / 3)

    def test_bowtie_is_edge_manifold(self):
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
        r = validate(TriMesh(v, [[0, 1, 2], [0, 3, 4]]))
        assert r.is_manifold and r.connected_components == 1

    def test_non_manifold_edge(self):
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        r = validate(TriMesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]]))
        assert not r.is_manifold

    def test_degenerate_face_listed(self):
        v = [[0, 0, 0], [1, 0, 0], [2, 0, 0]]
        r = validate(TriMesh(v, [[0, 1, 2]]))
        assert r.degenerate_faces == [0]

    def test_two_components(self):
        a = equilateral_triangle()
        v = np.vstack([a.vertices, a.vertices + 5])
        r = validate(TriMesh(v, [[0, 1, 2], [3, 4, 5]]))
        assert r.connected_components == 2


class TestScale:
    def test_identity(self):
        m = icosahedron()
        np.testing.assert_array_equal(scale(m, 1).vertices, m.vertices)

    def test_double(self):
        m = icosahedron()
        s = scale(m, 2)
        e = m.edges()
        len0 = np.linalg.norm(m.vertices[e[:, 0]] - m.vertices[e[:, 1]], axis=1)
        len1 = np.linalg.norm(s.vertices[e[:, 0]] - s.vertices[e[:, 1]], axis=1)
        np.testing.assert_allclose(len1, 2 * len0, rtol=1e-14)
        np.testing.assert_allclose(s.face_areas(), 4 * m.face_areas(), rtol=1e-14)

    def test_tenth_area(self):
        m = icosphere(2)
        assert scale(m, 0.1).total_area() == pytest.approx(0.01 * m.total_area(), rel=1e-12)

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            scale(icosahedron(), 0)


class TestSubdivide:
    @pytest.mark.parametrize(
        "mesh,expected",
        [(equilateral_triangle(), (6, 4)), (icosahedron(), (42, 80)), (unit_square(), (9, 8))],
    )
    def test_counts(self, mesh, expected):
        s = subdivide_midpoint(mesh)
        assert (s.n_vertices, s.n_faces) == expected
        assert s.n_vertices == mesh.n_vertices + len(mesh.edges())

    def test_surface_preserved(self, rng):
        # points on the subdivided faces must lie on the parent face they came from
        m = icosahedron()
        s = subdivide_midpoint(m)
        for child in range(s.n_faces):
            parent = child % m.n_faces  # children are stored in four blocks of F
            tri = m.vertices[m.faces[parent]]
            n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            n /= np.linalg.norm(n)
            w = rng.dirichlet(np.ones(3), size=1000 // s.n_faces + 1)
            pts = w @ s.vertices[s.faces[child]]
            assert np.abs((pts - tri[0]) @ n).max() < 1e-14
            # barycentric coordinates inside the parent
            A = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
            uv, *_ = np.linalg.lstsq(A, (pts - tri[0]).T, rcond=None)
            assert uv.min() > -1e-12 and uv.sum(axis=0).max() < 1 + 1e-12

    def test_total_area_and_orientation(self):
        m = icosphere(1)
        s = subdivide_midpoint(m)
        assert s.total_area() == pytest.approx(m.total_area(), rel=1e-13)
        assert validate(s).orientation_consistent


class TestBisect:
    def test_empty(self):
        m = unit_square()
        b = bisect_edges(m, [])
        np.testing.assert_array_equal(b.vertices, m.vertices)
        np.testing.assert_array_equal(b.faces, m.faces)

    def test_interior_edge(self):
        m = unit_square()
        b = bisect_edges(m, [(0, 2)])
        assert (b.n_vertices, b.n_faces) == (5, 4)
        assert b.total_area() == pytest.approx(1.0)

    def test_boundary_edge_single_triangle(self):
        b = bisect_edges(equilateral_triangle(), [(0, 1)])
        assert (b.n_vertices, b.n_faces) == (4, 2)

    def test_unknown_edge(self):
        with pytest.raises(MeshError):
            bisect_edges(equilateral_triangle(), [(0, 5)])

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(0, 29), unique=True, max_size=10))
    def test_counts_and_area(self, picks):
        m = icosahedron()
        edges = m.edges()[picks]
        b = bisect_edges(m, map(tuple, edges))
        assert b.n_vertices == 12 + len(picks)
        assert b.n_faces == 20 + 2 * len(picks)
        assert b.total_area() == pytest.approx(m.total_area(), rel=1e-12)
        r = validate(b)
        assert r.is_manifold and r.orientation_consistent and r.euler_characteristic == 2


def test_grid_counts():
    g = square_grid(4)
    assert (g.n_vertices, g.n_faces) == (25, 32)
    assert g.total_area() == pytest.approx(1.0)


def test_degenerate_error_names_face():
    err = DegenerateFaceError(7, 0.0)
    assert "face 7" in str(err) and err.face == 7
