"""Tests for mesh_hierarchy — mesh input, validation and red refinement.

Covers:
- load_mesh: header, comments, rational coordinates, malformed records
- Triangulation.validate: degenerate, dangling, duplicate, nonconforming, bad Gamma
- refine / build_hierarchy: counts, stable vertex ids, Gamma propagation
- MeshHierarchy: node sets, node tables, require
- node_index_set, patch_volume, scaling_factor
"""

from fractions import Fraction

import numpy as np
import pytest

import mesh_hierarchy as mh
import ref_element as ref
from mesh_hierarchy import MeshError, build_hierarchy, load_mesh, refine
from tests.conftest import SQUARE_TEXT, mesh_text, write_mesh


# --- Tests: loading ---

class TestLoadMesh:

    def test_unit_square(self):
        mesh = load_mesh(SQUARE_TEXT)
        assert len(mesh.vertices) == 4
        assert len(mesh.triangles) == 2
        assert len(mesh.gamma_edges) == 4
        assert mesh.areas == (Fraction(1, 2), Fraction(1, 2))

    def test_comments_and_blank_lines(self):
        text = "# leading comment\n\n" + SQUARE_TEXT.replace("v 1 1", "v 1 1   # corner")
        assert len(load_mesh(text).vertices) == 4

    def test_rational_coordinates(self):
        mesh = mh.bundled_mesh("l_shape")
        assert mesh.vertices[8] == (Fraction(3, 5), Fraction(2, 5))
        assert mesh.vertices[10] == (Fraction(1, 3), Fraction(3, 2))

    def test_missing_header(self):
        with pytest.raises(MeshError) as exc:
            load_mesh("v 0 0\n")
        assert exc.value.line == 1

    def test_empty_document(self):
        with pytest.raises(MeshError):
            load_mesh("# nothing here\n")

    def test_unknown_record(self):
        with pytest.raises(MeshError) as exc:
            load_mesh(SQUARE_TEXT + "q 1 2\n")
        assert exc.value.line == 12

    def test_malformed_coordinates(self):
        with pytest.raises(MeshError) as exc:
            load_mesh(SQUARE_TEXT.replace("v 1 0", "v 1 zero"))
        assert exc.value.line == 3
        assert "line 3" in str(exc.value)

    def test_gamma_edge_out_of_range(self):
        with pytest.raises(MeshError):
            load_mesh(mesh_text(gamma=("0 7",)))

    def test_read_mesh_file(self, tmp_path):
        path = write_mesh(tmp_path / "square.mesh", SQUARE_TEXT)
        assert len(mh.read_mesh_file(path).triangles) == 2

    def test_resolve_bundled_and_path(self, tmp_path):
        assert mh.resolve_mesh("unit_square") == mh.MESH_DIR / "unit_square.mesh"
        path = tmp_path / "other.mesh"
        assert mh.resolve_mesh(str(path)) == path


class TestValidate:

    def test_degenerate_triangle(self):
        text = "femwave-mesh 1\nv 0 0\nv 1 0\nv 2 0\nt 0 1 2\n"
        with pytest.raises(MeshError, match="degenerate"):
            load_mesh(text)

    def test_repeated_vertex_in_triangle(self):
        with pytest.raises(MeshError, match="repeats"):
            load_mesh(SQUARE_TEXT.replace("t 0 1 2", "t 0 1 1"))

    def test_vertex_index_out_of_range(self):
        with pytest.raises(MeshError, match="out of range"):
            load_mesh(SQUARE_TEXT.replace("t 0 1 2", "t 0 1 9"))

    def test_dangling_vertex(self):
        with pytest.raises(MeshError, match="dangling"):
            load_mesh(SQUARE_TEXT.replace("v 0 1\n", "v 0 1\nv 5 5\n"))

    def test_duplicate_coordinates(self):
        text = ("femwave-mesh 1\nv 0 0\nv 1 0\nv 0 1\nv 1 0\nv 1 1\n"
                "t 0 1 2\nt 3 4 2\n")
        with pytest.raises(MeshError):
            load_mesh(text)

    def test_hanging_vertex(self):
        text = ("femwave-mesh 1\nv 0 0\nv 2 0\nv 0 2\nv 1 0\nv 1 -1\n"
                "t 0 1 2\nt 0 4 3\n")
        with pytest.raises(MeshError, match="nonconforming"):
            load_mesh(text)

    def test_gamma_on_interior_edge(self):
        with pytest.raises(MeshError, match="boundary edge"):
            load_mesh(mesh_text(gamma=("0 2",)))

    def test_gamma_on_missing_edge(self):
        with pytest.raises(MeshError):
            load_mesh(mesh_text(gamma=("1 3",)))

    def test_empty_gamma_allowed(self):
        assert not load_mesh(mesh_text(gamma=())).gamma_edges


# --- Tests: refinement ---

class TestRefine:

    def test_counts(self):
        h = build_hierarchy(load_mesh(SQUARE_TEXT), 2)
        assert h.depth == 3
        assert [len(m.triangles) for m in h.levels] == [2, 8, 32]
        assert [len(m.vertices) for m in h.levels] == [4, 9, 25]
        assert [len(m.gamma_edges) for m in h.levels] == [4, 8, 16]

    def test_vertex_ids_are_stable(self):
        h = build_hierarchy(load_mesh(SQUARE_TEXT), 2)
        assert h.levels[1].vertices[:4] == h.levels[0].vertices
        assert h.levels[2].vertices[:9] == h.levels[1].vertices

    def test_refined_meshes_validate(self, lshape):
        for mesh in lshape.levels[:3]:
            mesh.validate()

    def test_areas_split_evenly(self):
        h = build_hierarchy(mh.bundled_mesh("l_shape"), 1)
        coarse, fine = h.levels
        for child, (parent, _) in enumerate(h.parent_maps[1]):
            assert fine.areas[child] == coarse.areas[parent] / 4
        assert sum(fine.areas) == sum(coarse.areas) == 3

    def test_parent_slots(self):
        h = refine(mh.MeshHierarchy.from_triangulation(load_mesh(SQUARE_TEXT)))
        assert [slot for _, slot in h.parent_maps[1]] == [1, 2, 3, 4] * 2

    def test_negative_levels(self):
        with pytest.raises(ValueError):
            build_hierarchy(load_mesh(SQUARE_TEXT), -1)

    def test_neumann_edge_stays_off_gamma(self, lshape):
        fine = lshape.levels[2]
        right = [i for i, (x, y) in enumerate(fine.vertices) if x == 2 and 0 < y < 1]
        assert right
        assert not set(right) & fine.gamma_vertices


class TestHierarchy:

    def test_node_sets_unit_square(self, square):
        assert [len(s) for s in square.node_sets] == [0, 1, 9, 49, 225]

    def test_node_sets_l_shape(self, lshape):
        assert lshape.node_set(0) == (8, 9, 10)

    def test_node_sets_are_sorted(self, lshape):
        for s in lshape.node_sets:
            assert list(s) == sorted(s)

    def test_require(self, square):
        square.require(square.depth)
        with pytest.raises(ValueError):
            square.require(square.depth + 1)

    def test_node_table_coarse_nodes(self, square):
        table = square.node_table(0, ref.COARSE_NODES)
        mesh, fine = square.levels[0], square.levels[1]
        assert table.shape == (2, 6)
        assert np.array_equal(table[:, :3], np.array(mesh.triangles))
        for t, row in enumerate(table):
            for lam, vid in zip(ref.COARSE_NODES, row):
                assert fine.vertices[vid] == mesh.point(t, lam)

    def test_node_table_fine_nodes(self, square):
        table = square.node_table(1, ref.FINE_NODES)
        mesh, finer = square.levels[1], square.levels[3]
        for t, row in enumerate(table):
            for lam, vid in zip(ref.FINE_NODES, row):
                assert finer.vertices[vid] == mesh.point(t, lam)


# --- Tests: index sets and scaling ---

class TestIndexSets:

    def test_midpoints_of_unit_square(self, square):
        points = mh.node_index_set(square, 0, ref.MIDPOINTS)
        assert points == [(Fraction(1, 2), Fraction(1, 2))]

    def test_vertices_of_level_one(self, square):
        assert len(mh.node_index_set(square, 1, ref.VERTICES)) == 1

    def test_level_out_of_range(self, square):
        with pytest.raises(ValueError):
            mh.node_index_set(square, square.depth, ref.VERTICES)

    def test_empty_local_set(self, square):
        assert mh.node_index_set(square, 1, ()) == []

    def test_on_gamma(self):
        mesh = load_mesh(SQUARE_TEXT)
        assert mesh.on_gamma(0, ref.VERTICES[0])
        # triangle 0 is (0, 2, 3): local midpoint 2 is the diagonal midpoint
        assert mesh.on_gamma(0, ref.MIDPOINTS[0])
        assert not mesh.on_gamma(0, ref.MIDPOINTS[2])


class TestScaling:

    def test_patch_volume(self, square):
        assert mh.patch_volume(square, 0, (0, 0)) == 1
        assert mh.patch_volume(square, 0, (1, 0)) == Fraction(1, 2)
        assert mh.patch_volume(square, 1, (Fraction(1, 2), Fraction(1, 2))) == Fraction(3, 4)

    def test_scaling_factor(self, square):
        assert mh.scaling_factor(square, 0, (1, 0)) == pytest.approx(2 ** 0.5)

    def test_point_outside(self, square):
        with pytest.raises(MeshError):
            mh.patch_volume(square, 0, (2, 2))

    def test_scaled_mesh(self):
        mesh = load_mesh(SQUARE_TEXT).scaled(2)
        assert mesh.areas == (2, 2)
