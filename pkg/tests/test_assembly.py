"""Tests for assembly — local-to-global construction and global Grams.

Covers:
- SparseMatrix: exact storage, products, scipy conversion
- assemble: index points, representation dofs, patch volumes, Gamma handling
- global_gram: biorthogonality on every level, level mismatch
- Gram bounds: global extremes within the reference ones
- Angles and the inf-sup bound
"""

from fractions import Fraction

import numpy as np
import pytest

import assembly
import ref_element as ref
from assembly import LevelCapError, SparseMatrix, assemble, global_gram
from ref_element import LocalCollection, RefFunction


# --- Tests: SparseMatrix ---

class TestSparseMatrix:

    def test_zeros_not_stored(self):
        m = SparseMatrix((2, 2), {(0, 0): Fraction(1, 3), (1, 1): 0})
        assert m.nnz == 1
        assert m[1, 1] == 0
        m[0, 0] = 0
        assert m.nnz == 0

    def test_add_accumulates(self):
        m = SparseMatrix((1, 1))
        m.add(0, 0, Fraction(1, 2))
        m.add(0, 0, Fraction(1, 3))
        assert m[0, 0] == Fraction(5, 6)

    def test_matmul_exact(self):
        a = SparseMatrix((1, 2), {(0, 0): Fraction(1, 3), (0, 1): Fraction(2, 3)})
        b = SparseMatrix((2, 1), {(0, 0): 3, (1, 0): Fraction(3, 2)})
        assert (a @ b)[0, 0] == 2

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError):
            SparseMatrix((2, 3)) @ SparseMatrix((2, 3))

    def test_transpose_and_columns(self):
        m = SparseMatrix((2, 3), {(0, 2): 5, (1, 0): 7})
        t = m.transpose()
        assert t.shape == (3, 2)
        assert t[2, 0] == 5
        assert m.columns()[0] == {1: 7}
        assert m.rows()[0] == {2: 5}

    def test_to_scipy_scaled(self):
        m = SparseMatrix((2, 2), {(0, 1): Fraction(1, 2), (1, 0): 2})
        s = m.to_scipy(row_scale=[2.0, 1.0], col_scale=[1.0, 3.0]).toarray()
        assert np.allclose(s, [[0, 3.0], [2.0, 0]])

    def test_empty_to_scipy(self):
        assert SparseMatrix((3, 2)).to_dense().shape == (3, 2)

    def test_equality(self):
        assert SparseMatrix((1, 1), {(0, 0): 1}) == SparseMatrix((1, 1), {(0, 0): Fraction(1)})
        assert SparseMatrix((1, 1)) != SparseMatrix((1, 2))


# --- Tests: assemble ---

class TestAssemble:

    def test_nodal_quadratic_on_unit_square(self, square, data):
        n = assemble(square, 0, data.n)
        assert len(n) == 1
        assert n.space == assembly.QUADRATIC
        assert n.representation_level == 2
        assert n.coordinates() == [(Fraction(1, 2), Fraction(1, 2))]
        assert n.patch_volumes == (1,)
        assert n.vectors.shape == (9, 1)

    def test_diagonal_bubble_values(self, square, data):
        n = assemble(square, 0, data.n)
        row_of = {v: r for r, v in enumerate(n.row_dofs)}
        vertices = square.levels[2].vertices
        values = {vertices[v]: n.vectors[row_of[v], 0] for v in n.row_dofs}
        q = Fraction(1, 4)
        assert values[(2 * q, 2 * q)] == 1
        assert values[(q, q)] == Fraction(3, 4)
        assert values[(2 * q, q)] == Fraction(1, 2)

    def test_linear_collection(self, square, data):
        nt = assemble(square, 1, data.n_tilde)
        assert nt.space == assembly.LINEAR
        assert nt.representation_level == 2
        assert nt.vectors.shape == (len(square.node_set(2)), len(nt))

    def test_nodal_collections_share_index_points(self, lshape, data):
        for j in range(2):
            n = assemble(lshape, j, data.n)
            nt = assemble(lshape, j, data.n_tilde)
            assert n.index_points == nt.index_points == lshape.node_set(j + 1)

    def test_theta_xi_split_fine_dofs(self, lshape, data):
        for j in range(2):
            theta = assemble(lshape, j, data.theta)
            xi = assemble(lshape, j, data.xi)
            assert len(theta) + len(xi) == len(lshape.node_set(j + 2))
            assert not set(theta.index_points) & set(xi.index_points)

    def test_patch_volumes_match_mesh(self, lshape, data):
        from mesh_hierarchy import patch_volume
        n = assemble(lshape, 0, data.n)
        for x, s in zip(n.coordinates(), n.patch_volumes):
            assert s == patch_volume(lshape, 0, x)

    def test_mu(self, square, data):
        theta = assemble(square, 1, data.theta)
        assert np.allclose(theta.mu, [float(s) ** -0.5 for s in theta.patch_volumes])

    def test_nonzero_on_gamma_rejected(self, square):
        functions = {m: RefFunction(ref.BASIS_N, (1, 1, 1) + tuple(int(m == p) for p in ref.MIDPOINTS))
                     for m in ref.MIDPOINTS}
        with pytest.raises(ref.ConstructionError, match="Gamma"):
            assemble(square, 0, LocalCollection("leaky", functions))

    def test_hierarchy_too_shallow(self, data):
        from mesh_hierarchy import build_hierarchy, bundled_mesh
        h = build_hierarchy(bundled_mesh("unit_square"), 1)
        with pytest.raises(ValueError):
            assemble(h, 0, data.theta)

    def test_neumann_keeps_boundary_functions(self, neumann_square, data):
        n = assemble(neumann_square, 0, data.n)
        assert len(n) == len(neumann_square.levels[1].vertices) == 9


# --- Tests: global Grams ---

class TestGlobalGram:

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_theta_phi_identity_square(self, square_deep, data, j):
        g = global_gram(assemble(square_deep, j, data.theta), assemble(square_deep, j, data.phi_tilde))
        assert g.is_identity()

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_theta_phi_identity_l_shape(self, lshape_deep, data, j):
        g = global_gram(assemble(lshape_deep, j, data.theta), assemble(lshape_deep, j, data.phi_tilde))
        assert g.is_identity()
        if j < 2:
            assert np.allclose(g.to_dense(), np.eye(len(g.rows)))

    def test_neumann_identity(self, neumann_square, data):
        g = global_gram(assemble(neumann_square, 0, data.theta),
                        assemble(neumann_square, 0, data.phi_tilde))
        assert g.is_identity()

    def test_not_identity(self, square, data):
        assert not global_gram(assemble(square, 1, data.n), assemble(square, 1, data.n)).is_identity()

    def test_entry_is_scaled(self, square, data):
        n = assemble(square, 1, data.n)
        g = global_gram(n, n)
        assert g.entry(0, 0) == pytest.approx(g.to_dense()[0, 0])

    def test_level_mismatch(self, square, data):
        with pytest.raises(ValueError):
            global_gram(assemble(square, 0, data.n), assemble(square, 1, data.n))

    def test_symmetric(self, lshape, data):
        n = assemble(lshape, 1, data.n)
        g = global_gram(n, n).to_dense()
        assert np.allclose(g, g.T)

    def test_dense_limit(self, square, data, monkeypatch):
        monkeypatch.setattr(assembly, "DENSE_LIMIT", 2)
        n = assemble(square, 1, data.n)
        with pytest.raises(LevelCapError):
            global_gram(n, n).to_dense()


class TestGramBounds:

    @pytest.mark.parametrize("name", ["N", "N_tilde", "Theta", "Xi"])
    def test_within_reference_extremes(self, lshape_deep, data, name):
        local = data.collection(name)
        lo_ref, hi_ref = assembly.reference_extremes(local)
        for j in range(3):
            coll = assemble(lshape_deep, j, local)
            lo, hi = global_gram(coll, coll).extreme_eigenvalues()
            assert lo_ref - 1e-10 <= lo <= hi <= hi_ref + 1e-10

    # Theta_j + Xi_{j+1} spans V_{j+1}: levels 1..3
    @pytest.mark.parametrize("fixture", ["square_deep", "lshape_deep"])
    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_union_within_reference_extremes(self, fixture, j, data, request):
        h = request.getfixturevalue(fixture)
        union = ref.union(data.theta, data.xi)
        lo_ref, hi_ref = assembly.reference_extremes(union)
        coll = assemble(h, j, union)
        lo, hi = global_gram(coll, coll).extreme_eigenvalues()
        assert lo_ref - 1e-10 <= lo <= hi <= hi_ref + 1e-10
        assert lo_ref > 0

    def test_reference_extremes_of_mass(self, data):
        lo, hi = assembly.reference_extremes(data.n)
        w = np.linalg.eigvalsh(np.array(ref.P2_MASS, dtype=float))
        assert lo == pytest.approx(w[0])
        assert hi == pytest.approx(w[-1])


# --- Tests: angles and inf-sup ---

class TestAngles:

    def test_identical_spans(self):
        g = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert np.allclose(assembly.generalized_singular_values(g, g, g), [1.0, 1.0])

    def test_orthogonal_spans(self):
        i = np.eye(2)
        assert np.allclose(assembly.generalized_singular_values(i, np.zeros((2, 2)), i), 0.0)

    def test_theta_xi_angle_below_one(self, data):
        assert 0 < assembly.reference_max_cosine(data.theta, data.xi) < 1

    def test_global_theta_xi_angle(self, square, data):
        cos = assembly.max_cosine(assemble(square, 1, data.theta), assemble(square, 1, data.xi))
        assert 0 < cos < 1

    @pytest.mark.parametrize("fixture", ["square_deep", "lshape_deep"])
    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_global_cosine_below_local(self, fixture, j, data, request):
        h = request.getfixturevalue(fixture)
        local = assembly.reference_max_cosine(data.theta, data.xi)
        cos = assembly.max_cosine(assemble(h, j, data.theta), assemble(h, j, data.xi))
        assert cos <= local + 1e-10


class TestInfSup:

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_positive_on_square(self, square, j):
        assert assembly.infsup_bound(square, j) > 0

    def test_positive_on_l_shape(self, lshape):
        assert assembly.infsup_bound(lshape, 1) > 0

    def test_dense_limit(self, square, monkeypatch):
        monkeypatch.setattr(assembly, "DENSE_LIMIT", 5)
        with pytest.raises(LevelCapError):
            assembly.infsup_bound(square, 1)
