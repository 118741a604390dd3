#!/usr/bin/env python3
"""
wavelets — quadratic wavelets with two vanishing moments and their transforms.

Levels follow the nodal spaces: V_j is the continuous piecewise quadratics on
T_j vanishing on Gamma, with one dof per vertex of T_{j+1} off Gamma.

  level 0      Psi_0 = N_0, the nodal basis of V_0
  level j+1    Psi_{j+1} = Xi_{j+1} - <Xi_{j+1}, Phi~_j> Theta_j, built on T_j

Wavelet columns are stored unscaled (without the patch factors mu) as exact
rationals over the nodal basis of their own level. The two-level matrix of
level j is M_j = [P_j, Psi_{j+1}], with P_j the prolongation V_j -> V_{j+1};
synthesis up to J applies M_{J-1} ... M_0 from coarse to fine. Normalization
belongs to the norm in use and is applied by the spectral module.
"""

from __future__ import annotations

import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

import ref_element as ref
from assembly import (DENSE_LIMIT, LevelCapError, SparseMatrix, assemble, generalized_singular_values,
                      global_gram)
from mesh_hierarchy import MeshHierarchy

logger = logging.getLogger("femwave")

DUAL_LEVEL_CAP = int(os.environ.get("FEMWAVE_DUAL_LEVEL_CAP", "6"))

SCALING = "scaling"
EDGE = "edge"
INTERIOR = "interior"

# nodal functions per wavelet on a patch where every vertex has valence 6
SUPPORT_SIZES = {EDGE: 13, INTERIOR: 15}

__all__ = [
    "DUAL_LEVEL_CAP", "LevelCapError", "WaveletLevel", "TwoLevelTransform", "DualTwoLevelTransform",
    "LevelScaling", "MultilevelTransform", "AngleConstants", "build_wavelets", "two_level",
    "build_transform", "multilevel_synthesis", "multilevel_analysis", "dual_two_level",
    "angle_constants", "vanishing_moments", "orthogonality_defect", "SUPPORT_SIZES",
]


# --- Wavelet levels ---

@dataclass(frozen=True, eq=False)
class WaveletLevel:
    """Psi_level over the nodal basis of V_level.

    correction holds the unscaled <Xi, Phi~> used to build the level (None on level 0).
    """

    level: int
    hierarchy: MeshHierarchy
    index_points: tuple
    type_tags: tuple
    patch_volumes: tuple
    row_dofs: tuple
    vectors: SparseMatrix
    correction: SparseMatrix | None = None

    def __len__(self):
        return len(self.index_points)

    @property
    def moment_order(self) -> int:
        return 0 if self.level == 0 else 2

    @property
    def mu(self) -> np.ndarray:
        return np.array([float(s) for s in self.patch_volumes]) ** -0.5

    def matrix(self, scaled=False) -> scipy.sparse.csc_matrix:
        return self.vectors.to_scipy(col_scale=self.mu if scaled else None).tocsc()

    @cached_property
    def columns(self) -> dict:
        return self.vectors.columns()

    def support_sizes(self) -> list:
        """Number of nodal functions in each wavelet."""
        cols = self.columns
        return [len(cols.get(k, ())) for k in range(len(self))]

    def support_histogram(self) -> dict:
        """{type tag: {support size: count}}."""
        out = {}
        for tag, size in zip(self.type_tags, self.support_sizes()):
            out.setdefault(tag, Counter())[size] += 1
        return {tag: dict(sorted(c.items())) for tag, c in sorted(out.items())}

    @cached_property
    def node_table(self) -> np.ndarray:
        """Vertex ids of the quadratic nodes of each triangle of T_level."""
        return self.hierarchy.node_table(self.level, ref.COARSE_NODES)

    @cached_property
    def _triangles_of_dof(self) -> dict:
        out = {}
        for t, ids in enumerate(self.node_table):
            for i in ids:
                out.setdefault(int(i), []).append(t)
        return out

    def support_triangles(self, k: int) -> list:
        """Triangles of T_level on which wavelet k does not vanish."""
        return sorted({t for r in self.columns.get(k, ())
                       for t in self._triangles_of_dof[self.row_dofs[r]]})

    def avoids_gamma(self, k: int) -> bool:
        """Whether no support triangle of wavelet k touches Gamma."""
        mesh = self.hierarchy.levels[self.level]
        return not any(v in mesh.gamma_vertices
                       for t in self.support_triangles(k) for v in mesh.triangles[t])

    @cached_property
    def _valence(self) -> Counter:
        return Counter(int(v) for tri in self.hierarchy.levels[self.level].triangles for v in tri)

    def regular_support(self, k: int) -> bool:
        """Whether every vertex of the support of wavelet k has six triangles of T_level around it."""
        mesh = self.hierarchy.levels[self.level]
        return all(self._valence[int(v)] == 6 for t in self.support_triangles(k) for v in mesh.triangles[t])

    def irregular_supports(self) -> list:
        """(index, tag, size) of wavelets away from Gamma on regular patches whose size is not SUPPORT_SIZES[tag]."""
        sizes = self.support_sizes()
        return [(k, tag, sizes[k]) for k, tag in enumerate(self.type_tags)
                if self.level and self.avoids_gamma(k) and self.regular_support(k)
                and sizes[k] != SUPPORT_SIZES[tag]]


def _type_tags(xi) -> tuple:
    edge_slots = {s for s, lam in enumerate(xi.local.index_set) if lam in ref.EDGE_QUARTERS}
    tags = [None] * len(xi)
    for inc in xi.incidence:
        for col, s in inc:
            tags[col] = EDGE if s in edge_slots else INTERIOR
    return tuple(tags)


def build_wavelets(h: MeshHierarchy, level: int, verify: bool = False) -> WaveletLevel:
    """Psi_level; level 0 is N_0, level j+1 is built from Theta_j, Xi_{j+1}, Phi~_j on T_j.

    With verify, <Psi, Phi~_j> = 0 is recomputed exactly through an independent Gram.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    data = ref.reference_data()
    if level == 0:
        # Psi_0 = N_0, stored over its own nodal basis
        n = assemble(h, 0, data.n)
        dofs = h.node_set(1)
        if n.index_points != dofs:
            raise ref.ConstructionError("index points of N_0 differ from the V_0 dofs")
        identity = SparseMatrix((len(dofs), len(dofs)), {(k, k): Fraction(1) for k in range(len(dofs))})
        return WaveletLevel(0, h, dofs, (SCALING,) * len(dofs), n.patch_volumes, dofs, identity)

    j = level - 1
    theta = assemble(h, j, data.theta)
    xi = assemble(h, j, data.xi)
    phi = assemble(h, j, data.phi_tilde)
    if not global_gram(theta, phi).is_identity():
        raise ref.ConstructionError(f"<Theta_{j}, Phi~_{j}> is not the identity")

    correction = global_gram(xi, phi).unscaled
    theta_cols = theta.vectors.columns()
    vectors = dict(xi.vectors.items())
    for (x, y), v in correction.items():
        coef = v / theta.patch_volumes[y]
        for r, t in theta_cols.get(y, {}).items():
            vectors[r, x] = vectors.get((r, x), 0) - coef * t

    wl = WaveletLevel(level, h, xi.index_points, _type_tags(xi), xi.patch_volumes, xi.row_dofs,
                      SparseMatrix(xi.vectors.shape, vectors), correction)
    logger.info("level %d: %d wavelets (%s)", level, len(wl),
                ", ".join(f"{k} {v}" for k, v in sorted(Counter(wl.type_tags).items())))
    if verify:
        defect = orthogonality_defect(wl)
        if defect.nnz:
            raise ref.ConstructionError(f"Psi_{level} is not orthogonal to Phi~_{j}: "
                                        f"{defect.nnz} nonzero inner products")
    return wl


def orthogonality_defect(wl: WaveletLevel) -> SparseMatrix:
    """Exact <Psi_{j+1}, Phi~_j> through the V_{j+1} x V~_j Gram; empty when biorthogonal."""
    if wl.level == 0:
        raise ValueError("level 0 has no dual complement")
    data = ref.reference_data()
    j = wl.level - 1
    fine = assemble(wl.hierarchy, j, data.n_f)
    hats = assemble(wl.hierarchy, j, data.n_tilde)
    phi = assemble(wl.hierarchy, j, data.phi_tilde)
    cross = global_gram(fine, hats).unscaled
    return wl.vectors.transpose() @ cross @ phi.vectors


def vanishing_moments(h: MeshHierarchy, level: int, wl: WaveletLevel | None = None) -> list:
    """Exact (int psi, int psi x, int psi y) for every wavelet of `level` whose support avoids Gamma.

    Returns a list of (wavelet index, type tag, moments).
    """
    if level < 1:
        raise ValueError("wavelets with vanishing moments start at level 1")
    wl = wl or build_wavelets(h, level)
    mesh = h.levels[level]
    weights = ref.p2_p1_moments()
    row_of = {v: r for r, v in enumerate(wl.row_dofs)}
    out = []
    for k in range(len(wl)):
        if not wl.avoids_gamma(k):
            continue
        col = wl.columns.get(k, {})
        moments = [Fraction(0)] * 3
        for t in wl.support_triangles(k):
            corners = [mesh.vertices[v] for v in mesh.triangles[t]]
            area = mesh.areas[t]
            for a, vid in enumerate(wl.node_table[t]):
                value = col.get(row_of.get(int(vid)), 0)
                if not value:
                    continue
                for kk, (x, y) in enumerate(corners):
                    w = area * value * weights[a][kk]
                    moments[0] += w
                    moments[1] += w * x
                    moments[2] += w * y
        out.append((k, wl.type_tags[k], tuple(moments)))
    return out


# --- Two-level transforms ---

@dataclass(frozen=True, eq=False)
class TwoLevelTransform:
    """M_j = [M0 M1] from (V_j nodal basis, Psi_{j+1}) to the V_{j+1} nodal basis.

    coarse_rows and new_rows are the positions, among the V_{j+1} dofs, of the
    vertices of T_{j+1} and of the vertices added by the refinement.
    """

    level: int
    m0: scipy.sparse.csc_matrix
    m1: scipy.sparse.csc_matrix
    coarse_rows: tuple = ()
    new_rows: tuple = ()

    @cached_property
    def matrix(self) -> scipy.sparse.csc_matrix:
        return scipy.sparse.hstack([self.m0, self.m1], format="csc")

    @cached_property
    def lu(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ref.ConstructionError(f"two-level matrix of level {self.level} is {m.shape}, not square")
        try:
            return scipy.sparse.linalg.splu(m)
        except RuntimeError as e:
            raise ref.ConstructionError(f"two-level matrix of level {self.level} is singular: {e}")

    @property
    def coarse_size(self) -> int:
        return self.m0.shape[1]

    def apply(self, coarse, detail):
        return self.m0 @ coarse + self.m1 @ detail

    def apply_transpose(self, v):
        return self.m0.T @ v, self.m1.T @ v

    def solve(self, v):
        """M_j^-1 v split into (coarse, detail)."""
        z = self.lu.solve(np.asarray(v, dtype=float)) if len(v) else np.zeros(0)
        return z[:self.coarse_size], z[self.coarse_size:]


def _injection(n, rows) -> scipy.sparse.csc_matrix:
    return scipy.sparse.csc_matrix((np.ones(len(rows)), (np.asarray(rows, dtype=np.int64), np.arange(len(rows)))),
                                   shape=(n, len(rows)))


@dataclass(frozen=True, eq=False)
class DualTwoLevelTransform:
    """M~_j = M_j^-T in factored form.

    R_0, R_1 inject the coarse and the new nodal functions into V_{j+1}. The
    prolongation interpolates at the coarse nodes (R_0^T M_{j,0} = Id), so
    A = [M_{j,0} R_1] has the explicit inverse

      A^-1 v = [R_0^T v; R_1^T (v - M_{j,0} R_0^T v)]

    and M_j = A [[Id, C], [0, D]] with C = R_0^T M_{j,1}, D = R_1^T (M_{j,1} - M_{j,0} C).
    Hence M~_j = A^-T [[Id, 0], [-D^-T C^T, D^-T]]. D is only factored when it
    is not the identity.
    """

    primal: TwoLevelTransform

    @property
    def level(self) -> int:
        return self.primal.level

    @property
    def size(self) -> int:
        return self.primal.m0.shape[0]

    @cached_property
    def r0(self) -> scipy.sparse.csc_matrix:
        return _injection(self.size, self.primal.coarse_rows)

    @cached_property
    def r1(self) -> scipy.sparse.csc_matrix:
        """R_{j,1}: the nodal functions at the new vertices of T_{j+1}."""
        return _injection(self.size, self.primal.new_rows)

    @cached_property
    def c(self) -> scipy.sparse.csc_matrix:
        return (self.r0.T @ self.primal.m1).tocsc()

    @cached_property
    def d(self) -> scipy.sparse.csc_matrix:
        return (self.r1.T @ (self.primal.m1 - self.primal.m0 @ self.c)).tocsc()

    @cached_property
    def d_lu(self):
        d = self.d
        if d.shape[0] != d.shape[1]:
            raise ref.ConstructionError(f"detail block of level {self.level} is {d.shape}, not square")
        diff = d - scipy.sparse.identity(d.shape[0], format="csc")
        if not diff.nnz or abs(diff).max() == 0:
            return None
        try:
            return scipy.sparse.linalg.splu(d)
        except RuntimeError as e:
            raise ref.ConstructionError(f"two-level matrix of level {self.level} is singular: {e}")

    def check_interpolation(self):
        m0 = self.primal.m0
        defect = self.r0.T @ m0 - scipy.sparse.identity(m0.shape[1], format="csc")
        if defect.nnz and abs(defect).max() > 1e-12:
            raise ref.ConstructionError(f"prolongation of level {self.level} does not interpolate "
                                        f"at the coarse nodes")

    def _solve_d(self, x, trans="N"):
        if self.d_lu is None or not x.shape[0]:
            return x
        return self.d_lu.solve(np.asarray(x, dtype=float), trans=trans)

    def apply(self, coarse, detail):
        coarse = np.asarray(coarse, dtype=float)
        e = self._solve_d(np.asarray(detail, dtype=float) - self.c.T @ coarse, trans="T")
        fine = self.r1 @ e
        return self.r0 @ (coarse - self.primal.m0.T @ fine) + fine

    def apply_transpose(self, v):
        v = np.asarray(v, dtype=float)
        a = self.r0.T @ v
        b = self._solve_d(self.r1.T @ (v - self.primal.m0 @ a))
        return a - self.c @ b, b

    def dense(self) -> np.ndarray:
        n = self.size
        if n > DENSE_LIMIT:
            raise LevelCapError(f"dense M~_{self.level} of size {n} exceeds the dense limit {DENSE_LIMIT}")
        return scipy.linalg.inv(self.primal.matrix.toarray()).T

    def blocks(self) -> tuple:
        """(M~_{j,0}, M~_{j,1}) as dense column blocks."""
        m = self.dense()
        return m[:, :self.primal.coarse_size], m[:, self.primal.coarse_size:]


def two_level(h: MeshHierarchy, j: int, wavelets: WaveletLevel | None = None) -> TwoLevelTransform:
    prolongation = assemble(h, j, ref.reference_data().n)
    wavelets = wavelets or build_wavelets(h, j + 1)
    coarse = set(h.node_set(j + 1))
    fine = h.node_set(j + 2)
    return TwoLevelTransform(j, prolongation.matrix(), wavelets.matrix(),
                             tuple(r for r, v in enumerate(fine) if v in coarse),
                             tuple(r for r, v in enumerate(fine) if v not in coarse))


def dual_two_level(h: MeshHierarchy, j: int, primal: TwoLevelTransform | None = None) -> DualTwoLevelTransform:
    if j + 1 > DUAL_LEVEL_CAP:
        raise LevelCapError(f"dual transform of level {j + 1} is above the cap {DUAL_LEVEL_CAP}")
    dual = DualTwoLevelTransform(primal or two_level(h, j))
    dual.check_interpolation()
    _ = dual.d_lu  # singular M_j fails here rather than on first use
    return dual


# --- Multilevel transforms ---

@dataclass(frozen=True)
class LevelScaling:
    """Factors 2^(-js) for j = 0..levels."""

    s: float
    levels: int

    def __post_init__(self):
        if not -1.5 < self.s < 1.5:
            raise ValueError(f"Sobolev exponent {self.s} not in (-3/2, 3/2)")
        if self.levels < 0:
            raise ValueError("levels must be >= 0")

    @property
    def factors(self) -> tuple:
        return tuple(2.0 ** (-j * self.s) for j in range(self.levels + 1))

    def expand(self, sizes) -> np.ndarray:
        """One factor per coefficient for per-level coefficient counts `sizes`."""
        return np.concatenate([np.full(n, f) for n, f in zip(sizes, self.factors)])


@dataclass(frozen=True, eq=False)
class MultilevelTransform:
    """W: wavelet coefficients on levels 0..J -> nodal coefficients on V_J."""

    hierarchy: MeshHierarchy
    levels: tuple
    transforms: tuple

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def sizes(self) -> tuple:
        return tuple(len(wl) for wl in self.levels)

    @property
    def size(self) -> int:
        return sum(self.sizes)

    def truncated(self, J: int) -> "MultilevelTransform":
        """The transform up to level J <= depth."""
        if not 0 <= J <= self.depth:
            raise ValueError(f"level {J} not in 0..{self.depth}")
        return MultilevelTransform(self.hierarchy, self.levels[:J + 1], self.transforms[:J])

    def split(self, coeffs) -> list:
        if isinstance(coeffs, (list, tuple)) and coeffs and all(np.ndim(c) >= 1 for c in coeffs):
            parts = [np.asarray(c, dtype=float) for c in coeffs]
            if [len(c) for c in parts] != list(self.sizes):
                raise ValueError(f"coefficient sizes {[len(c) for c in parts]} do not match {list(self.sizes)}")
            return parts
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.size:
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape[0]}")
        return np.split(coeffs, np.cumsum(self.sizes)[:-1])

    def synthesize(self, coeffs) -> np.ndarray:
        parts = self.split(coeffs)
        v = parts[0]
        for m, c in zip(self.transforms, parts[1:]):
            v = m.apply(v, c)
        return v

    def adjoint(self, v) -> np.ndarray:
        """W^T v."""
        details = []
        for m in reversed(self.transforms):
            v, d = m.apply_transpose(v)
            details.append(d)
        return np.concatenate([v] + details[::-1])

    def analyze(self, v) -> np.ndarray:
        """W^-1 v."""
        v = np.asarray(v, dtype=float)
        details = []
        for m in reversed(self.transforms):
            v, d = m.solve(v)
            details.append(d)
        return np.concatenate([v] + details[::-1])

    def dual(self) -> "MultilevelTransform":
        if self.depth > DUAL_LEVEL_CAP:
            raise LevelCapError(f"dual transform up to level {self.depth} is above the cap {DUAL_LEVEL_CAP}")
        return MultilevelTransform(self.hierarchy, self.levels,
                                   tuple(DualTwoLevelTransform(m) for m in self.transforms))

    def as_linear_operator(self) -> scipy.sparse.linalg.LinearOperator:
        n = self.size
        return scipy.sparse.linalg.LinearOperator((n, n), matvec=self.synthesize, rmatvec=self.adjoint,
                                                  dtype=float)


def build_transform(h: MeshHierarchy, J: int, threads: int = 1) -> MultilevelTransform:
    """Wavelet levels 0..J and the two-level matrices between them."""
    if J < 0:
        raise ValueError("J must be >= 0")
    h.require(J + 2)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            levels = tuple(pool.map(lambda k: build_wavelets(h, k), range(J + 1)))
    else:
        levels = tuple(build_wavelets(h, k) for k in range(J + 1))
    transforms = tuple(two_level(h, j, levels[j + 1]) for j in range(J))
    logger.info("multilevel transform to level %d: %d coefficients", J, sum(len(wl) for wl in levels))
    return MultilevelTransform(h, levels, transforms)


def multilevel_synthesis(h: MeshHierarchy, J: int, coeffs) -> np.ndarray:
    return build_transform(h, J).synthesize(coeffs)


def multilevel_analysis(h: MeshHierarchy, J: int, v) -> list:
    w = build_transform(h, J)
    return w.split(w.analyze(v))


# --- Angle constants ---

@dataclass(frozen=True)
class AngleConstants:
    level: int
    delta: float
    epsilon: float
    kappa_xi: float
    kappa_psi: float

    @property
    def bound(self) -> float:
        return (1 + 1 / self.delta) / np.sqrt(1 - self.epsilon) * self.kappa_xi

    @property
    def holds(self) -> bool:
        return self.kappa_psi <= self.bound * (1 + 1e-10)


def _kappa(g: np.ndarray) -> float:
    w = scipy.linalg.eigvalsh(g)
    return float(w[-1] / w[0])


def angle_constants(h: MeshHierarchy, j: int) -> AngleConstants:
    """delta_j, epsilon_j, kappa(Xi_{j+1}) and kappa(Psi_{j+1}) in L2, with mu-scaled collections."""
    data = ref.reference_data()
    theta = assemble(h, j, data.theta)
    xi = assemble(h, j, data.xi)
    phi = assemble(h, j, data.phi_tilde)
    if len(theta) + len(xi) > DENSE_LIMIT:
        raise LevelCapError(f"{len(theta) + len(xi)} functions on level {j + 1} exceed the dense limit {DENSE_LIMIT}")
    if not len(theta) or not len(xi):
        raise ValueError(f"level {j} has no interior functions")
    g_tt = global_gram(theta, theta).to_dense()
    g_xx = global_gram(xi, xi).to_dense()
    delta = generalized_singular_values(g_tt, global_gram(theta, phi).to_dense(),
                                        global_gram(phi, phi).to_dense())[-1]
    epsilon = generalized_singular_values(g_tt, global_gram(theta, xi).to_dense(), g_xx)[0]

    wl = build_wavelets(h, j + 1)
    psi = wl.matrix(scaled=True)
    mass = _fine_mass(h, j, wl)
    g_pp = (psi.T @ mass @ psi).toarray()
    return AngleConstants(j, float(delta), float(epsilon), _kappa(g_xx), _kappa(g_pp))


def _fine_mass(h, j, wl) -> scipy.sparse.csr_matrix:
    fine = assemble(h, j, ref.reference_data().n_f)
    if fine.index_points != wl.row_dofs:
        raise ref.ConstructionError(f"V_{j + 1} dofs differ between N_f and Psi_{j + 1}")
    return global_gram(fine, fine).unscaled.to_scipy()
