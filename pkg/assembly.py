#!/usr/bin/env python3
"""
assembly — local-to-global construction and global Gram matrices.

A local collection Sigma on the reference triangle becomes, on level j, the
global collection

  sigma_{j,x} = mu(x; T_j) * sigma_{lambda_T(x)} o lambda_T   on each T in T_j with T ∋ x

for every x not on Gamma with lambda_T(x) in the index set of Sigma. Columns
are stored unscaled (without mu) as exact rationals over a nodal basis:

  quadratic collections (N, N_f, Theta, Xi):  nodal basis of V_{j+1}, i.e. the
      quadratic Lagrange basis on T_{j+1}, dofs = vertices of T_{j+2} off Gamma
  linear collections (N_tilde, Phi_tilde):    hat functions on T_{j+1},
      dofs = vertices of T_{j+1} off Gamma

so Xi assembled on T_j is the collection called Xi_{j+1} elsewhere. The patch
volume S_x = sum of vol(T) over T ∋ x is kept per index point; mu = S_x^(-1/2).
"""

from __future__ import annotations

import functools
import logging
import os
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.sparse

import ref_element as ref
from mesh_hierarchy import MeshHierarchy

logger = logging.getLogger("femwave")

DENSE_LIMIT = int(os.environ.get("FEMWAVE_DENSE_LIMIT", "5000"))

QUADRATIC = "quadratic"
LINEAR = "linear"


class LevelCapError(ValueError):
    """A level or size beyond what a dense or capped computation allows."""


# --- Exact sparse matrices ---

class SparseMatrix:
    """Index-pair -> exact scalar map. Zero entries are not stored."""

    def __init__(self, shape, data=None):
        self.shape = tuple(shape)
        self._data = {}
        for (i, j), v in (data or {}).items():
            self[i, j] = v

    def __getitem__(self, key):
        return self._data.get(key, Fraction(0))

    def __setitem__(self, key, value):
        if value:
            self._data[key] = value
        else:
            self._data.pop(key, None)

    def __contains__(self, key):
        return key in self._data

    def __eq__(self, other):
        return isinstance(other, SparseMatrix) and self.shape == other.shape \
            and self._data == other._data

    def add(self, i, j, value):
        self[i, j] = self._data.get((i, j), 0) + value

    def items(self):
        return self._data.items()

    @property
    def nnz(self) -> int:
        return len(self._data)

    def rows(self) -> dict:
        out = defaultdict(dict)
        for (i, j), v in self._data.items():
            out[i][j] = v
        return out

    def columns(self) -> dict:
        out = defaultdict(dict)
        for (i, j), v in self._data.items():
            out[j][i] = v
        return out

    def __matmul__(self, other: "SparseMatrix") -> "SparseMatrix":
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shapes {self.shape} and {other.shape} do not align")
        rows = other.rows()
        out = {}
        for (i, k), v in self._data.items():
            for j, w in rows.get(k, {}).items():
                out[i, j] = out.get((i, j), 0) + v * w
        return SparseMatrix((self.shape[0], other.shape[1]), out)

    def transpose(self) -> "SparseMatrix":
        m = SparseMatrix(self.shape[::-1])
        m._data = {(j, i): v for (i, j), v in self._data.items()}
        return m

    def to_scipy(self, row_scale=None, col_scale=None) -> scipy.sparse.csr_matrix:
        if self._data:
            keys = np.array(list(self._data.keys()), dtype=np.int64)
            vals = np.array([float(v) for v in self._data.values()])
        else:
            keys = np.zeros((0, 2), dtype=np.int64)
            vals = np.zeros(0)
        if row_scale is not None:
            vals = vals * np.asarray(row_scale)[keys[:, 0]]
        if col_scale is not None:
            vals = vals * np.asarray(col_scale)[keys[:, 1]]
        return scipy.sparse.coo_matrix((vals, (keys[:, 0], keys[:, 1])), shape=self.shape).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()


# --- Global collections ---

@dataclass(frozen=True, eq=False)
class GlobalCollection:
    name: str
    level: int
    space: str
    hierarchy: MeshHierarchy
    local: ref.LocalCollection
    index_points: tuple
    patch_volumes: tuple
    row_dofs: tuple
    vectors: SparseMatrix
    incidence: tuple

    def __len__(self):
        return len(self.index_points)

    @property
    def representation_level(self) -> int:
        """Level whose vertices carry the representation dofs."""
        return self.level + (2 if self.space == QUADRATIC else 1)

    def coordinates(self) -> list:
        vertices = self.hierarchy.levels[self.representation_level].vertices
        return [vertices[x] for x in self.index_points]

    @property
    def mu(self) -> np.ndarray:
        return np.array([float(s) for s in self.patch_volumes]) ** -0.5

    def matrix(self, scaled=False) -> scipy.sparse.csc_matrix:
        return self.vectors.to_scipy(col_scale=self.mu if scaled else None).tocsc()


@functools.lru_cache(maxsize=None)
def _reference_gram(a: ref.LocalCollection, b: ref.LocalCollection) -> ref.RefGram:
    return ref.gram(a, b)


def assemble(h: MeshHierarchy, j: int, local: ref.LocalCollection) -> GlobalCollection:
    """Global collection of `local` on level j."""
    linear = local.is_linear
    space = LINEAR if linear else QUADRATIC
    rep_nodes = ref.COARSE_NODES if linear else ref.FINE_NODES
    values = local.coarse_table() if linear else local.fine_table()
    rep_level = j + (1 if linear else 2)
    h.require(rep_level + 1)

    mesh = h.levels[j]
    gamma = h.levels[rep_level].gamma_vertices
    table = h.node_table(j, rep_nodes)
    slot_of = {p: i for i, p in enumerate(rep_nodes)}
    index_slots = [slot_of[lam] for lam in local.index_set]

    index_points = sorted({int(table[t, s]) for t in range(len(mesh.triangles))
                           for s in index_slots} - gamma)
    col_of = {x: c for c, x in enumerate(index_points)}
    row_dofs = h.node_set(rep_level)
    row_of = {v: r for r, v in enumerate(row_dofs)}

    traces = {}
    patch = defaultdict(Fraction)
    incidence = []
    for t in range(len(mesh.triangles)):
        ids = table[t]
        area = mesh.areas[t]
        inc = []
        for s, slot in enumerate(index_slots):
            x = int(ids[slot])
            if x in gamma:
                continue
            col = col_of[x]
            inc.append((col, s))
            patch[x] += area
            for p, v in enumerate(values[s]):
                vid = int(ids[p])
                if vid in gamma:
                    if v:
                        raise ref.ConstructionError(
                            f"{local.name}: function at vertex {x} is nonzero at Gamma vertex {vid}")
                    continue
                key = (row_of[vid], col)
                seen = traces.setdefault(key, v)
                if seen != v:
                    raise ref.ConstructionError(
                        f"{local.name} on level {j}: function at vertex {x} has traces {seen} "
                        f"and {v} at vertex {vid} from adjacent triangles")
        incidence.append(tuple(inc))

    vectors = SparseMatrix((len(row_dofs), len(index_points)), traces)
    logger.debug("assembled %s on level %d: %d functions, %d nonzeros",
                 local.name, j, len(index_points), vectors.nnz)
    return GlobalCollection(local.name, j, space, h, local, tuple(index_points),
                            tuple(patch[x] for x in index_points), tuple(row_dofs),
                            vectors, tuple(incidence))


# --- Global Gram matrices ---

@dataclass(frozen=True, eq=False)
class GlobalGram:
    """<rows, cols> in L2(Omega); `unscaled` holds sum vol(T) * RefGram without mu."""

    rows: GlobalCollection
    cols: GlobalCollection
    unscaled: SparseMatrix

    def entry(self, i: int, k: int) -> float:
        return float(self.unscaled[i, k]) / float(self.rows.patch_volumes[i] * self.cols.patch_volumes[k]) ** 0.5

    def is_identity(self) -> bool:
        """Exact test of <rows, cols> = Id."""
        if self.rows.index_points != self.cols.index_points:
            return False
        if self.unscaled.nnz != len(self.rows):
            return False
        return all(i == k and v == self.rows.patch_volumes[i] for (i, k), v in self.unscaled.items())

    def is_zero(self) -> bool:
        return self.unscaled.nnz == 0

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return self.unscaled.to_scipy(self.rows.mu, self.cols.mu)

    def to_dense(self) -> np.ndarray:
        n = self.unscaled.shape[0] * self.unscaled.shape[1]
        if n > DENSE_LIMIT ** 2:
            raise LevelCapError(f"Gram of shape {self.unscaled.shape} exceeds the dense limit")
        return self.to_scipy().toarray()

    def extreme_eigenvalues(self) -> tuple:
        """Extreme eigenvalues of the symmetric part."""
        g = self.to_dense()
        w = scipy.linalg.eigvalsh((g + g.T) / 2)
        return float(w[0]), float(w[-1])


def global_gram(a: GlobalCollection, b: GlobalCollection) -> GlobalGram:
    """<a, b> accumulated triangle by triangle from the reference Gram."""
    if a.hierarchy is not b.hierarchy or a.level != b.level:
        raise ValueError(f"level mismatch: {a.name} on level {a.level}, {b.name} on level {b.level}")
    r = _reference_gram(a.local, b.local).entries
    mesh = a.hierarchy.levels[a.level]
    h = SparseMatrix((len(a), len(b)))
    for t, (inc_a, inc_b) in enumerate(zip(a.incidence, b.incidence)):
        area = mesh.areas[t]
        for ca, sa in inc_a:
            row = r[sa]
            for cb, sb in inc_b:
                if row[sb]:
                    h.add(ca, cb, area * row[sb])
    return GlobalGram(a, b, h)


def reference_extremes(a: ref.LocalCollection, b: ref.LocalCollection | None = None) -> tuple:
    """Extreme eigenvalues of the symmetric part of <a, b>/vol(T)."""
    g = _reference_gram(a, b or a).as_array()
    w = scipy.linalg.eigvalsh((g + g.T) / 2)
    return float(w[0]), float(w[-1])


# --- Angles ---

def generalized_singular_values(g_aa, g_ab, g_bb) -> np.ndarray:
    """Singular values of L_a^-1 G_ab L_b^-T with G_aa = L_a L_a^T, G_bb = L_b L_b^T.

    These are the cosines of the principal angles between span a and span b.
    """
    la = scipy.linalg.cholesky(g_aa, lower=True)
    lb = scipy.linalg.cholesky(g_bb, lower=True)
    x = scipy.linalg.solve_triangular(la, g_ab, lower=True)
    x = scipy.linalg.solve_triangular(lb, x.T, lower=True).T
    return scipy.linalg.svdvals(x)


def max_cosine(a: GlobalCollection, b: GlobalCollection) -> float:
    """Cosine of the smallest angle between span a and span b."""
    return float(generalized_singular_values(global_gram(a, a).to_dense(),
                                             global_gram(a, b).to_dense(),
                                             global_gram(b, b).to_dense())[0])


def reference_max_cosine(a: ref.LocalCollection, b: ref.LocalCollection) -> float:
    return float(generalized_singular_values(_reference_gram(a, a).as_array(),
                                             _reference_gram(a, b).as_array(),
                                             _reference_gram(b, b).as_array())[0])


def infsup_bound(h: MeshHierarchy, j: int) -> float:
    """Lower bound ||<N,N~>^-1||^-1 / sqrt(||<N,N>|| ||<N~,N~>||) on level j."""
    data = ref.reference_data()
    n = assemble(h, j, data.n)
    nt = assemble(h, j, data.n_tilde)
    if len(n) > DENSE_LIMIT:
        raise LevelCapError(f"{len(n)} functions on level {j} exceed the dense limit {DENSE_LIMIT}")
    if not len(n):
        raise ValueError(f"level {j} has no degrees of freedom")
    cross = scipy.linalg.svdvals(global_gram(n, nt).to_dense())
    if cross[-1] <= 1e-14 * cross[0]:
        raise ref.ConstructionError(f"<N_{j}, N~_{j}> is singular")
    norm_n = scipy.linalg.eigvalsh(global_gram(n, n).to_dense())[-1]
    norm_nt = scipy.linalg.eigvalsh(global_gram(nt, nt).to_dense())[-1]
    return float(cross[-1] / np.sqrt(norm_n * norm_nt))
