#!/usr/bin/env python3
"""
mesh_hierarchy — conforming triangulations, Dirichlet marking and red refinement.

Mesh file format (ASCII, one record per line, '#' starts a comment):

  femwave-mesh 1          header, first non-blank line
  v x y                   vertex; coordinates decimal ("0.5") or rational ("1/3")
  t i j k                 triangle by 0-based vertex indices
  g i j                   Dirichlet edge; Gamma is the union of these closed edges

Coordinates are kept as exact rationals so that midpoints, node identity and
Gamma membership are exact. Vertex ids are shared by all levels: level j+1
keeps the vertices of level j under the same ids and appends the new edge
midpoints, in the order the triangles of level j are visited.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

import ref_element as ref

logger = logging.getLogger("femwave")

SCRIPT_DIR = Path(__file__).resolve().parent
MESH_DIR = Path(os.environ.get("FEMWAVE_MESH_DIR", str(SCRIPT_DIR / "meshes")))

HEADER = ("femwave-mesh", "1")


class MeshError(ValueError):
    """Invalid mesh input, reported with the offending line and/or entity."""

    def __init__(self, message, line=None, entity=None):
        self.line = line
        self.entity = entity
        where = []
        if line is not None:
            where.append(f"line {line}")
        if entity is not None:
            where.append(str(entity))
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


def _orient(p, q, r):
    """Twice the signed area of (p, q, r)."""
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


# --- Triangulation ---

@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: tuple
    triangles: tuple
    gamma_edges: frozenset

    @cached_property
    def points(self) -> np.ndarray:
        return np.array([[float(x), float(y)] for x, y in self.vertices])

    @cached_property
    def cells(self) -> np.ndarray:
        return np.array(self.triangles, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def areas(self) -> tuple:
        v = self.vertices
        return tuple(abs(_orient(v[a], v[b], v[c])) / 2 for a, b, c in self.triangles)

    @cached_property
    def edges(self) -> dict:
        """Edge (frozenset of two vertex ids) -> triangles containing it."""
        out = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for e in ((a, b), (b, c), (c, a)):
                out.setdefault(frozenset(e), []).append(t)
        return out

    @cached_property
    def gamma_vertices(self) -> frozenset:
        return frozenset(i for e in self.gamma_edges for i in e)

    def on_gamma(self, t: int, lam: ref.BaryPoint) -> bool:
        """Whether the point with barycentrics lam in triangle t lies on Gamma."""
        support = [self.triangles[t][i] for i in range(3) if lam.lam[i] != 0]
        if len(support) == 1:
            return support[0] in self.gamma_vertices
        if len(support) == 2:
            return frozenset(support) in self.gamma_edges
        return False

    def point(self, t: int, lam: ref.BaryPoint) -> tuple:
        """Exact physical coordinates of barycentrics lam in triangle t."""
        corners = [self.vertices[i] for i in self.triangles[t]]
        return (sum((l * c[0] for l, c in zip(lam.lam, corners)), Fraction(0)),
                sum((l * c[1] for l, c in zip(lam.lam, corners)), Fraction(0)))

    def scaled(self, factor) -> "Triangulation":
        factor = Fraction(factor)
        return Triangulation(tuple((x * factor, y * factor) for x, y in self.vertices),
                             self.triangles, self.gamma_edges)

    def validate(self, lines=None):
        """Check conformity and the Gamma invariants. lines maps entities to source lines."""
        lines = lines or {}
        v = self.vertices
        if not self.triangles:
            raise MeshError("mesh has no triangles")
        used = set()
        for t, tri in enumerate(self.triangles):
            line = lines.get(("t", t))
            if len(set(tri)) != 3:
                raise MeshError("triangle repeats a vertex", line, f"triangle {t}")
            for i in tri:
                if not 0 <= i < len(v):
                    raise MeshError(f"vertex index {i} out of range", line, f"triangle {t}")
            if _orient(*(v[i] for i in tri)) == 0:
                raise MeshError("degenerate triangle", line, f"triangle {t}")
            used.update(tri)
        for i in range(len(v)):
            if i not in used:
                raise MeshError("dangling vertex", lines.get(("v", i)), f"vertex {i}")
        if len(set(v)) != len(v):
            raise MeshError("duplicate vertex coordinates")
        for e, owners in self.edges.items():
            if len(owners) > 2:
                raise MeshError("edge shared by more than two triangles", None,
                                f"edge {sorted(e)}")
            if len(owners) == 2:
                a, b = sorted(e)
                c0, c1 = (next(i for i in self.triangles[t] if i not in e) for t in owners)
                if _orient(v[a], v[b], v[c0]) * _orient(v[a], v[b], v[c1]) >= 0:
                    raise MeshError("triangles overlap across a shared edge", None,
                                    f"edge {sorted(e)}")
        self._check_no_hanging_vertices(lines)
        for e in self.gamma_edges:
            a, b = sorted(e)
            if len(self.edges.get(e, ())) != 1:
                raise MeshError("Gamma edge is not a boundary edge of exactly one triangle",
                                lines.get(("g", e)), f"edge {a}-{b}")

    def _check_no_hanging_vertices(self, lines):
        v = self.vertices
        for t, tri in enumerate(self.triangles):
            p, q, r = (v[i] for i in tri)
            sign = 1 if _orient(p, q, r) > 0 else -1
            for i, x in enumerate(v):
                if i in tri:
                    continue
                o = [sign * _orient(p, q, x), sign * _orient(q, r, x), sign * _orient(r, p, x)]
                if min(o) >= 0:
                    raise MeshError("vertex lies inside or on an edge of a triangle it does "
                                    "not belong to (nonconforming)",
                                    lines.get(("v", i)), f"vertex {i}, triangle {t}")


# --- Loading ---

def _parse_record(kind, fields):
    if kind == "v" and len(fields) == 2:
        return tuple(Fraction(f) for f in fields)
    if kind == "t" and len(fields) == 3:
        return tuple(int(f) for f in fields)
    if kind == "g" and len(fields) == 2:
        return tuple(int(f) for f in fields)
    raise ValueError(f"expected {'v x y' if kind == 'v' else 't i j k' if kind == 't' else 'g i j'}")


def load_mesh(text: str) -> Triangulation:
    """Parse and validate a femwave-mesh document."""
    vertices, triangles, gamma = [], [], []
    lines = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if not header_seen:
            if tuple(tokens) != HEADER:
                raise MeshError("expected header 'femwave-mesh 1'", lineno)
            header_seen = True
            continue
        kind, fields = tokens[0], tokens[1:]
        if kind not in ("v", "t", "g"):
            raise MeshError(f"unknown record type {kind!r}", lineno)
        try:
            record = _parse_record(kind, fields)
        except (ValueError, ZeroDivisionError) as e:
            raise MeshError(f"malformed {kind!r} record: {e}", lineno) from None
        if kind == "v":
            lines[("v", len(vertices))] = lineno
            vertices.append(record)
        elif kind == "t":
            lines[("t", len(triangles))] = lineno
            triangles.append(record)
        else:
            lines[("g", frozenset(record))] = lineno
            gamma.append(record)
    if not header_seen:
        raise MeshError("empty mesh document")
    for a, b in gamma:
        if a == b or not (0 <= a < len(vertices) and 0 <= b < len(vertices)):
            raise MeshError("invalid Gamma edge", lines[("g", frozenset((a, b)))], f"edge {a}-{b}")
    mesh = Triangulation(tuple(vertices), tuple(triangles), frozenset(frozenset(e) for e in gamma))
    mesh.validate(lines)
    logger.info("loaded mesh: %d vertices, %d triangles, %d Gamma edges",
                len(mesh.vertices), len(mesh.triangles), len(mesh.gamma_edges))
    return mesh


def read_mesh_file(path) -> Triangulation:
    with open(path, "r", encoding="utf-8") as f:
        return load_mesh(f.read())


def bundled_mesh_path(name: str) -> Path:
    return MESH_DIR / f"{name}.mesh"


def resolve_mesh(spec: str) -> Path:
    """A bundled mesh name or a file path."""
    path = bundled_mesh_path(spec)
    return path if path.exists() else Path(spec)


def bundled_mesh(name: str) -> Triangulation:
    return read_mesh_file(bundled_mesh_path(name))


# --- Hierarchy ---

@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    """Levels T_0..T_J with child -> (parent, slot) maps and edge midpoints.

    parent_maps[0] is empty; midpoints[j] maps an edge of level j to the id of
    its midpoint, a vertex of level j+1.
    """

    levels: tuple
    parent_maps: tuple
    midpoints: tuple

    @classmethod
    def from_triangulation(cls, mesh: Triangulation) -> "MeshHierarchy":
        return cls((mesh,), ((),), ())

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> Triangulation:
        return self.levels[-1]

    def node_set(self, j: int) -> tuple:
        """N(T_j): sorted ids of level-j vertices not on Gamma."""
        mesh = self.levels[j]
        return tuple(i for i in range(len(mesh.vertices)) if i not in mesh.gamma_vertices)

    @property
    def node_sets(self) -> tuple:
        return tuple(self.node_set(j) for j in range(self.depth))

    def require(self, depth: int):
        if self.depth < depth:
            raise ValueError(f"hierarchy has {self.depth} levels, {depth} needed")

    def node_table(self, j: int, nodes) -> np.ndarray:
        """Vertex ids of the given reference nodes in every triangle of level j."""
        need = max(p.level for p in nodes)
        self.require(j + need + 1)
        mesh = self.levels[j]
        table = np.empty((len(mesh.triangles), len(nodes)), dtype=np.int64)
        for t, tri in enumerate(mesh.triangles):
            ids = dict(zip(ref.VERTICES, tri))
            for col, p in enumerate(nodes):
                table[t, col] = self._node_id(j, ids, p)
        return table

    def _node_id(self, j, ids, p):
        if p not in ids:
            a, b = ref.NODE_PARENTS[p]
            ids[p] = self.midpoints[j + p.level - 1][frozenset((self._node_id(j, ids, a),
                                                                self._node_id(j, ids, b)))]
        return ids[p]


def refine(h: MeshHierarchy) -> MeshHierarchy:
    """Append one red-refinement level."""
    mesh = h.finest
    vertices = list(mesh.vertices)
    mid = {}

    def midpoint(a, b):
        key = frozenset((a, b))
        if key not in mid:
            (xa, ya), (xb, yb) = vertices[a], vertices[b]
            mid[key] = len(vertices)
            vertices.append(((xa + xb) / 2, (ya + yb) / 2))
        return mid[key]

    triangles, parents = [], []
    for t, (a, b, c) in enumerate(mesh.triangles):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        for slot, child in enumerate(((a, ab, ca), (ab, b, bc), (ca, bc, c), (bc, ca, ab)), start=1):
            triangles.append(child)
            parents.append((t, slot))
    gamma = frozenset(frozenset((i, mid[e])) for e in mesh.gamma_edges for i in e)
    fine = Triangulation(tuple(vertices), tuple(triangles), gamma)
    logger.debug("refined to level %d: %d triangles", h.depth, len(triangles))
    return MeshHierarchy(h.levels + (fine,), h.parent_maps + (tuple(parents),), h.midpoints + (mid,))


def build_hierarchy(mesh: Triangulation, levels: int) -> MeshHierarchy:
    """T_0 plus `levels` refinements."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    h = MeshHierarchy.from_triangulation(mesh)
    for _ in range(levels):
        h = refine(h)
    return h


# --- Index sets and scaling ---

def node_index_set(h: MeshHierarchy, j: int, local) -> list:
    """Points x not on Gamma with lambda_T(x) in `local` for some T of level j."""
    if not 0 <= j < h.depth:
        raise ValueError(f"level {j} not in hierarchy of depth {h.depth}")
    mesh = h.levels[j]
    seen = {}
    for t in range(len(mesh.triangles)):
        for lam in sorted(local):
            if not mesh.on_gamma(t, lam):
                seen.setdefault(mesh.point(t, lam), None)
    return list(seen)


def _contains(mesh: Triangulation, t: int, x) -> bool:
    p, q, r = (mesh.vertices[i] for i in mesh.triangles[t])
    o = [_orient(p, q, x), _orient(q, r, x), _orient(r, p, x)]
    return min(o) >= 0 or max(o) <= 0


def patch_volume(h: MeshHierarchy, j: int, x) -> Fraction:
    """Sum of vol(T) over triangles T of level j containing x."""
    mesh = h.levels[j]
    x = (Fraction(x[0]), Fraction(x[1]))
    total = sum((mesh.areas[t] for t in range(len(mesh.triangles)) if _contains(mesh, t, x)),
                Fraction(0))
    if not total:
        raise MeshError(f"point {x} is not on any triangle of level {j}")
    return total


def scaling_factor(h: MeshHierarchy, j: int, x) -> float:
    """mu(x; T_j) = patch_volume^(-1/2)."""
    return 1.0 / math.sqrt(patch_volume(h, j, x))
