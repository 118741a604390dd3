#!/usr/bin/env python3
"""
ref_element — exact data on the reference triangle.

Every quantity in this module is an exact rational. Points of the reference
triangle T are barycentric triples; its red split has four sub-triangles
(three corners and the centre) and a continuous piecewise quadratic on that
split is fixed by its values at 15 nodes:

  I0   vertices                 (1,0,0) (0,1,0) (0,0,1)
  I1   edge midpoints           (0,1/2,1/2) ...        midpoint k is opposite vertex k
  I2   quarter points           six on the edges, three interior

Local collections, one function per index point:
  N          quadratic Lagrange basis on T                     (nodes I0 u I1)
  N_tilde    continuous piecewise linears on the split         (nodes I0 u I1)
  N_f        continuous piecewise quadratics on the split      (nodes I0 u I1 u I2)
  Theta, Xi  the tabulated 15x15 basis change over N_f
  Phi_tilde  piecewise linears with <Theta, Phi_tilde> = vol(T) Id

Inner products are stored divided by vol(T). The tabulated matrix comes without
its node numbering, so the numbering is recovered by search (see
build_theta_xi) and then checked against every tabulated inner product.
"""

from __future__ import annotations

import functools
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy

logger = logging.getLogger("femwave")

PERMUTATIONS = tuple(itertools.permutations(range(3)))

BASIS_N = "N"
BASIS_N_TILDE = "N_tilde"
BASIS_N_F = "N_f"


class ConstructionError(RuntimeError):
    """A construction violated one of its defining properties."""


# --- Barycentric points ---

@dataclass(frozen=True, order=True)
class BaryPoint:
    """Exact barycentric triple with denominators dividing 4."""

    lam: tuple

    def __post_init__(self):
        lam = tuple(Fraction(c) for c in self.lam)
        if len(lam) != 3 or sum(lam) != 1 or min(lam) < 0:
            raise ValueError(f"not a barycentric point: {self.lam!r}")
        if any(4 % c.denominator for c in lam):
            raise ValueError(f"not a node of the twice-refined triangle: {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def of(cls, *coords):
        return cls(tuple(Fraction(c) for c in coords))

    @property
    def level(self) -> int:
        """0 for I0, 1 for I1, 2 for I2."""
        den = max(c.denominator for c in self.lam)
        return {1: 0, 2: 1, 4: 2}[den]

    @property
    def zeros(self) -> tuple:
        return tuple(i for i, c in enumerate(self.lam) if c == 0)

    def permute(self, perm) -> "BaryPoint":
        """Return pi(lam) with pi(lam)_i = lam_{perm[i]}."""
        return BaryPoint(tuple(self.lam[p] for p in perm))

    def midpoint(self, other: "BaryPoint") -> "BaryPoint":
        return BaryPoint(tuple((a + b) / 2 for a, b in zip(self.lam, other.lam)))

    def __str__(self):
        return "(" + ",".join(str(c) for c in self.lam) + ")"


def _unit(k):
    return BaryPoint(tuple(Fraction(int(i == k)) for i in range(3)))


VERTICES = tuple(_unit(k) for k in range(3))
MIDPOINTS = tuple(VERTICES[(k + 1) % 3].midpoint(VERTICES[(k + 2) % 3]) for k in range(3))
COARSE_NODES = VERTICES + MIDPOINTS


def _edge_quarters():
    points = []
    for k in range(3):
        a, b = sorted(((k + 1) % 3, (k + 2) % 3))
        points.append(VERTICES[a].midpoint(MIDPOINTS[k]))
        points.append(VERTICES[b].midpoint(MIDPOINTS[k]))
    return tuple(points)


EDGE_QUARTERS = _edge_quarters()
INTERIOR_QUARTERS = tuple(
    MIDPOINTS[(k + 1) % 3].midpoint(MIDPOINTS[(k + 2) % 3]) for k in range(3))
FINE_NODES = COARSE_NODES + EDGE_QUARTERS + INTERIOR_QUARTERS

I0 = frozenset(VERTICES)
I1 = frozenset(MIDPOINTS)
I2 = frozenset(EDGE_QUARTERS + INTERIOR_QUARTERS)

BASIS_NODES = {
    BASIS_N: COARSE_NODES,
    BASIS_N_TILDE: COARSE_NODES,
    BASIS_N_F: FINE_NODES,
}
_NODE_POSITION = {tag: {p: i for i, p in enumerate(nodes)} for tag, nodes in BASIS_NODES.items()}


# --- Red split ---

@dataclass(frozen=True)
class SubTriangle:
    """One child of the red split, given by its three corner points."""

    corners: tuple

    @property
    def local_nodes(self) -> tuple:
        """Quadratic Lagrange nodes: corners, then midpoints opposite each corner."""
        p0, p1, p2 = self.corners
        return (p0, p1, p2, p1.midpoint(p2), p0.midpoint(p2), p0.midpoint(p1))


def _red_split():
    children = []
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        children.append(SubTriangle((VERTICES[k],
                                     VERTICES[k].midpoint(VERTICES[k1]),
                                     VERTICES[k].midpoint(VERTICES[k2]))))
    children.append(SubTriangle(MIDPOINTS))
    return tuple(children)


SUBTRIANGLES = _red_split()

# Each node outside I0 is the midpoint of an edge of the triangle (I1) or of a
# sub-triangle (I2). Assembly uses these pairs to look up mesh vertex ids.
NODE_PARENTS = {}
for _k, _m in enumerate(MIDPOINTS):
    NODE_PARENTS[_m] = (VERTICES[(_k + 1) % 3], VERTICES[(_k + 2) % 3])
for _sub in SUBTRIANGLES:
    _c = _sub.corners
    for _i, _j in ((1, 2), (0, 2), (0, 1)):
        NODE_PARENTS.setdefault(_c[_i].midpoint(_c[_j]), (_c[_i], _c[_j]))


# --- Polynomials and integration ---

def integrate_monomial(a: int, b: int, c: int) -> Fraction:
    """Integral of l1^a l2^b l3^c over T divided by vol(T)."""
    if min(a, b, c) < 0:
        raise ValueError("exponents must be nonnegative")
    return Fraction(2 * math.factorial(a) * math.factorial(b) * math.factorial(c),
                    math.factorial(a + b + c + 2))


def _poly_mul(p: dict, q: dict) -> dict:
    out = {}
    for ep, cp in p.items():
        for eq, cq in q.items():
            e = (ep[0] + eq[0], ep[1] + eq[1], ep[2] + eq[2])
            out[e] = out.get(e, 0) + cp * cq
    return {e: c for e, c in out.items() if c}


def _poly_integrate(p: dict) -> Fraction:
    return sum((c * integrate_monomial(*e) for e, c in p.items()), Fraction(0))


def _poly_eval(p: dict, lam) -> Fraction:
    total = Fraction(0)
    for (a, b, c), coeff in p.items():
        total += coeff * lam[0] ** a * lam[1] ** b * lam[2] ** c
    return total


def _poly_diff(p: dict, k: int) -> dict:
    out = {}
    for e, c in p.items():
        if e[k]:
            d = list(e)
            d[k] -= 1
            out[tuple(d)] = out.get(tuple(d), 0) + c * e[k]
    return out


def _exp(*idx):
    e = [0, 0, 0]
    for i in idx:
        e[i] += 1
    return tuple(e)


def _lagrange_p2():
    """Homogeneous quadratic Lagrange basis in the order of SubTriangle.local_nodes."""
    basis = []
    for i in range(3):
        p, q = [k for k in range(3) if k != i]
        basis.append({_exp(i, i): Fraction(1), _exp(i, p): Fraction(-1), _exp(i, q): Fraction(-1)})
    for i in range(3):
        p, q = [k for k in range(3) if k != i]
        basis.append({_exp(p, q): Fraction(4)})
    return tuple(basis)


LAGRANGE_P2 = _lagrange_p2()
LAGRANGE_P1 = tuple({_exp(i): Fraction(1)} for i in range(3))

P2_MASS = tuple(tuple(_poly_integrate(_poly_mul(a, b)) for b in LAGRANGE_P2) for a in LAGRANGE_P2)


def p2_gradient_forms():
    """Exact S[k][l][a][b] = integral of d_k n_a * d_l n_b over T / vol(T).

    The stiffness matrix of T is then sum_kl (grad l_k . grad l_l) vol(T) S[k][l].
    """
    derivs = [[_poly_diff(n, k) for k in range(3)] for n in LAGRANGE_P2]
    return tuple(
        tuple(
            tuple(tuple(_poly_integrate(_poly_mul(derivs[a][k], derivs[b][l])) for b in range(6))
                  for a in range(6))
            for l in range(3))
        for k in range(3))


def p2_p1_moments():
    """Exact M[a][k] = integral of n_a * l_k over T / vol(T)."""
    return tuple(tuple(_poly_integrate(_poly_mul(n, lin)) for lin in LAGRANGE_P1) for n in LAGRANGE_P2)


# --- Local functions ---

@dataclass(frozen=True)
class RefFunction:
    """A function on T stored as exact nodal coefficients over one basis."""

    basis: str
    coeffs: tuple

    def __post_init__(self):
        if self.basis not in BASIS_NODES:
            raise ValueError(f"unknown basis: {self.basis}")
        coeffs = tuple(Fraction(c) for c in self.coeffs)
        if len(coeffs) != len(BASIS_NODES[self.basis]):
            raise ValueError(f"{self.basis} needs {len(BASIS_NODES[self.basis])} coefficients, "
                             f"got {len(coeffs)}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def nodes(self) -> tuple:
        return BASIS_NODES[self.basis]

    def coeff_at(self, p: BaryPoint) -> Fraction:
        return self.coeffs[_NODE_POSITION[self.basis][p]]

    def fine_values(self) -> tuple:
        """Values at FINE_NODES; these determine the function on the red split."""
        if self.basis == BASIS_N_F:
            return self.coeffs
        if self.basis == BASIS_N:
            return tuple(sum((c * _poly_eval(n, p.lam) for c, n in zip(self.coeffs, LAGRANGE_P2)),
                             Fraction(0))
                         for p in FINE_NODES)
        coarse = dict(zip(COARSE_NODES, self.coeffs))
        return self.coeffs + tuple((coarse[NODE_PARENTS[p][0]] + coarse[NODE_PARENTS[p][1]]) / 2
                                   for p in FINE_NODES[6:])

    def value_at(self, p: BaryPoint) -> Fraction:
        return self.fine_values()[_NODE_POSITION[BASIS_N_F][p]]


def apply_symmetry(f: RefFunction, perm) -> RefFunction:
    """Return f o pi in the basis of f, where pi(lam)_i = lam_{perm[i]}."""
    if tuple(sorted(perm)) != (0, 1, 2):
        raise ValueError(f"not a permutation of three coordinates: {perm!r}")
    return RefFunction(f.basis, tuple(f.coeff_at(p.permute(perm)) for p in f.nodes))


@dataclass(frozen=True, eq=False)
class LocalCollection:
    """Named local functions, one per index point, in index order."""

    name: str
    functions: dict

    @property
    def index_set(self) -> tuple:
        return tuple(self.functions)

    def __getitem__(self, lam: BaryPoint) -> RefFunction:
        return self.functions[lam]

    def __len__(self):
        return len(self.functions)

    def fine_table(self) -> tuple:
        """Rows of fine values, one per function."""
        return tuple(f.fine_values() for f in self.functions.values())

    def coarse_table(self) -> tuple:
        """Values at COARSE_NODES; exact only for piecewise linear collections."""
        return tuple(row[:6] for row in self.fine_table())

    @property
    def is_linear(self) -> bool:
        return all(f.basis == BASIS_N_TILDE for f in self.functions.values())

    def check_vanishing(self):
        for lam, f in self.functions.items():
            for p, v in zip(FINE_NODES, f.fine_values()):
                if v and _forbidden(lam, p):
                    raise ConstructionError(f"{self.name}: function {lam} is {v} at {p}, "
                                            "which lies on an edge not containing its index")

    def check_symmetry(self):
        index = set(self.functions)
        for perm in PERMUTATIONS:
            if {lam.permute(perm) for lam in index} != index:
                raise ConstructionError(f"{self.name}: index set not closed under {perm}")
            for lam, f in self.functions.items():
                image = apply_symmetry(self.functions[lam.permute(perm)], perm)
                if image.fine_values() != f.fine_values():
                    raise ConstructionError(f"{self.name}: function {lam} breaks symmetry {perm}")

    def check_independence(self):
        rank = sympy.Matrix([[_rational(v) for v in row] for row in self.fine_table()]).rank()
        if rank != len(self.functions):
            raise ConstructionError(f"{self.name}: rank {rank} < {len(self.functions)}")

    def check(self):
        self.check_vanishing()
        self.check_symmetry()
        self.check_independence()


def _forbidden(lam: BaryPoint, p: BaryPoint) -> bool:
    """True when p lies on an edge or vertex of T that does not contain lam."""
    return any(p.lam[i] == 0 and lam.lam[i] != 0 for i in range(3))


def union(a: LocalCollection, b: LocalCollection, name: str | None = None) -> LocalCollection:
    return LocalCollection(name or f"{a.name}+{b.name}", {**a.functions, **b.functions})


def _nodal(name, basis, nodes):
    functions = {}
    for i, p in enumerate(nodes):
        functions[p] = RefFunction(basis, tuple(Fraction(int(i == k)) for k in range(len(nodes))))
    return LocalCollection(name, functions)


def nodal_quadratic() -> LocalCollection:
    return _nodal("N", BASIS_N, COARSE_NODES)


def nodal_linear() -> LocalCollection:
    return _nodal("N_tilde", BASIS_N_TILDE, COARSE_NODES)


def nodal_fine() -> LocalCollection:
    return _nodal("N_f", BASIS_N_F, FINE_NODES)


# --- Inner products ---

@dataclass(frozen=True)
class RefGram:
    """<rows, cols> over T divided by vol(T)."""

    rows: str
    cols: str
    row_index: tuple
    col_index: tuple
    entries: tuple

    def entry(self, lam: BaryPoint, mu: BaryPoint) -> Fraction:
        return self.entries[self.row_index.index(lam)][self.col_index.index(mu)]

    def row(self, lam: BaryPoint) -> dict:
        return dict(zip(self.col_index, self.entries[self.row_index.index(lam)]))

    def as_sympy(self) -> sympy.Matrix:
        return sympy.Matrix([[_rational(v) for v in row] for row in self.entries])

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.entries])

    def is_identity(self) -> bool:
        return self.row_index == self.col_index and all(
            v == (i == k) for i, row in enumerate(self.entries) for k, v in enumerate(row))

    def is_permutation_invariant(self) -> bool:
        for perm in PERMUTATIONS:
            for lam in self.row_index:
                for mu in self.col_index:
                    if self.entry(lam, mu) != self.entry(lam.permute(perm), mu.permute(perm)):
                        return False
        return True


def _split_values(values) -> tuple:
    by_node = dict(zip(FINE_NODES, values))
    return tuple(tuple(by_node[p] for p in sub.local_nodes) for sub in SUBTRIANGLES)


def gram(a: LocalCollection, b: LocalCollection) -> RefGram:
    """Exact <a_lam, b_mu>/vol(T), integrated child by child with Jacobian 1/4."""
    a_split = [_split_values(row) for row in a.fine_table()]
    b_split = [_split_values(row) for row in b.fine_table()]
    entries = []
    for fa in a_split:
        row = []
        for fb in b_split:
            total = Fraction(0)
            for va, vb in zip(fa, fb):
                for i, x in enumerate(va):
                    if x:
                        total += x * sum((P2_MASS[i][k] * y for k, y in enumerate(vb) if y),
                                         Fraction(0))
            row.append(total / 4)
        entries.append(tuple(row))
    return RefGram(a.name, b.name, a.index_set, b.index_set, tuple(entries))


# --- Basis change Theta u Xi over N_f ---

# Rows and columns in the published numbering; which numbering, and whether
# functions are rows or columns, is settled by _search_numbering.
BASIS_CHANGE_TABLE = (
    "72 0 0 0 0 0 0 0 0 0 0 0 0 0 0",
    "0 72 0 0 0 0 0 0 0 0 0 0 0 0 0",
    "0 0 72 0 0 0 0 0 0 0 0 0 0 0 0",
    "0 0 0 1560/81 0 0 -12/25 -12/25 0 0 0 0 0 0 0",
    "0 0 0 0 1560/81 0 0 0 -12/25 -12/25 0 0 0 0 0",
    "0 0 0 0 0 1560/81 0 0 0 0 -12/25 -12/25 0 0 0",
    "0 6 0 530/81 0 0 1 -2/25 0 0 0 0 0 0 0",
    "0 0 6 530/81 0 0 -2/25 1 0 0 0 0 0 0 0",
    "0 0 6 0 530/81 0 0 0 1 -2/25 0 0 0 0 0",
    "6 0 0 0 530/81 0 0 0 -2/25 1 0 0 0 0 0",
    "6 0 0 0 0 530/81 0 0 0 0 1 -2/25 0 0 0",
    "0 6 0 0 0 530/81 0 0 0 0 -2/25 1 0 0 0",
    "0 0 0 0 50/81 50/81 0 0 1/25 -8/25 -8/25 1/25 -5/4 1 1",
    "0 0 0 50/81 0 50/81 -8/25 1/25 0 0 1/25 -8/25 1 -5/4 1",
    "0 0 0 50/81 50/81 0 1/25 -8/25 -8/25 1/25 0 0 1 1 -5/4",
)

# Known inner products <xi, phi_tilde>/vol(T); unlisted entries of these rows vanish.
XI_PHI_TILDE_VALUES = {
    BaryPoint.of("3/4", "1/4", 0): {VERTICES[0]: Fraction(3, 100)},
    BaryPoint.of("1/4", "1/4", "1/2"): {VERTICES[2]: Fraction(-1, 48),
                                        BaryPoint.of("1/2", "1/2", 0): Fraction(27, 240)},
}


def basis_change_table() -> tuple:
    return tuple(tuple(Fraction(v) for v in row.split()) for row in BASIS_CHANGE_TABLE)


def _candidate_numberings():
    """Symmetry-consistent numberings of the 15 nodes.

    Vertices take slots 1-3 in coordinate order, midpoints slots 4-6, the edge
    quarter points slots 7-12 pairwise by edge, interior points slots 13-15.
    """
    edges = [EDGE_QUARTERS[2 * k:2 * k + 2] for k in range(3)]
    midpoint_orders = list(itertools.permutations(MIDPOINTS[::-1]))
    interior_orders = list(itertools.permutations(INTERIOR_QUARTERS[::-1]))
    for mids in midpoint_orders:
        for edge_order in itertools.permutations(edges):
            for flips in itertools.product((False, True), repeat=3):
                quarters = []
                for pair, flip in zip(edge_order, flips):
                    quarters.extend(pair[::-1] if flip else pair)
                for interior in interior_orders:
                    yield VERTICES + mids + tuple(quarters) + interior


def _read_table(table, numbering, functions_as):
    """Map each numbered node to the fine values of its function."""
    position = {p: i for i, p in enumerate(numbering)}
    functions = {}
    for slot, lam in enumerate(numbering):
        if functions_as == "columns":
            values = [table[r][slot] for r in range(15)]
        else:
            values = list(table[slot])
        functions[lam] = tuple(values[position[p]] for p in FINE_NODES)
    return functions


def _vanishes(functions) -> bool:
    for lam, values in functions.items():
        for p, v in zip(FINE_NODES, values):
            if v and _forbidden(lam, p):
                return False
    return True


def _collections(functions):
    theta = LocalCollection("Theta", {lam: RefFunction(BASIS_N_F, functions[lam])
                                      for lam in COARSE_NODES})
    xi = LocalCollection("Xi", {lam: RefFunction(BASIS_N_F, functions[lam])
                                for lam in EDGE_QUARTERS + INTERIOR_QUARTERS})
    return theta, xi


def check_xi_phi_values(xi: LocalCollection, phi_tilde: LocalCollection):
    g = gram(xi, phi_tilde)
    for lam, expected in XI_PHI_TILDE_VALUES.items():
        for mu, value in g.row(lam).items():
            if value != expected.get(mu, 0):
                raise ConstructionError(f"<xi_{lam}, phi~_{mu}> = {value}, "
                                        f"expected {expected.get(mu, 0)}")
    if not g.is_permutation_invariant():
        raise ConstructionError("<Xi, Phi~> is not invariant under coordinate permutations")


@functools.lru_cache(maxsize=None)
def _search_numbering():
    table = basis_change_table()
    if sympy.Matrix([[_rational(v) for v in row] for row in table]).det() == 0:
        raise ConstructionError("the 15x15 basis-change matrix is singular")
    tried = 0
    for functions_as in ("columns", "rows"):
        for numbering in _candidate_numberings():
            tried += 1
            functions = _read_table(table, numbering, functions_as)
            if not _vanishes(functions):
                continue
            theta, xi = _collections(functions)
            try:
                theta.check_symmetry()
                xi.check_symmetry()
                phi_tilde = build_phi_tilde(theta)
                check_xi_phi_values(xi, phi_tilde)
            except ConstructionError as e:
                logger.debug("numbering rejected after %d candidates: %s", tried, e)
                continue
            theta.check_independence()
            xi.check_independence()
            logger.info("basis-change numbering accepted after %d candidates (functions as %s)",
                        tried, functions_as)
            return numbering, functions_as, theta, xi, phi_tilde
    raise ConstructionError(f"no numbering of the basis-change table satisfies vanishing, "
                            f"symmetry and biorthogonality ({tried} candidates)")


def build_theta_xi() -> tuple:
    """Theta (indexed by I0 u I1) and Xi (indexed by I2) over N_f."""
    _, _, theta, xi, _ = _search_numbering()
    return theta, xi


def accepted_numbering() -> tuple:
    """(numbering, 'columns' | 'rows') under which the table was read."""
    numbering, functions_as, _, _, _ = _search_numbering()
    return numbering, functions_as


# --- Phi_tilde ---

def _adjacent_midpoints(v: BaryPoint) -> tuple:
    k = v.lam.index(1)
    return tuple(m for m in MIDPOINTS if m.lam[k])


def _phi_tilde_collection(a, b, c) -> LocalCollection:
    functions = {}
    for v in VERTICES:
        adjacent = _adjacent_midpoints(v)
        functions[v] = RefFunction(BASIS_N_TILDE, tuple(
            a if p == v else b if p in adjacent else 0 for p in COARSE_NODES))
    for m in MIDPOINTS:
        functions[m] = RefFunction(BASIS_N_TILDE, tuple(c if p == m else 0 for p in COARSE_NODES))
    return LocalCollection("Phi_tilde", functions)


def phi_tilde_parameters(theta: LocalCollection) -> tuple:
    """Solve <Theta, Phi_tilde> = Id for the three symmetric free values.

    phi~_v = a n~_v + b (n~ of the two midpoints adjacent to v), phi~_m = c n~_m.
    """
    g = gram(theta, nodal_linear())
    rows, rhs = [], []
    for lam in theta.index_set:
        for mu in COARSE_NODES:
            if mu in I0:
                rows.append([g.entry(lam, mu), sum(g.entry(lam, m) for m in _adjacent_midpoints(mu)), 0])
            else:
                rows.append([0, 0, g.entry(lam, mu)])
            rhs.append(int(lam == mu))
    system = sympy.Matrix([[_rational(v) for v in row] for row in rows])
    try:
        solution, free = system.gauss_jordan_solve(sympy.Matrix(rhs))
    except ValueError:
        raise ConstructionError("biorthogonality system for Phi_tilde is inconsistent")
    if free.shape[0]:
        raise ConstructionError("biorthogonality system for Phi_tilde is singular")
    return tuple(_fraction(v) for v in solution)


def build_phi_tilde(theta: LocalCollection | None = None) -> LocalCollection:
    """Phi_tilde in span N_tilde with <Theta, Phi_tilde> = Id."""
    if theta is None:
        theta = build_theta_xi()[0]
    phi_tilde = _phi_tilde_collection(*phi_tilde_parameters(theta))
    phi_tilde.check_vanishing()
    phi_tilde.check_symmetry()
    if not gram(theta, phi_tilde).is_identity():
        raise ConstructionError("<Theta, Phi_tilde> is not the identity")
    return phi_tilde


# --- Cached reference data ---

@dataclass(frozen=True, eq=False)
class ReferenceData:
    n: LocalCollection
    n_tilde: LocalCollection
    n_f: LocalCollection
    theta: LocalCollection
    xi: LocalCollection
    phi_tilde: LocalCollection
    numbering: tuple
    functions_as: str

    def collection(self, name: str) -> LocalCollection:
        return {c.name: c for c in (self.n, self.n_tilde, self.n_f, self.theta,
                                    self.xi, self.phi_tilde)}[name]


@functools.lru_cache(maxsize=None)
def reference_data() -> ReferenceData:
    numbering, functions_as, theta, xi, phi_tilde = _search_numbering()
    data = ReferenceData(nodal_quadratic(), nodal_linear(), nodal_fine(),
                         theta, xi, phi_tilde, numbering, functions_as)
    for coll in (data.n, data.n_tilde, data.theta, data.xi, data.phi_tilde):
        coll.check()
    return data


@functools.lru_cache(maxsize=None)
def reference_gram(rows: str, cols: str) -> RefGram:
    data = reference_data()
    return gram(data.collection(rows), data.collection(cols))


# --- Helpers ---

def _rational(v) -> sympy.Rational:
    v = Fraction(v)
    return sympy.Rational(v.numerator, v.denominator)


def _fraction(v) -> Fraction:
    v = sympy.Rational(v)
    return Fraction(int(v.p), int(v.q))


def _format_matrix(index_rows, index_cols, entries) -> list:
    width = max(len(str(v)) for row in entries for v in row)
    width = max(width, max(len(str(p)) for p in index_cols))
    lines = [" " * 14 + " ".join(str(p).rjust(width) for p in index_cols)]
    for p, row in zip(index_rows, entries):
        lines.append(str(p).ljust(14) + " ".join(str(v).rjust(width) for v in row))
    return lines


def format_report() -> str:
    """Plain-text dump of the reference data as exact rationals."""
    data = reference_data()
    a, b, c = phi_tilde_parameters(data.theta)
    lines = ["# femwave reference element", ""]
    lines.append(f"table read with functions as {data.functions_as}; numbering:")
    for slot, p in enumerate(data.numbering, start=1):
        lines.append(f"  {slot:2d}  {p}")
    lines += ["", "Theta u Xi over N_f (rows: functions, columns: fine nodes)"]
    coll = union(data.theta, data.xi)
    lines += _format_matrix(coll.index_set, FINE_NODES, coll.fine_table())
    lines += ["", f"Phi_tilde: vertex value {a}, adjacent midpoints {b}, midpoint value {c}"]
    for rows, cols in (("N", "N_tilde"), ("Theta", "Phi_tilde"), ("Xi", "Phi_tilde")):
        g = reference_gram(rows, cols)
        lines += ["", f"<{rows}, {cols}> / vol(T)"]
        lines += _format_matrix(g.row_index, g.col_index, g.entries)
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    print(format_report(), end="")
