#!/usr/bin/env python3
"""
spectral — operators on the nodal spaces and condition numbers of wavelet bases.

For wavelet levels 0..J with synthesis W and an operator A on V_J (mass for
L2, stiffness for the H1 seminorm),

  G = D W^T A W D,    D = diag(W^T A W)^(-1/2)

is applied matrix-free and its extreme eigenvalues are found by Lanczos with
full reorthogonalization. The diagonal of W^T A W is formed exactly per level:
a level-l wavelet lives in V_l, so its norm is taken with the level-l operator.

Dual wavelets live in V~_J (continuous piecewise linears on T_{J+1}). With
B = <N_J, N~_J> and M~ = M^-T applied level by level, their coefficients over
the hat functions are Z = B^-1 W~, and the dual H1 matrix is Z^T K~ Z with K~
the linear stiffness matrix on T_{J+1}.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
import sympy

import ref_element as ref
from assembly import DENSE_LIMIT, LevelCapError, SparseMatrix, assemble, global_gram
from mesh_hierarchy import MeshHierarchy
from wavelets import DUAL_LEVEL_CAP, LevelScaling, MultilevelTransform, build_transform

logger = logging.getLogger("femwave")

LANCZOS_MAX_ITER = int(os.environ.get("FEMWAVE_LANCZOS_MAX_ITER", "400"))
AUTO_DENSE = 200
DUAL_BLOCK = 256

MASS = "mass"
STIFFNESS = "stiffness"
MIXED_MASS = "mixed_mass"
LINEAR_MASS = "linear_mass"
LINEAR_STIFFNESS = "linear_stiffness"
OPERATOR_KINDS = (MASS, STIFFNESS, MIXED_MASS, LINEAR_MASS, LINEAR_STIFFNESS)

L2 = "l2"
H1 = "h1"
H1_DUAL = "h1dual"
NORM_TAGS = (L2, H1, H1_DUAL)

METHODS = ("auto", "lanczos", "dense")
NORMALIZATIONS = ("norm", "level")


class ConvergenceError(RuntimeError):
    """Lanczos stopped at max_iter before both extremes met the tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


# --- Operators ---

@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    kind: str
    level: int
    matrix: scipy.sparse.csr_matrix
    dofs: tuple
    exact: SparseMatrix | None = None

    @property
    def shape(self) -> tuple:
        return self.matrix.shape

    def symmetry_defect(self) -> float:
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max()) if diff.nnz else 0.0


def _p1_mass():
    return tuple(tuple(Fraction(1 + (a == b), 12) for b in range(3)) for a in range(3))


def _local_forms(kind):
    """Reference forms per kind: mass forms scale with area, stiffness forms with e_k.e_l/(4 area)."""
    if kind == MASS:
        return ref.P2_MASS, None
    if kind == STIFFNESS:
        return None, ref.p2_gradient_forms()
    if kind == LINEAR_MASS:
        return _p1_mass(), None
    # P1 gradients are constant: S[k][l][a][b] = delta_ka delta_lb
    return None, tuple(tuple(tuple(tuple(Fraction(int(a == k and b == l)) for b in range(3)) for a in range(3))
                             for l in range(3)) for k in range(3))


def _edge_vectors(corners):
    return [(corners[(k + 2) % 3][0] - corners[(k + 1) % 3][0],
             corners[(k + 2) % 3][1] - corners[(k + 1) % 3][1]) for k in range(3)]


def assemble_operator(h: MeshHierarchy, J: int, kind: str, exact: bool = False) -> OperatorMatrix:
    """Mass or stiffness on V_J (quadratics on T_J) or on V~_J (hats on T_{J+1}).

    Rows and columns are the dofs N(T_{J+1}) in sorted vertex-id order. mixed_mass
    is <N_J, N~_J>, always exact; its assembly runs over T_{J+2} and needs one more
    refinement than the other kinds.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind: {kind}")
    if J < 0:
        raise ValueError("J must be >= 0")
    h.require(J + 3 if kind == MIXED_MASS else J + 2)
    dofs = h.node_set(J + 1)
    if kind == MIXED_MASS:
        data = ref.reference_data()
        g = global_gram(assemble(h, J, data.n), assemble(h, J, data.n_tilde)).unscaled
        return OperatorMatrix(kind, J, g.to_scipy(), dofs, g)

    quadratic = kind in (MASS, STIFFNESS)
    mesh = h.levels[J] if quadratic else h.levels[J + 1]
    table = h.node_table(J, ref.COARSE_NODES) if quadratic else mesh.cells
    index = np.full(len(h.levels[J + 1].vertices), -1, dtype=np.int64)
    index[list(dofs)] = np.arange(len(dofs))
    local_dofs = index[table]
    mass_form, grad_form = _local_forms(kind)

    if exact:
        out = SparseMatrix((len(dofs), len(dofs)))
        for t, tri in enumerate(mesh.triangles):
            area = mesh.areas[t]
            if mass_form is not None:
                local = [[area * v for v in row] for row in mass_form]
            else:
                e = _edge_vectors([mesh.vertices[i] for i in tri])
                n = len(grad_form[0][0])
                local = [[sum((e[k][0] * e[l][0] + e[k][1] * e[l][1]) / (4 * area) * grad_form[k][l][a][b]
                              for k in range(3) for l in range(3)) for b in range(n)] for a in range(n)]
            for a, ra in enumerate(local_dofs[t]):
                if ra < 0:
                    continue
                for b, rb in enumerate(local_dofs[t]):
                    if rb >= 0 and local[a][b]:
                        out.add(int(ra), int(rb), local[a][b])
        return OperatorMatrix(kind, J, out.to_scipy(), dofs, out)

    p = mesh.points[mesh.cells]
    e = np.stack([p[:, (k + 2) % 3] - p[:, (k + 1) % 3] for k in range(3)], axis=1)
    area = 0.5 * np.abs(e[:, 1, 0] * e[:, 2, 1] - e[:, 1, 1] * e[:, 2, 0])
    if mass_form is not None:
        local = area[:, None, None] * np.array(mass_form, dtype=float)[None]
    else:
        g = np.einsum("tki,tli->tkl", e, e) / (4 * area)[:, None, None]
        local = np.einsum("tkl,klab->tab", g, np.array(grad_form, dtype=float))
    rows = np.repeat(local_dofs[:, :, None], local_dofs.shape[1], axis=2)
    cols = np.repeat(local_dofs[:, None, :], local_dofs.shape[1], axis=1)
    keep = (rows >= 0) & (cols >= 0)
    matrix = scipy.sparse.coo_matrix((local[keep], (rows[keep], cols[keep])),
                                     shape=(len(dofs), len(dofs))).tocsr()
    return OperatorMatrix(kind, J, matrix, dofs)


# --- Extreme eigenvalues ---

@dataclass(frozen=True)
class Extremes:
    lambda_min: float
    lambda_max: float
    iterations: int
    residual: float
    method: str

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min


def lanczos_extremes(op, tol: float = 1e-6, max_iter: int | None = None, seed: int = 0) -> Extremes:
    """Extreme eigenvalues of a symmetric operator, Lanczos with full reorthogonalization.

    Converged when beta * |last Ritz vector component| <= tol * |Ritz value| for both extremes.
    """
    n = op.shape[0]
    if n == 0:
        raise ValueError("operator has no rows")
    max_iter = LANCZOS_MAX_ITER if max_iter is None else max_iter
    k_max = min(max_iter, n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = np.zeros((n, k_max))
    alphas, betas = [], []
    residual = np.inf
    for i in range(k_max):
        basis[:, i] = q
        u = np.ravel(op.matvec(q))
        alphas.append(float(q @ u))
        # Two passes of classical Gram-Schmidt against all previous Lanczos vectors.
        for _ in range(2):
            u -= basis[:, :i + 1] @ (basis[:, :i + 1].T @ u)
        beta = float(np.linalg.norm(u))
        if i == 0:
            theta, s = np.array(alphas), np.ones((1, 1))
        else:
            theta, s = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        res = beta * np.abs(s[-1, [0, -1]]) / np.maximum(np.abs(theta[[0, -1]]), np.finfo(float).tiny)
        residual = float(res.max())
        logger.debug("lanczos %d: lambda [%.10g, %.10g] residual %.3e", i + 1, theta[0], theta[-1], residual)
        if residual <= tol or i + 1 == n or beta <= 1e-14 * np.abs(theta).max():
            logger.info("lanczos converged after %d iterations: [%.8g, %.8g]", i + 1, theta[0], theta[-1])
            return Extremes(float(theta[0]), float(theta[-1]), i + 1, residual, "lanczos")
        betas.append(beta)
        q = u / beta
    raise ConvergenceError(f"Lanczos did not converge to {tol:g}", residual, k_max)


def dense_matrix(op) -> np.ndarray:
    n = op.shape[0]
    if n > DENSE_LIMIT:
        raise LevelCapError(f"{n} unknowns exceed the dense limit {DENSE_LIMIT}")
    g = np.asarray(op.matmat(np.eye(n)))
    return (g + g.T) / 2


def dense_extremes(op) -> Extremes:
    w = scipy.linalg.eigh(dense_matrix(op), eigvals_only=True)
    return Extremes(float(w[0]), float(w[-1]), op.shape[0], 0.0, "dense")


def extremes(op, method="auto", tol=1e-6, max_iter=None, seed=0) -> Extremes:
    if method not in METHODS:
        raise ValueError(f"unknown method: {method}")
    if method == "dense" or (method == "auto" and op.shape[0] <= AUTO_DENSE):
        return dense_extremes(op)
    return lanczos_extremes(op, tol=tol, max_iter=max_iter, seed=seed)


def _scale(d, x):
    return d.reshape((-1,) + (1,) * (np.ndim(x) - 1)) * x


def _symmetric_operator(n, apply) -> scipy.sparse.linalg.LinearOperator:
    return scipy.sparse.linalg.LinearOperator((n, n), matvec=apply, matmat=apply, rmatvec=apply,
                                              dtype=float)


# --- Condition numbers ---

@dataclass(frozen=True)
class ConditionEntry:
    J: int
    size: int
    kappa: float
    lambda_min: float
    lambda_max: float
    iterations: int
    residual: float
    method: str


@dataclass(frozen=True)
class ConditionReport:
    norm_tag: str
    normalization: str
    entries: tuple

    @property
    def kappas(self) -> tuple:
        return tuple(e.kappa for e in self.entries)

    @property
    def eigen_extremes(self) -> tuple:
        return tuple((e.lambda_min, e.lambda_max) for e in self.entries)

    def entry(self, J: int) -> ConditionEntry:
        for e in self.entries:
            if e.J == J:
                return e
        raise KeyError(J)


def _entry(J, op, method, tol, max_iter, seed) -> ConditionEntry:
    ex = extremes(op, method=method, tol=tol, max_iter=max_iter, seed=seed)
    logger.info("J=%d: %d unknowns, kappa %.6g (%s)", J, op.shape[0], ex.kappa, ex.method)
    return ConditionEntry(J, op.shape[0], ex.kappa, ex.lambda_min, ex.lambda_max,
                          ex.iterations, ex.residual, ex.method)


def _check_args(J, normalization, gamma_needed, h):
    if J < 0:
        raise ValueError("J must be >= 0")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization: {normalization}")
    if gamma_needed and not h.levels[0].gamma_edges:
        raise ValueError("the H1 seminorm needs a nonempty Dirichlet boundary")


def _column_norms(matrix, operator) -> np.ndarray:
    return np.asarray(matrix.multiply(operator @ matrix).sum(axis=0)).ravel()


def wavelet_norms(transform: MultilevelTransform, kind: str) -> np.ndarray:
    """psi^T A_l psi for every wavelet, level by level, in coefficient order."""
    h = transform.hierarchy
    return np.concatenate([_column_norms(wl.matrix(), assemble_operator(h, wl.level, kind).matrix)
                           for wl in transform.levels])


def normalization_factors(transform: MultilevelTransform, norm_tag: str, normalization: str = "norm") -> np.ndarray:
    """D for the given norm: exact per-wavelet norms, or L2 norms times 2^(-js)."""
    if normalization == "norm":
        return wavelet_norms(transform, MASS if norm_tag == L2 else STIFFNESS) ** -0.5
    scaling = LevelScaling(0.0 if norm_tag == L2 else 1.0, transform.depth)
    return wavelet_norms(transform, MASS) ** -0.5 * scaling.expand(transform.sizes)


def wavelet_operator(transform: MultilevelTransform, norm_tag: str, normalization: str = "norm"):
    """G = D W^T A W D as a LinearOperator."""
    kind = MASS if norm_tag == L2 else STIFFNESS
    a = assemble_operator(transform.hierarchy, transform.depth, kind).matrix
    d = normalization_factors(transform, norm_tag, normalization)

    def apply(x):
        return _scale(d, transform.adjoint(a @ transform.synthesize(_scale(d, x))))

    return _symmetric_operator(transform.size, apply)


def wavelet_condition(h: MeshHierarchy, J: int, norm_tag: str, tol: float = 1e-6, max_iter: int | None = None,
                      seed: int = 0, method: str = "auto", normalization: str = "norm",
                      transform: MultilevelTransform | None = None, threads: int = 1) -> ConditionReport:
    """kappa of the normalized wavelets on levels 0..J', for every J' <= J."""
    if norm_tag not in (L2, H1):
        raise ValueError(f"unknown primal norm: {norm_tag}")
    _check_args(J, normalization, norm_tag == H1, h)
    transform = transform or build_transform(h, J, threads=threads)
    entries = []
    for k in range(J + 1):
        op = wavelet_operator(transform.truncated(k), norm_tag, normalization)
        entries.append(_entry(k, op, method, tol, max_iter, seed))
    return ConditionReport(norm_tag, normalization, tuple(entries))


# --- Dual wavelets ---

class DualCoefficients:
    """Z = B^-1 W~ and Z^T, from dual wavelet coefficients to hat-function coefficients on T_{J+1}."""

    def __init__(self, transform: MultilevelTransform):
        self.transform = transform
        # B = <N_J, N~_J> is assembled on T_{J+2}
        transform.hierarchy.require(transform.depth + 3)
        self.dual = transform.dual()
        mixed = assemble_operator(transform.hierarchy, transform.depth, MIXED_MASS)
        self.mixed = mixed.matrix.tocsc()
        try:
            self.lu = scipy.sparse.linalg.splu(self.mixed)
        except RuntimeError as e:
            raise ref.ConstructionError(f"<N_{transform.depth}, N~_{transform.depth}> is singular: {e}")

    @property
    def size(self) -> int:
        return self.transform.size

    def apply(self, x):
        return self.lu.solve(np.asarray(self.dual.synthesize(x), dtype=float))

    def apply_transpose(self, y):
        # W~^T = W^-1
        return self.transform.analyze(self.lu.solve(np.asarray(y, dtype=float), trans="T"))

    def column_norms(self, operator) -> np.ndarray:
        """z_k^T A z_k for every column, in blocks of unit vectors."""
        out = np.empty(self.size)
        for start in range(0, self.size, DUAL_BLOCK):
            stop = min(start + DUAL_BLOCK, self.size)
            e = np.zeros((self.size, stop - start))
            e[np.arange(start, stop), np.arange(stop - start)] = 1.0
            z = self.apply(e)
            out[start:stop] = np.sum(z * (operator @ z), axis=0)
        return out


def dual_normalization(z: DualCoefficients, normalization: str = "norm") -> np.ndarray:
    h, J = z.transform.hierarchy, z.transform.depth
    if normalization == "norm":
        return z.column_norms(assemble_operator(h, J, LINEAR_STIFFNESS).matrix) ** -0.5
    scaling = LevelScaling(1.0, J)
    return z.column_norms(assemble_operator(h, J, LINEAR_MASS).matrix) ** -0.5 * scaling.expand(z.transform.sizes)


def dual_operator(transform: MultilevelTransform, normalization: str = "norm"):
    z = DualCoefficients(transform)
    k = assemble_operator(transform.hierarchy, transform.depth, LINEAR_STIFFNESS).matrix
    d = dual_normalization(z, normalization)

    def apply(x):
        return _scale(d, z.apply_transpose(k @ z.apply(_scale(d, x))))

    return _symmetric_operator(transform.size, apply)


def dual_condition(h: MeshHierarchy, J: int, tol: float = 1e-6, max_iter: int | None = None, seed: int = 0,
                   method: str = "auto", normalization: str = "norm",
                   transform: MultilevelTransform | None = None, threads: int = 1) -> ConditionReport:
    """kappa of the H1-normalized dual wavelets on levels 0..J', for every J' <= J.

    h needs J+2 refinements, one more than the primal tables.
    """
    if J > DUAL_LEVEL_CAP:
        raise LevelCapError(f"dual condition numbers are capped at level {DUAL_LEVEL_CAP}, got {J}")
    _check_args(J, normalization, True, h)
    h.require(J + 3)
    transform = transform or build_transform(h, J, threads=threads)
    entries = []
    for k in range(J + 1):
        op = dual_operator(transform.truncated(k), normalization)
        entries.append(_entry(k, op, method, tol, max_iter, seed))
    return ConditionReport(H1_DUAL, normalization, tuple(entries))


def dual_pairing_residual(transform: MultilevelTransform, samples: int = 3, seed: int = 0) -> float:
    """max |D W^T B Z D^-1 x - x| / |x| over random x, for D the dual normalization."""
    z = DualCoefficients(transform)
    d = dual_normalization(z)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = rng.standard_normal(z.size)
        y = d * transform.adjoint(z.mixed @ z.apply(x / d))
        worst = max(worst, float(np.linalg.norm(y - x) / np.linalg.norm(x)))
    return worst


def symmetry_defect(op, samples: int = 3, seed: int = 0) -> float:
    """max |<Gx, y> - <x, Gy>| / (|x| |y|) over random pairs."""
    rng = np.random.default_rng(seed)
    n = op.shape[0]
    worst = 0.0
    for _ in range(samples):
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        worst = max(worst, abs(op.matvec(x) @ y - x @ op.matvec(y)) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return float(worst)


# --- Reference inf-sup constant ---

def lambda_min_check() -> float:
    """lambda_min of the symmetric part of <N, N~>/vol(T)."""
    g = ref.reference_gram("N", "N_tilde").as_array()
    return float(scipy.linalg.eigvalsh((g + g.T) / 2)[0])


def lambda_min_exact(digits: int = 30) -> float:
    """The same value as the smallest real root of the exact characteristic polynomial."""
    g = ref.reference_gram("N", "N_tilde").as_sympy()
    sym = (g + g.T) / 2
    poly = sympy.Poly(sym.charpoly(sympy.Symbol("x")).as_expr(), sympy.Symbol("x"))
    return min(float(r.evalf(digits)) for r in sympy.real_roots(poly))
