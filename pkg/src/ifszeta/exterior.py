"""Exterior-power linear algebra and the geometry of symmetric operators.

Pull-backs of linear maps acting on degree-q forms, the induced congruence
(push-forward) action on symmetric operators, Hilbert-Schmidt inner products,
an orthonormal basis of the symmetric-operator space, and the projective
(Hilbert) metric on the positive-definite cone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

SYM_TOL = 1e-12


@dataclass(frozen=True)
class QFormBasis:
    """Lexicographic basis {e_S : S = (s_1 < ... < s_q)} of degree-q forms on R^d."""

    d: int
    q: int
    subsets: tuple[tuple[int, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.subsets)


def qform_basis(d: int, q: int) -> QFormBasis:
    if not 1 <= q <= d:
        raise ValueError(f"form degree q={q} must lie in 1..{d}")
    return QFormBasis(d=d, q=q, subsets=tuple(itertools.combinations(range(d), q)))


def pullback_matrix(a: np.ndarray, q: int) -> np.ndarray:
    """Matrix of the degree-q pull-back w -> w(A., ..., A.) in qform_basis order.

    Contravariant under composition:
    ``pullback_matrix(a @ b, q) == pullback_matrix(b, q) @ pullback_matrix(a, q)``.
    For q == d the matrix is ``[[det a]]``; for q == 1 it is ``a.T``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    basis = qform_basis(a.shape[0], q)
    c = basis.dim
    p = np.empty((c, c))
    for col, s in enumerate(basis.subsets):
        for row, t in enumerate(basis.subsets):
            sub = a[np.ix_(s, t)]
            p[row, col] = sub[0, 0] if len(s) == 1 else np.linalg.det(sub)
    return p


def push_forward(p: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Congruence ``p.T @ a @ p``; maps PSD operators to PSD operators."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    if p.shape != a.shape or p.shape[0] != p.shape[1]:
        raise ValueError("pull-back matrix and operator must share a square shape")
    return p.T @ a @ p


def push_forward_t(p: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Transpose variant ``p @ a @ p.T`` (the HS-adjoint congruence)."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    if p.shape != a.shape or p.shape[0] != p.shape[1]:
        raise ValueError("pull-back matrix and operator must share a square shape")
    return p @ a @ p.T


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Hilbert-Schmidt product tr(a b) of symmetric operators."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("operators must have equal dimensions")
    return float(np.tensordot(a, b.T))


def hs_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def check_symmetric(a: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a - a.T) > tol * max(np.linalg.norm(a), 1e-300):
        raise ValueError("operator is not symmetric")
    return a


def _whiten(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return L^{-1} b L^{-T} for the Cholesky factor a = L L^T."""
    la = np.linalg.cholesky(a)
    x = np.linalg.solve(la, b)
    w = np.linalg.solve(la, x.T).T
    return 0.5 * (w + w.T)


def _require_pd(a: np.ndarray, label: str = "operator") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    evals = np.linalg.eigvalsh(a)
    if evals[0] <= 1e-12 * max(np.linalg.norm(a), 1e-300):
        raise ValueError(f"{label} is not positive-definite")
    return a


def hilbert_metric(a: np.ndarray, b: np.ndarray) -> float:
    """Projective distance log(lambda_max / lambda_min) of a^{-1} b.

    Both arguments must be positive-definite; the value is zero exactly on
    rays (b = c a).  Computed through a Cholesky whitening of ``a`` so the
    spectrum is that of a symmetric matrix.
    """
    a = _require_pd(a)
    b = _require_pd(b)
    evals = np.linalg.eigvalsh(_whiten(a, b))
    return float(np.log(evals[-1] / evals[0]))


def product_hilbert_metric(avecs, bvecs) -> float:
    """Hilbert metric on a product of PD cones (stacked positive operators).

    The order interval over all components is governed by the global extremes
    of the whitened spectra, so the distance is
    log(max over components of lambda_max / min over components of lambda_min).
    """
    top = -np.inf
    bot = np.inf
    for a, b in zip(avecs, bvecs):
        evals = np.linalg.eigvalsh(_whiten(_require_pd(a), _require_pd(b)))
        top = max(top, evals[-1])
        bot = min(bot, evals[0])
    return float(np.log(top / bot))


@dataclass(frozen=True)
class SymBasis:
    """HS-orthonormal basis of symmetric operators on a C-dimensional space.

    Diagonal elements are e_i (x) e_i (PSD); off-diagonal elements carry the
    1/sqrt(2) unit-norm factor so matrix traces of operator representations
    agree exactly with operator traces.
    """

    dim_form: int
    elements: np.ndarray  # shape (m, C, C)

    @property
    def m(self) -> int:
        return self.elements.shape[0]

    def to_coords(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("aij,ji->a", self.elements, np.asarray(a, dtype=float))

    def from_coords(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("a,aij->ij", np.asarray(v, dtype=float), self.elements)

    def operator_matrix(self, p: np.ndarray) -> np.ndarray:
        """m x m matrix, in this basis, of the congruence A -> p.T A p."""
        images = np.einsum("ji,ajk,kl->ail", p, self.elements, p)
        return np.einsum("bij,aji->ab", images, self.elements)


def sym_basis(dim_form: int) -> SymBasis:
    if dim_form < 1:
        raise ValueError("form dimension must be at least 1")
    c = dim_form
    elems = []
    for i in range(c):
        for j in range(i, c):
            e = np.zeros((c, c))
            if i == j:
                e[i, i] = 1.0
            else:
                e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            elems.append(e)
    return SymBasis(dim_form=c, elements=np.array(elems))


@dataclass(frozen=True)
class PushForwardFamily:
    """Per-symbol pull-backs and their congruence actions in SymBasis coordinates.

    ``pullbacks[i]`` is the C x C degree-q pull-back of the i-th linear part;
    ``psi_ops[i]`` represents A -> P_i.T A P_i and ``psi_t_ops[i]`` its
    HS-adjoint A -> P_i A P_i.T (an exact matrix transpose).
    """

    q: int
    basis: QFormBasis
    sym: SymBasis
    pullbacks: np.ndarray  # (t, C, C)
    psi_ops: np.ndarray  # (t, m, m)
    psi_t_ops: np.ndarray  # (t, m, m)

    @property
    def t(self) -> int:
        return self.pullbacks.shape[0]

    @property
    def dim_form(self) -> int:
        return self.basis.dim

    @property
    def m(self) -> int:
        return self.sym.m


def push_forward_family(linear_parts, q: int) -> PushForwardFamily:
    """Build the family of push-forward operators for a list of d x d linear maps.

    Every linear part must be a contraction in operator norm; the induced
    congruences then have spectral radius strictly below one, which is
    verified here.
    """
    mats = [np.asarray(m, dtype=float) for m in linear_parts]
    if not mats:
        raise ValueError("at least one linear part is required")
    d = mats[0].shape[0]
    basis = qform_basis(d, q)
    sym = sym_basis(basis.dim)
    pullbacks = np.array([pullback_matrix(m, q) for m in mats])
    psi_ops = np.array([sym.operator_matrix(p) for p in pullbacks])
    psi_t_ops = np.array([op.T.copy() for op in psi_ops])
    for i, op in enumerate(psi_ops):
        rad = np.max(np.abs(np.linalg.eigvals(op)))
        if rad >= 1.0:
            raise ValueError(
                f"push-forward of map {i} has spectral radius {rad:.6g} >= 1; "
                "the linear parts must be contractions"
            )
    return PushForwardFamily(
        q=q, basis=basis, sym=sym, pullbacks=pullbacks,
        psi_ops=psi_ops, psi_t_ops=psi_t_ops,
    )
