"""Matrix cocycle products, Lyapunov-matrix estimates and the rank-one
projection limit along sampled words.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exterior import PushForwardFamily

EIG_CLAMP = 1e-300


@dataclass
class CocycleState:
    """Running renormalized product P[w_0] @ ... @ P[w_{l-1}] of pull-backs."""

    matrix: np.ndarray
    log_scale: float
    length: int


def cocycle_product(family: PushForwardFamily, word, l: int) -> CocycleState:
    word = tuple(word)
    if l < 1 or len(word) < l:
        raise ValueError("word must supply at least l symbols")
    mat = np.array(family.pullbacks[word[0] - 1])
    log_scale = 0.0
    nrm = np.linalg.norm(mat)
    mat /= nrm
    log_scale += math.log(nrm)
    for j in range(1, l):
        mat = mat @ family.pullbacks[word[j] - 1]
        nrm = np.linalg.norm(mat)
        mat /= nrm
        log_scale += math.log(nrm)
    return CocycleState(matrix=mat, log_scale=log_scale, length=l)


@dataclass
class LyapEstimate:
    """Finite-l estimate of the Lyapunov matrix with its spectral data."""

    matrix: np.ndarray
    eigenvalues: np.ndarray  # descending
    gap: float
    l: int
    reduced_rank: bool


def lyap_matrix(family: PushForwardFamily, mu_total: np.ndarray, word, l: int) -> LyapEstimate:
    """[H^l mu H^l.T]^{1/(2l)} via symmetric eigendecomposition.

    The renormalization exponent of the cocycle product is folded back in on
    the logarithmic scale; eigenvalues of the inner matrix are clamped at
    1e-300 before logarithms, and a clamped (numerically collapsed) direction
    flags the estimate as reduced-rank.
    """
    state = cocycle_product(family, word, l)
    inner = state.matrix @ np.asarray(mu_total, dtype=float) @ state.matrix.T
    inner = 0.5 * (inner + inner.T)
    evals, vecs = np.linalg.eigh(inner)
    reduced = bool(np.any(evals < EIG_CLAMP))
    clamped = np.clip(evals, EIG_CLAMP, None)
    log_true = np.log(clamped) + 2.0 * state.log_scale
    lam = np.exp(log_true / (2.0 * l))
    matrix = (vecs * lam) @ vecs.T
    order = np.argsort(-lam)
    lam_sorted = lam[order]
    gap = float(lam_sorted[0] - lam_sorted[1]) if lam.size > 1 else float("inf")
    return LyapEstimate(matrix=matrix, eigenvalues=lam_sorted, gap=gap, l=l,
                        reduced_rank=reduced)


@dataclass
class OseledetsResult:
    """HS-normalized direction of H^l mu H^l.T with its idempotency defect."""

    projection: np.ndarray
    idempotency_defect: float
    rank_indicator: float
    l: int


def oseledets_projection(family: PushForwardFamily, mu_total: np.ndarray,
                         word, l: int) -> OseledetsResult:
    state = cocycle_product(family, word, l)
    inner = state.matrix @ np.asarray(mu_total, dtype=float) @ state.matrix.T
    inner = 0.5 * (inner + inner.T)
    nrm = np.linalg.norm(inner)
    proj = inner / nrm
    trace = float(np.trace(proj))
    if trace <= 0:
        defect = float("inf")
    else:
        p = proj / trace
        defect = float(np.linalg.norm(p @ p - p))
    evals = np.linalg.eigvalsh(proj)
    rank_indicator = float(np.sum(evals > 1e-8 * evals[-1]))
    return OseledetsResult(projection=proj, idempotency_defect=defect,
                           rank_indicator=rank_indicator, l=l)


def hs_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two nonzero symmetric operators in the HS inner product."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    cosang = float(np.tensordot(a, b.T)) / (na * nb)
    return math.acos(min(1.0, max(-1.0, cosang)))
