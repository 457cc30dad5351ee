"""Affine iterated function systems: presets, validation, coding map.

Symbols are 1-based (alphabet 1..t) throughout the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NondegeneracyError
from .exterior import push_forward_family, qform_basis

DEGENERACY_FLOOR = 1e-8


@dataclass(frozen=True)
class AffineMap:
    """x -> linear @ x + offset with an invertible, contractive linear part."""

    linear: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        return self.linear @ np.asarray(x, dtype=float) + self.offset

    @property
    def lip(self) -> float:
        return float(np.linalg.norm(self.linear, 2))

    @property
    def fixed_point(self) -> np.ndarray:
        d = self.linear.shape[0]
        return np.linalg.solve(np.eye(d) - self.linear, self.offset)


def affine_map(linear, offset) -> AffineMap:
    linear = np.asarray(linear, dtype=float)
    offset = np.asarray(offset, dtype=float).reshape(-1)
    if linear.ndim != 2 or linear.shape[0] != linear.shape[1]:
        raise ValueError("linear part must be a square matrix")
    if linear.shape[0] != offset.shape[0]:
        raise ValueError("offset dimension must match the linear part")
    if np.linalg.norm(linear, 2) >= 1.0:
        raise ValueError("linear part must be a strict contraction in operator norm")
    if abs(np.linalg.det(linear)) <= 1e-12:
        raise ValueError("linear part must be invertible")
    return AffineMap(linear=linear, offset=offset)


@dataclass(frozen=True)
class IfsSpec:
    """A finite family of contractive affine bijections of R^d.

    ``verified`` marks presets whose geometric separation hypotheses are
    known to hold; user-supplied systems carry ``verified=False`` and all
    symbolic computations proceed regardless, since they rest only on
    contractivity and nondegeneracy.
    """

    maps: tuple[AffineMap, ...]
    d: int
    t: int
    eta: float
    verified: bool = False
    name: str = "custom"

    def linear_parts(self):
        return [m.linear for m in self.maps]

    def family(self, q: int):
        if self.t < math.comb(self.d, q):
            raise ValueError(
                f"t={self.t} maps cannot be nondegenerate in degree q={q}: "
                f"need at least binomial(d,q)={math.comb(self.d, q)}"
            )
        return push_forward_family(self.linear_parts(), q)


def ifs_spec(maps, verified: bool = False, name: str = "custom") -> IfsSpec:
    maps = tuple(maps)
    if len(maps) < 2:
        raise ValueError("an iterated function system needs at least two maps")
    d = maps[0].linear.shape[0]
    if any(m.linear.shape[0] != d for m in maps):
        raise ValueError("all maps must act on the same space")
    eta = max(m.lip for m in maps)
    return IfsSpec(maps=maps, d=d, t=len(maps), eta=eta, verified=verified, name=name)


def harmonic_gasket() -> IfsSpec:
    """The harmonic Sierpinski gasket on R^2 (three maps, vertices A, B, C)."""
    s3 = math.sqrt(3.0)
    t1 = np.array([[3 / 5, 0.0], [0.0, 1 / 5]])
    t2 = np.array([[3 / 10, s3 / 10], [s3 / 10, 1 / 2]])
    t3 = np.array([[3 / 10, -s3 / 10], [-s3 / 10, 1 / 2]])
    vb = np.array([1.0, 1.0 / s3])
    vc = np.array([1.0, -1.0 / s3])
    maps = (
        affine_map(t1, np.zeros(2)),
        affine_map(t2, vb - t2 @ vb),
        affine_map(t3, vc - t3 @ vc),
    )
    return IfsSpec(maps=maps, d=2, t=3, eta=max(m.lip for m in maps),
                   verified=True, name="harmonic_gasket")


def dyadic_interval() -> IfsSpec:
    """Two maps x/2 and x/2 + 1/2 on the line; attractor [0, 1]."""
    maps = (
        affine_map(np.array([[0.5]]), np.array([0.0])),
        affine_map(np.array([[0.5]]), np.array([0.5])),
    )
    return IfsSpec(maps=maps, d=1, t=2, eta=0.5, verified=True, name="dyadic_interval")


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_family(rho: float) -> IfsSpec:
    """Three maps rho * R(2*pi*k/3) anchored at unit-triangle vertices.

    A symbolic test family: for rho near 1 the transfer spectral radius
    exceeds one (it equals 3*rho^2 in degree 1), so orbit counts grow.
    No geometric separation is claimed.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    verts = [np.array([0.0, 0.0]), np.array([1.0, 0.0]),
             np.array([0.5, math.sqrt(3.0) / 2.0])]
    maps = []
    for k, v in enumerate(verts):
        lin = rho * _rotation(2.0 * math.pi * k / 3.0)
        maps.append(affine_map(lin, v - lin @ v))
    return IfsSpec(maps=tuple(maps), d=2, t=3, eta=rho,
                   verified=True, name="rotation_family")


def rotation_pair(rho: float) -> IfsSpec:
    """Two maps rho * R(0) and rho * R(pi/2); a two-symbol family with
    transfer spectral radius 2*rho^2 in degree 1.  Symbolic preset only."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    verts = [np.array([0.0, 0.0]), np.array([1.0, 0.0])]
    angles = [0.0, math.pi / 2.0]
    maps = []
    for v, ang in zip(verts, angles):
        lin = rho * _rotation(ang)
        maps.append(affine_map(lin, v - lin @ v))
    return IfsSpec(maps=tuple(maps), d=2, t=2, eta=rho,
                   verified=True, name="rotation_pair")


PRESETS = {
    "harmonic_gasket": harmonic_gasket,
    "dyadic_interval": dyadic_interval,
    "rotation_family": rotation_family,
    "rotation_pair": rotation_pair,
}


@dataclass(frozen=True)
class NdEstimate:
    """Monte-Carlo lower-envelope estimate of the nondegeneracy constant."""

    gamma: float
    witness_c: np.ndarray
    witness_e: np.ndarray
    n_samples: int


def check_nd(ifs: IfsSpec, q: int, n_samples: int = 4096, seed: int = 0) -> NdEstimate:
    """Estimate min over unit (c, e) of max_i |(P_i c, e)| by sampling.

    Deterministic for a fixed seed, and monotone nonincreasing in n_samples
    on the fixed sample stream.  Raises NondegeneracyError with the worst
    witness pair when the estimate is numerically zero.
    """
    if ifs.t < math.comb(ifs.d, q):
        raise ValueError(
            f"nondegeneracy requires t >= binomial(d,q) = {math.comb(ifs.d, q)}, "
            f"got t = {ifs.t}"
        )
    fam = ifs.family(q)
    c_dim = fam.dim_form
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_samples, 2, c_dim))
    raw /= np.linalg.norm(raw, axis=2, keepdims=True)
    cs, es = raw[:, 0, :], raw[:, 1, :]
    pc = np.einsum("tij,nj->nti", fam.pullbacks, cs)
    scores = np.max(np.abs(np.einsum("nti,ni->nt", pc, es)), axis=1)
    worst = int(np.argmin(scores))
    gamma = float(scores[worst])
    est = NdEstimate(gamma=gamma, witness_c=cs[worst], witness_e=es[worst],
                     n_samples=n_samples)
    if gamma <= DEGENERACY_FLOOR:
        raise NondegeneracyError(
            f"nondegeneracy estimate {gamma:.3e} at or below floor "
            f"{DEGENERACY_FLOOR:.0e}", gamma=gamma,
            witness=(est.witness_c, est.witness_e),
        )
    return est


def attractor_diameter(ifs: IfsSpec, depth: int = 8) -> float:
    """Upper bound for the attractor diameter.

    Pushes the fixed-point set through all words of the given depth and takes
    the bounding-box diagonal of the resulting cloud, plus eta^(depth+1) slack
    for the parts of the attractor not yet resolved.
    """
    while ifs.t ** depth > 100_000 and depth > 1:
        depth -= 1
    pts = np.array([m.fixed_point for m in ifs.maps])
    for _ in range(depth):
        pts = np.concatenate([pts @ m.linear.T + m.offset for m in ifs.maps])
    box = pts.max(axis=0) - pts.min(axis=0)
    return float(np.linalg.norm(box) + ifs.eta ** (depth + 1))


@dataclass(frozen=True)
class CodedPoint:
    point: np.ndarray
    error_bound: float


def code_point(ifs: IfsSpec, word, anchor=None, diam_bound=None) -> CodedPoint:
    """Image of the anchor under the word's map composition, with the
    distance bound eta^len(word) * diam to any point of the coded cell."""
    if diam_bound is None:
        diam_bound = attractor_diameter(ifs)
    if anchor is None:
        anchor = ifs.maps[0].fixed_point
    x = np.asarray(anchor, dtype=float)
    for s in reversed(tuple(word)):
        if not 1 <= s <= ifs.t:
            raise ValueError(f"symbol {s} outside alphabet 1..{ifs.t}")
        x = ifs.maps[s - 1](x)
    return CodedPoint(point=x, error_bound=float(ifs.eta ** len(tuple(word)) * diam_bound))
