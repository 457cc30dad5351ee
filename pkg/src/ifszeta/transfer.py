"""The finite-memory matrix transfer operator, its Perron eigendata, cylinder
measures, conditional probabilities and the variational (pressure) suite.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCylinderError, NonconvergenceError
from .exterior import PushForwardFamily, hilbert_metric, product_hilbert_metric
from .ifs import IfsSpec
from .symbolic import Potential


def _assemble_dense(family: PushForwardFamily, memory: int, weights: np.ndarray):
    """Dense block matrix with block (u <- prepend(i, u)) equal to
    weights[(i,) + u] * psi_ops[i].  ``weights`` may be complex."""
    t, m = family.t, family.m
    states = tuple(itertools.product(range(1, t + 1), repeat=memory - 1))
    state_index = {u: j for j, u in enumerate(states)}
    n_states = len(states)
    dense = np.zeros((n_states * m, n_states * m), dtype=np.result_type(weights.dtype, float))
    for u in states:
        row = state_index[u]
        for i in range(1, t + 1):
            v = (i,) + u[:-1] if memory >= 2 else ()
            col = state_index[v]
            w = weights[tuple(s - 1 for s in ((i,) + u))]
            dense[row * m:(row + 1) * m, col * m:(col + 1) * m] += w * family.psi_ops[i - 1]
    return states, state_index, dense


class BlockOperator:
    """Transfer operator for a memory-k potential, realized as a dense square
    matrix of side m * t**(k-1) over the per-state SymBasis coordinates."""

    def __init__(self, family: PushForwardFamily, potential: Potential,
                 ifs: IfsSpec | None = None):
        if potential.t != family.t:
            raise ValueError("potential alphabet does not match the map family")
        self.family = family
        self.potential = potential
        self.ifs = ifs
        self.memory = potential.memory
        weights = np.exp(potential.table)
        self.states, self.state_index, self.dense = _assemble_dense(
            family, potential.memory, weights)
        self._eigs = None

    @property
    def t(self) -> int:
        return self.family.t

    @property
    def m(self) -> int:
        return self.family.m

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def side(self) -> int:
        return self.dense.shape[0]

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """Blockwise application to a (n_states, m) coordinate array; agrees
        with the dense realization and exists as its cross-check."""
        vecs = np.asarray(vecs)
        out = np.zeros_like(vecs)
        exp_table = np.exp(self.potential.table)
        for u in self.states:
            row = self.state_index[u]
            for i in range(1, self.t + 1):
                v = (i,) + u[:-1] if self.memory >= 2 else ()
                w = exp_table[tuple(s - 1 for s in ((i,) + u))]
                out[row] += w * (self.family.psi_ops[i - 1] @ vecs[self.state_index[v]])
        return out

    def eigenvalues(self) -> np.ndarray:
        if self._eigs is None:
            eigs = np.linalg.eigvals(self.dense)
            order = np.argsort(-np.abs(eigs))
            self._eigs = eigs[order]
        return self._eigs

    def spectral_radius(self) -> float:
        return float(np.abs(self.eigenvalues()[0]))

    def second_eigenvalue(self) -> complex:
        eigs = self.eigenvalues()
        return complex(eigs[1]) if len(eigs) > 1 else 0.0j


def build_block_operator(ifs: IfsSpec, q: int, potential: Potential,
                         warn_unverified: bool = True) -> BlockOperator:
    """Assemble the transfer operator of an IFS in exterior degree q."""
    if ifs.t < math.comb(ifs.d, q):
        raise ValueError(
            f"t={ifs.t} < binomial(d,q)={math.comb(ifs.d, q)}: the positive cone "
            "has no finite image diameter and the Perron iteration cannot converge"
        )
    if warn_unverified and not ifs.verified:
        warnings.warn(
            "IFS is not a verified preset; nondegeneracy was not checked "
            "(run check_nd to certify it)", stacklevel=2)
    return BlockOperator(ifs.family(q), potential, ifs=ifs)


def scaled_weight_dense(family: PushForwardFamily, potential: Potential,
                        coef: complex) -> np.ndarray:
    """Dense matrix for weights exp(coef * V); used for complex scans."""
    weights = np.exp(coef * potential.table.astype(complex))
    _, _, dense = _assemble_dense(family, potential.memory, weights)
    return dense


@dataclass
class SpectralResult:
    """Perron data (beta, Q, mu) with convergence diagnostics.

    ``q_coords`` and ``mu_coords`` hold per-state SymBasis coordinates; Q is
    positive-definite per state, mu positive-semidefinite, and the joint
    normalization sum_u (Q_u, mu_u)_HS = 1 is enforced.
    """

    beta: float
    q_coords: np.ndarray
    mu_coords: np.ndarray
    block: BlockOperator
    iterations: int
    theta: float
    diameter: float
    residual_right: float
    residual_left: float

    def q_matrix(self, idx: int) -> np.ndarray:
        return self.block.family.sym.from_coords(self.q_coords[idx])

    def mu_matrix(self, idx: int) -> np.ndarray:
        return self.block.family.sym.from_coords(self.mu_coords[idx])

    def mu_total_coords(self) -> np.ndarray:
        return self.mu_coords.sum(axis=0)

    def mu_total_matrix(self) -> np.ndarray:
        return self.block.family.sym.from_coords(self.mu_total_coords())

    @property
    def pressure(self) -> float:
        return float(np.log(self.beta))


def _state_mats(sym, coords):
    return [sym.from_coords(v) for v in coords]


def _proj_distance(sym, a_coords, b_coords) -> float:
    """Max over states of the per-state projective distance; falls back to a
    normalized HS distance when an iterate is not numerically PD."""
    worst = 0.0
    for av, bv in zip(a_coords, b_coords):
        a = sym.from_coords(av)
        b = sym.from_coords(bv)
        try:
            worst = max(worst, hilbert_metric(a, b))
        except (np.linalg.LinAlgError, ValueError):
            na, nb = np.linalg.norm(a), np.linalg.norm(b)
            if na == 0.0 or nb == 0.0:
                return np.inf
            worst = max(worst, float(np.linalg.norm(a / na - b / nb)))
    return worst


def _random_pd_coords(rng, sym, n_states, extreme=False):
    c = sym.dim_form
    coords = np.empty((n_states, sym.m))
    for s in range(n_states):
        x = rng.standard_normal((c, c))
        if extreme:
            v = rng.standard_normal(c)
            a = np.outer(v, v) + 1e-6 * np.eye(c)
        else:
            a = x @ x.T + 1e-3 * np.eye(c)
        coords[s] = sym.to_coords(a)
    return coords


def cone_image_diameter(block: BlockOperator, n_vectors: int = 24, seed: int = 0) -> float:
    """Sampled projective diameter of the image of the positive cone,
    including near-boundary inputs to probe the extremes."""
    rng = np.random.default_rng(seed)
    sym = block.family.sym
    images = []
    for j in range(n_vectors):
        v = _random_pd_coords(rng, sym, block.n_states, extreme=(j % 3 == 0))
        w = (block.dense @ v.reshape(-1)).reshape(block.n_states, block.m)
        images.append(_state_mats(sym, w))
    diam = 0.0
    for a, b in itertools.combinations(images, 2):
        diam = max(diam, product_hilbert_metric(a, b))
    return diam


@dataclass
class ConeContractionReport:
    diameter: float
    theta_before: np.ndarray
    theta_after: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.theta_after / self.theta_before


def cone_contraction_sample(block: BlockOperator, n_pairs: int = 100,
                            seed: int = 0) -> ConeContractionReport:
    """Contraction ratios theta(Lv, Lw)/theta(v, w) over random PD pairs,
    together with a measured image diameter covering the same pairs."""
    rng = np.random.default_rng(seed)
    sym = block.family.sym
    before, after, images = [], [], []
    for j in range(n_pairs):
        v = _random_pd_coords(rng, sym, block.n_states, extreme=(j % 4 == 0))
        w = _random_pd_coords(rng, sym, block.n_states, extreme=(j % 4 == 1))
        va = _state_mats(sym, v)
        wa = _state_mats(sym, w)
        lv = (block.dense @ v.reshape(-1)).reshape(block.n_states, block.m)
        lw = (block.dense @ w.reshape(-1)).reshape(block.n_states, block.m)
        la = _state_mats(sym, lv)
        lb = _state_mats(sym, lw)
        before.append(product_hilbert_metric(va, wa))
        after.append(product_hilbert_metric(la, lb))
        if len(images) < 60:
            images.extend([la, lb])
    diam = cone_image_diameter(block, seed=seed + 1)
    for a, b in itertools.combinations(images[:60], 2):
        diam = max(diam, product_hilbert_metric(a, b))
    return ConeContractionReport(diameter=diam, theta_before=np.array(before),
                                 theta_after=np.array(after))


def perron(block: BlockOperator, tol: float = 1e-12, max_iter: int = 50_000,
           diameter_seed: int = 0) -> SpectralResult:
    """Cone power iteration for the Perron eigendata of the block operator.

    Starts from the all-identity state vector, renormalizes by the stacked HS
    norm each step, and stops when successive iterates of both the operator
    and its adjoint are within ``tol`` in the per-state projective distance.
    The eigenvalue is the norm ratio at convergence.
    """
    if np.iscomplexobj(block.dense):
        raise ValueError("Perron iteration requires real positive weights")
    sym = block.family.sym
    n_states, m = block.n_states, block.m
    eye_coords = sym.to_coords(np.eye(sym.dim_form))
    v = np.tile(eye_coords, (n_states, 1))
    v /= np.linalg.norm(v)
    u = v.copy()
    a = block.dense
    at = a.T
    theta_r = theta_l = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w = (a @ v.reshape(-1)).reshape(n_states, m)
        w /= np.linalg.norm(w)
        x = (at @ u.reshape(-1)).reshape(n_states, m)
        x /= np.linalg.norm(x)
        theta_r = _proj_distance(sym, v, w)
        theta_l = _proj_distance(sym, u, x)
        v, u = w, x
        if theta_r <= tol and theta_l <= tol:
            break
    else:
        raise NonconvergenceError(
            f"no convergence in {max_iter} iterations (theta={theta_r:.3e})",
            theta=theta_r, diameter=cone_image_diameter(block, seed=diameter_seed))
    av = (a @ v.reshape(-1)).reshape(n_states, m)
    beta = float(np.linalg.norm(av))
    res_r = float(np.linalg.norm(av - beta * v) / (beta * np.linalg.norm(v)))
    atu = (at @ u.reshape(-1)).reshape(n_states, m)
    res_l = float(np.linalg.norm(atu - beta * u) / (beta * np.linalg.norm(u)))
    scale = float(np.einsum("sm,sm->", v, u))
    if scale <= 0:
        raise NonconvergenceError("left/right eigenvectors have nonpositive pairing")
    mu = u / scale
    diameter = cone_image_diameter(block, seed=diameter_seed)
    return SpectralResult(beta=beta, q_coords=v, mu_coords=mu, block=block,
                          iterations=iterations, theta=max(theta_r, theta_l),
                          diameter=diameter, residual_right=res_r,
                          residual_left=res_l)


def solve(ifs: IfsSpec, q: int, potential: Potential, tol: float = 1e-12,
          max_iter: int = 50_000) -> SpectralResult:
    return perron(build_block_operator(ifs, q, potential), tol=tol, max_iter=max_iter)


def pressure(ifs: IfsSpec, q: int, potential: Potential, tol: float = 1e-12) -> float:
    """log of the Perron eigenvalue; satisfies pressure(V + c) = pressure(V) + c."""
    return solve(ifs, q, potential, tol=tol).pressure


def pressure_root(ifs: IfsSpec, q: int, vhat: Potential, tol: float = 1e-10,
                  solver_tol: float = 1e-13) -> float:
    """The unique c with pressure(-c * vhat) = 0 for strictly positive vhat.

    Bisection on the strictly decreasing map c -> P(-c vhat), with automatic
    bracket expansion; returns c with |P(-c vhat)| <= tol.
    """
    if vhat.min <= 0.0:
        raise ValueError("vhat must be strictly positive")

    def p_of(c: float) -> float:
        return pressure(ifs, q, vhat.scaled(-c), tol=solver_tol)

    p0 = p_of(0.0)
    if abs(p0) <= tol:
        return 0.0
    if p0 > 0:
        lo, hi = 0.0, 1.0
        while p_of(hi) > 0:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = -1.0, 0.0
        while p_of(lo) < 0:
            lo, hi = 2.0 * lo, lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pm = p_of(mid)
        if abs(pm) <= tol:
            return mid
        if pm > 0:
            lo = mid
        else:
            hi = mid
    raise NonconvergenceError(f"pressure root bisection stalled on [{lo}, {hi}]")


class CylinderMeasure:
    """Cylinder masses of the matrix measure mu and its scalar shadow kappa.

    Built on a SpectralResult; mu([w]) extends the per-state left eigenvector
    blocks by mu([i.w]) = beta^{-1} e^{V(i, w_1..w_{k-1})} tPsi_i(mu([w])),
    which is exact for finite-memory potentials, and
    kappa([w]) = (Q_state(w), mu([w]))_HS.
    """

    def __init__(self, spectral: SpectralResult):
        self.spectral = spectral
        block = spectral.block
        self.family = block.family
        self.potential = block.potential
        self.k = block.potential.memory
        self.t = block.t
        self.m = block.m
        self.beta = spectral.beta
        self.q_coords = spectral.q_coords
        self.mu_coords = spectral.mu_coords
        self.T = block.family.psi_t_ops
        self.exp_flat = np.exp(block.potential.table).reshape(-1)
        self.table_flat = block.potential.table.reshape(-1)
        self.states = block.states
        self.state_index = block.state_index
        self._states_array = (np.array(block.states, dtype=np.int64).reshape(len(block.states), -1)
                              if self.k >= 2 else np.zeros((1, 0), dtype=np.int64))

    def _sidx(self, word) -> int:
        if self.k == 1:
            return 0
        return self.state_index[tuple(word)]

    # -- cylinder masses -------------------------------------------------

    def mu_coords_of(self, word) -> np.ndarray:
        word = tuple(word)
        k = self.k
        if len(word) < k - 1:
            acc = np.zeros(self.m)
            for i in range(1, self.t + 1):
                acc += self.mu_coords_of(word + (i,))
            return acc
        if len(word) == k - 1:
            return self.mu_coords[self._sidx(word)].copy()
        v = self.mu_coords[self._sidx(word[len(word) - k + 1:])].copy()
        for j in range(len(word) - k, -1, -1):
            window = word[j:j + k]
            w = math.exp(self.potential.value(window)) / self.beta
            v = w * (self.T[word[j] - 1] @ v)
        return v

    def mu(self, word) -> np.ndarray:
        return self.family.sym.from_coords(self.mu_coords_of(word))

    def mu_total(self) -> np.ndarray:
        return self.spectral.mu_total_matrix()

    def kappa(self, word) -> float:
        word = tuple(word)
        if len(word) < self.k - 1:
            return float(sum(self.kappa(word + (i,)) for i in range(1, self.t + 1)))
        qs = self.q_coords[self._sidx(word[: self.k - 1])]
        return float(qs @ self.mu_coords_of(word))

    # -- conditional probabilities ----------------------------------------

    def conditional(self, i: int, tail, depth: int) -> float:
        """Ratio estimator kappa([i . tail_l]) / kappa([tail_l]) at l = depth."""
        tail = tuple(tail)
        if len(tail) < max(depth, self.k - 1):
            raise ValueError("context shorter than the requested depth")
        den = self.kappa(tail[:depth])
        if not np.isfinite(den) or den <= 0.0:
            raise DegenerateCylinderError("conditioning cylinder has zero mass")
        return self.kappa((i,) + tail[:depth]) / den

    def conditional_formula(self, i: int, tail, depth: int) -> float:
        """Closed-form conditional through the normalized density field."""
        tail = tuple(tail)
        if len(tail) < max(depth - 1, self.k - 1):
            raise ValueError("context shorter than the requested depth")
        prefix = (i,) + tail[: depth - 1]
        d = self.density_coords(prefix)
        y = np.linalg.solve(self.T[i - 1], d)
        qs = self.q_coords[self._sidx(tail[: self.k - 1])]
        den = self.beta * float(qs @ y)
        if den <= 0.0 or not np.isfinite(den):
            raise DegenerateCylinderError("degenerate conditional denominator")
        num = math.exp(self.potential.value((i,) + tail[: self.k - 1]))
        return num / den

    # -- density field -----------------------------------------------------

    def density_coords(self, word) -> np.ndarray:
        word = tuple(word)
        if self.k >= 2 and len(word) < self.k - 1:
            raise ValueError("density prefix must cover a state")
        if self.k == 1 and len(word) == 0:
            d = self.mu_coords.sum(axis=0)
        else:
            d = self.mu_coords.sum(axis=0)
            for j in range(len(word) - 1, -1, -1):
                d = self.T[word[j] - 1] @ d
                nrm = np.linalg.norm(d)
                if nrm == 0.0 or not np.isfinite(nrm):
                    raise DegenerateCylinderError("density product collapsed to zero")
                d /= nrm
        qs = self.q_coords[self._sidx(word[: self.k - 1])]
        s = float(qs @ d)
        if s <= 0.0 or not np.isfinite(s):
            raise DegenerateCylinderError("density has zero pairing with Q")
        return d / s

    def density(self, word) -> np.ndarray:
        return self.family.sym.from_coords(self.density_coords(word))

    # -- sampling ----------------------------------------------------------

    def sample_many(self, n: int, count: int, seed: int = 0) -> np.ndarray:
        """Ancestral sampling of ``count`` words of length ``n`` from kappa.

        Sequential conditionals kappa([w.i])/kappa([w]) maintained through a
        renormalized row functional, so arbitrarily long words are stable.
        """
        k, t = self.k, self.t
        if n < max(k - 1, 1):
            raise ValueError(f"need word length at least {max(k - 1, 1)}")
        rng = np.random.default_rng(seed)
        words = np.zeros((count, n), dtype=np.int64)
        if k >= 2:
            masses = np.einsum("sm,sm->s", self.q_coords, self.mu_coords)
            masses = np.clip(masses, 0.0, None)
            cum = np.cumsum(masses / masses.sum())
            sidx = np.searchsorted(cum, rng.random(count), side="right")
            sidx = np.clip(sidx, 0, len(self.states) - 1)
            words[:, : k - 1] = self._states_array[sidx]
            r = self.q_coords[sidx].copy()
            scode = sidx.astype(np.int64)
            start = k - 1
        else:
            r = np.tile(self.q_coords[0], (count, 1))
            scode = np.zeros(count, dtype=np.int64)
            start = 0
        tk1 = t ** (k - 2) if k >= 2 else 1
        cols_k1 = None
        if k == 1:
            cols_k1 = np.einsum("tmp,p->tm", self.T, self.mu_coords[0])
        for pos in range(start, n):
            if k >= 2:
                factor = words[:, pos - k + 1] - 1
                r = np.einsum("nm,nmp->np", r, self.T[factor])
                r /= np.linalg.norm(r, axis=1, keepdims=True)
                child = (scode % tk1) * t + np.arange(t)[:, None]  # (t, N)
                scores = np.einsum("nm,tnm->nt", r, self.mu_coords[child])
                weights = self.exp_flat[scode * t + np.arange(t)[:, None]].T
                scores = np.clip(scores, 0.0, None) * weights
            else:
                scores = np.clip(np.einsum("nm,tm->nt", r, cols_k1), 0.0, None)
                scores = scores * self.exp_flat[None, :]
            probs = scores / scores.sum(axis=1, keepdims=True)
            draws = rng.random(count)
            choice = (np.cumsum(probs, axis=1) < draws[:, None]).sum(axis=1)
            choice = np.clip(choice, 0, t - 1)
            words[:, pos] = choice + 1
            if k >= 2:
                scode = (scode % tk1) * t + choice
            else:
                r = np.einsum("nm,nmp->np", r, self.T[choice])
                r /= np.linalg.norm(r, axis=1, keepdims=True)
        return words

    def sample(self, n: int, seed: int = 0) -> tuple:
        return tuple(int(s) for s in self.sample_many(n, 1, seed=seed)[0])

    # -- batched helpers for the variational suite -------------------------

    def _backward_coords(self, words0: np.ndarray, final: np.ndarray) -> np.ndarray:
        v = final.copy()
        for j in range(words0.shape[1] - 1, -1, -1):
            v = np.einsum("nmp,np->nm", self.T[words0[:, j]], v)
            v /= np.linalg.norm(v, axis=1, keepdims=True)
        return v

    def _codes(self, words0: np.ndarray) -> np.ndarray:
        """Base-t codes of 0-based symbol blocks; on (N, k-1) blocks this
        equals the state index."""
        code = np.zeros(words0.shape[0], dtype=np.int64)
        for j in range(words0.shape[1]):
            code = code * self.t + words0[:, j]
        return code

    def conditional_batch(self, tails: np.ndarray, depth: int) -> np.ndarray:
        """Ratio-estimator conditionals for all symbols, batched over contexts.

        ``tails`` holds 1-based context words, shape (N, >= depth); returns
        an (N, t) array of kappa([i . tail_depth]) / kappa([tail_depth]).
        """
        k, t = self.k, self.t
        tails0 = np.asarray(tails, dtype=np.int64)[:, :depth] - 1
        final = self.mu_coords[self._codes(tails0[:, depth - k + 1:])] if k >= 2 \
            else np.tile(self.mu_coords[0], (tails0.shape[0], 1))
        u = self._backward_coords(tails0[:, : depth - k + 1], final)
        den = np.einsum("nm,nm->n", self.q_coords[self._codes(tails0[:, : k - 1])], u)
        tu = np.einsum("tmp,np->ntm", self.T, u)
        out = np.empty((tails0.shape[0], t))
        head_code = self._codes(tails0[:, : max(k - 2, 0)])
        tail_code = self._codes(tails0[:, : k - 1])
        for i in range(t):
            state_i = i * (t ** max(k - 2, 0)) + head_code if k >= 2 else head_code
            win_code = i * (t ** (k - 1)) + tail_code
            num = np.einsum("nm,nm->n", self.q_coords[state_i], tu[:, i, :])
            out[:, i] = self.exp_flat[win_code] * num / (self.beta * den)
        return out

    def density_batch(self, prefixes: np.ndarray) -> np.ndarray:
        """Normalized density coordinates for a batch of prefixes (N, l)."""
        pre0 = np.asarray(prefixes, dtype=np.int64) - 1
        final = np.tile(self.mu_coords.sum(axis=0), (pre0.shape[0], 1))
        d = self._backward_coords(pre0, final)
        s = np.einsum("nm,nm->n", self.q_coords[self._codes(pre0[:, : self.k - 1])], d)
        return d / s[:, None]


@dataclass
class VariationalReport:
    """Monte-Carlo decomposition of the pressure functional I(m, M)."""

    entropy: float
    energy: float
    interaction: float
    total: float
    se_entropy: float
    se_energy: float
    se_interaction: float
    se_total: float
    n_samples: int
    depth: int
    competitor: str
    norm_violations: int


def _stderr(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / np.sqrt(len(x)))


def variational_value(cm: CylinderMeasure, n_samples: int, depth: int = 24,
                      seed: int = 0, weights=None) -> VariationalReport:
    """Estimate I(m, M) = entropy + potential + interaction by sampling.

    With ``weights=None`` the measure is the cylinder (Kusuoka) measure itself
    and M the depth-truncated density field; with Bernoulli ``weights`` the
    competitor measure is the product measure and M the inverse-Q direction
    rescaled to unit pairing with Q (always admissible).
    """
    k, t = cm.k, cm.t
    length = depth + k + 1
    rng = np.random.default_rng(seed)
    if weights is None:
        words = cm.sample_many(length, n_samples, seed=seed)
        tag = "kusuoka"
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (t,) or np.any(weights <= 0):
            raise ValueError("weights must be positive, one per symbol")
        weights = weights / weights.sum()
        words = rng.choice(t, size=(n_samples, length), p=weights) + 1
        tag = "bernoulli"
    words0 = words - 1
    tails = words[:, 1:]

    if weights is None:
        q = cm.conditional_batch(tails, depth)
    else:
        q = np.tile(weights, (n_samples, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(q > 0, q * np.log(q), 0.0), axis=1)

    energy = cm.table_flat[cm._codes(words0[:, :k])]

    if weights is None:
        m_field = cm.density_batch(tails[:, :depth])
    else:
        sym = cm.family.sym
        minv = np.empty_like(cm.q_coords)
        for s in range(cm.q_coords.shape[0]):
            qm = sym.from_coords(cm.q_coords[s])
            inv = np.linalg.inv(qm)
            coords = sym.to_coords(inv)
            minv[s] = coords / float(cm.q_coords[s] @ coords)
        m_field = minv[cm._codes(words0[:, 1:k])]
    pairing = np.einsum("nm,nm->n", cm.q_coords[cm._codes(words0[:, 1:k])], m_field)
    violations = int(np.sum(np.abs(pairing - 1.0) > 0.01))
    if violations > 0.05 * n_samples:
        raise ValueError(
            f"M field violates the unit-pairing normalization on {violations} "
            f"of {n_samples} samples")
    tm = np.einsum("nmp,np->nm", cm.T[words0[:, 0]], m_field)
    inter_arg = np.einsum("nm,nm->n", cm.q_coords[cm._codes(words0[:, : k - 1])], tm)
    interaction = np.log(inter_arg)

    total = ent + energy + interaction
    return VariationalReport(
        entropy=float(np.mean(ent)), energy=float(np.mean(energy)),
        interaction=float(np.mean(interaction)), total=float(np.mean(total)),
        se_entropy=_stderr(ent), se_energy=_stderr(energy),
        se_interaction=_stderr(interaction), se_total=_stderr(total),
        n_samples=n_samples, depth=depth, competitor=tag,
        norm_violations=violations)


# -- spec-surface aliases ---------------------------------------------------

def cylinder_mu(cm: CylinderMeasure, word) -> np.ndarray:
    return cm.mu(word)


def cylinder_kappa(cm: CylinderMeasure, word) -> float:
    return cm.kappa(word)


def sample_kappa(cm: CylinderMeasure, n: int, seed: int = 0) -> tuple:
    return cm.sample(n, seed=seed)


def conditional_prob(cm: CylinderMeasure, i: int, context, depth: int,
                     method: str = "ratio") -> float:
    if method == "ratio":
        return cm.conditional(i, context, depth)
    if method == "formula":
        return cm.conditional_formula(i, context, depth)
    raise ValueError(f"unknown conditional method {method!r}")


def density_m(cm: CylinderMeasure, word) -> np.ndarray:
    return cm.density(word)
