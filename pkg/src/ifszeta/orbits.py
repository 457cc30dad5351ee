"""Prime periodic orbits, trace-weighted counting functions, the three zeta
representations and the asymptotic normalizations used to check them.
"""
from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericRangeError
from .exterior import PushForwardFamily
from .symbolic import Potential, birkhoff_sums, lyndon_count, words_array
from .transfer import BlockOperator, _assemble_dense

LOG_SCALE_LIMIT = 700.0


def _batch_products(tmats: np.ndarray, words0: np.ndarray):
    """Renormalized products T[w_0] @ ... @ T[w_{n-1}] over word rows.

    Returns (products, log_scales): each stored product has unit HS norm and
    the true matrix is product * exp(log_scale).
    """
    prod = tmats[words0[:, 0]].copy()
    logs = np.zeros(words0.shape[0])
    for j in range(words0.shape[1]):
        if j > 0:
            prod = prod @ tmats[words0[:, j]]
        nrm = np.linalg.norm(prod, axis=(1, 2))
        prod /= nrm[:, None, None]
        logs += np.log(nrm)
    if np.any(np.abs(logs) > LOG_SCALE_LIMIT):
        raise NumericRangeError("accumulated product scale left the double range")
    return prod, logs


def _sorted_alphas(eigs: np.ndarray) -> np.ndarray:
    """Sort eigenvalue rows by modulus descending, real-positive first on ties."""
    order = np.lexsort((np.abs(eigs.imag), -eigs.real, -np.abs(eigs)), axis=-1)
    return np.take_along_axis(eigs, order, axis=-1)


@dataclass(frozen=True)
class OrbitRecord:
    """One prime orbit: its word, weights and the spectrum of the associated
    transpose push-forward product."""

    word: tuple
    period: int
    trace: float
    alphas: np.ndarray  # complex, modulus-descending
    v_tau: float
    n_tau: float
    log_scale: float


def orbit_record(family: PushForwardFamily, potential: Potential, word) -> OrbitRecord:
    """Record for a single prime-orbit representative word."""
    word = tuple(word)
    words0 = np.asarray([tuple(s - 1 for s in word)], dtype=np.int64)
    prod, logs = _batch_products(family.psi_t_ops, words0)
    scale = math.exp(logs[0])
    eigs = _sorted_alphas(np.linalg.eigvals(prod))[0] * scale
    trace = float(np.trace(prod[0]).real * scale)
    v_tau = float(birkhoff_sums(potential, np.asarray([word]))[0])
    return OrbitRecord(word=word, period=len(word), trace=trace, alphas=eigs,
                       v_tau=v_tau, n_tau=math.exp(v_tau), log_scale=float(logs[0]))


@dataclass
class PeriodBlock:
    """All prime orbits of one period: words (rows) plus spectral data."""

    period: int
    words: np.ndarray  # (K, n) 1-based
    alphas: np.ndarray  # (K, m) complex, true scale
    traces: np.ndarray  # (K,)
    log_scales: np.ndarray  # (K,)


@dataclass
class OrbitData:
    """Prime-orbit ensemble up to a period bound, grouped by period."""

    family: PushForwardFamily
    max_period: int
    blocks: dict[int, PeriodBlock]

    def n_orbits(self) -> int:
        return sum(b.words.shape[0] for b in self.blocks.values())

    def birkhoff(self, potential: Potential, period: int) -> np.ndarray:
        return birkhoff_sums(potential, self.blocks[period].words)

    def records(self, potential: Potential):
        for n in sorted(self.blocks):
            blk = self.blocks[n]
            vts = birkhoff_sums(potential, blk.words)
            for row in range(blk.words.shape[0]):
                yield OrbitRecord(
                    word=tuple(int(s) for s in blk.words[row]), period=n,
                    trace=float(blk.traces[row]), alphas=blk.alphas[row],
                    v_tau=float(vts[row]), n_tau=math.exp(float(vts[row])),
                    log_scale=float(blk.log_scales[row]))


def enumerate_orbits(family: PushForwardFamily, max_period: int,
                     workers: int = 1, budget: int | None = None) -> OrbitData:
    """Enumerate all prime orbits of period <= max_period.

    Matrix products are computed in fixed-size row chunks; with several
    workers the chunks run on a thread pool but are concatenated in their
    serial order, so results are identical for any worker count.
    """
    t = family.t
    blocks = {}
    for n in range(1, max_period + 1):
        words = words_array(t, n, "lyndon", budget)
        if words.size == 0:
            continue
        words0 = words - 1
        nrows = words0.shape[0]
        if workers <= 1 or nrows < 4 * workers:
            prod, logs = _batch_products(family.psi_t_ops, words0)
        else:
            bounds = np.linspace(0, nrows, workers + 1, dtype=int)
            chunks = [words0[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(
                    lambda ch: _batch_products(family.psi_t_ops, ch), chunks))
            prod = np.concatenate([p for p, _ in parts])
            logs = np.concatenate([l for _, l in parts])
        scale = np.exp(logs)
        alphas = _sorted_alphas(np.linalg.eigvals(prod)) * scale[:, None]
        traces = np.trace(prod, axis1=1, axis2=2).real * scale
        blocks[n] = PeriodBlock(period=n, words=words, alphas=alphas,
                                traces=traces, log_scales=logs)
    return OrbitData(family=family, max_period=max_period, blocks=blocks)


def fix_sum(family: PushForwardFamily, potential: Potential, n: int,
            method: str = "trace-power", block: BlockOperator | None = None,
            orbit_data: OrbitData | None = None, budget: int | None = None) -> float:
    """a_n = sum over period-n points of e^{V^n} tr(tPsi) by either route.

    "trace-power" sums the n-th powers of the transfer spectrum; "enumeration"
    assembles the value from prime-orbit records through the divisor structure
    of the period-n point set.  The two must agree.
    """
    if method == "trace-power":
        if block is None:
            block = BlockOperator(family, potential)
        eigs = block.eigenvalues()
        return float(np.sum(eigs ** n).real)
    if method == "enumeration":
        if orbit_data is None or orbit_data.max_period < n:
            orbit_data = enumerate_orbits(family, n, budget=budget)
        total = 0.0
        for d in range(1, n + 1):
            if n % d != 0 or d not in orbit_data.blocks:
                continue
            blk = orbit_data.blocks[d]
            k = n // d
            tr_k = np.sum(blk.alphas ** k, axis=1).real
            vts = orbit_data.birkhoff(potential, d)
            total += d * float(np.sum(np.exp(k * vts) * tr_k))
        return total
    raise ValueError(f"unknown fix_sum method {method!r}")


# -- zeta functions ----------------------------------------------------------


@dataclass(frozen=True)
class SeriesZeta:
    value: complex
    tail_bound: float
    n_terms: int


def zeta_series(z: complex, block: BlockOperator, n_terms: int) -> SeriesZeta:
    """exp of the truncated sum over periods of (z^n / n) * a_n, with a_n from
    the transfer spectrum; the reported tail bound is by geometric domination."""
    if n_terms < 0:
        raise ValueError("n_terms must be nonnegative")
    eigs = block.eigenvalues()
    beta = float(np.abs(eigs[0]))
    acc = 0.0j
    zl = np.ones_like(eigs)
    for n in range(1, n_terms + 1):
        zl = zl * (z * eigs)
        acc += np.sum(zl) / n
    value = cmath.exp(acc)
    r = abs(z) * beta
    if r < 1.0:
        log_tail = len(eigs) * r ** (n_terms + 1) / ((n_terms + 1) * (1.0 - r))
        tail = abs(value) * math.expm1(log_tail)
    else:
        tail = math.inf
    return SeriesZeta(value=value, tail_bound=float(tail), n_terms=n_terms)


@dataclass(frozen=True)
class EulerZeta:
    value: complex
    tail_bound: float
    max_period: int


def counted_uniform_logsum(z: complex, t: int, alpha: float, v: float,
                           n_from: int, n_to: int) -> complex:
    """Sum of class-count-weighted log factors for a weight-homogeneous family
    (scalar push-forward, constant potential): every orbit of period n carries
    the identical factor, so the product collapses to counted powers.

    The per-period class counts overflow doubles long before their weighted
    terms become negligible, so count * log(1 - x) is assembled in log space
    with a series for log(1 - x) once x is below double granularity.
    """
    base = alpha * cmath.exp(v) * z
    if abs(base) >= 1.0:
        return complex(math.inf, 0.0)
    growth = t * abs(base)  # bounds count_n * |x_n| ~ growth^n / n
    total = 0.0j
    for n in range(n_from, n_to + 1):
        if growth < 1.0 and growth ** n < 1e-22:
            break
        x = base ** n
        lg = cmath.log(1.0 - x) if abs(x) > 1e-8 else -(x + 0.5 * x * x + x ** 3 / 3.0)
        if lg == 0.0:
            continue
        mag = math.log(lyndon_count(t, n)) + math.log(abs(lg))
        if mag < -745.0:
            continue
        total += cmath.exp(complex(mag, cmath.phase(lg)))
    return total


def zeta_euler(z: complex, orbit_data: OrbitData, potential: Potential,
               beta: float | None = None, counted_tail_to: int | None = None) -> EulerZeta:
    """Truncated product over prime orbits of prod_j (1 - alpha_j e^V z^n)^{-1}.

    ``counted_tail_to`` extends the product by counted per-period factors,
    valid only when all orbits of equal period share their weights (checked:
    one-dimensional push-forward, equal scalars, constant potential).
    """
    log_sum = 0.0j
    effective_period = orbit_data.max_period
    for n, blk in orbit_data.blocks.items():
        vts = orbit_data.birkhoff(potential, n)
        xs = blk.alphas * (np.exp(vts)[:, None] * (z ** n))
        if np.any(np.abs(xs) >= 1.0):
            return EulerZeta(value=complex(math.inf, 0.0), tail_bound=math.inf,
                             max_period=effective_period)
        log_sum += np.sum(np.log(1.0 - xs))
    if counted_tail_to is not None and counted_tail_to > orbit_data.max_period:
        fam = orbit_data.family
        scalars = fam.psi_t_ops.reshape(fam.t, -1)
        if fam.m != 1 or not np.allclose(scalars, scalars[0, 0]):
            raise ValueError("counted tail needs a one-dimensional, symbol-"
                             "independent push-forward")
        if float(np.ptp(potential.table)) != 0.0:
            raise ValueError("counted tail needs a constant potential")
        log_sum += counted_uniform_logsum(
            z, fam.t, float(scalars[0, 0]), float(potential.table.reshape(-1)[0]),
            orbit_data.max_period + 1, counted_tail_to)
        effective_period = counted_tail_to
    value = cmath.exp(-log_sum)
    if beta is None:
        tail = math.nan
    else:
        r = abs(z) * beta
        if r < 1.0:
            dim = orbit_data.family.m * orbit_data.family.t ** (potential.memory - 1)
            log_tail = dim * r ** (effective_period + 1) / (1.0 - r)
            tail = abs(value) * math.expm1(log_tail)
        else:
            tail = math.inf
    return EulerZeta(value=value, tail_bound=float(tail), max_period=effective_period)


@dataclass(frozen=True)
class RationalZeta:
    value: complex | None
    det: complex
    near_pole: bool


def zeta_rational(z: complex, block) -> RationalZeta:
    """1 / det(Id - z L) through an LU determinant; a vanishing determinant is
    tagged as a pole indicator instead of dividing."""
    dense = block.dense if isinstance(block, BlockOperator) else np.asarray(block)
    mat = np.eye(dense.shape[0], dtype=complex) - z * dense
    det = complex(np.linalg.det(mat))
    if abs(det) < 1e-12:
        return RationalZeta(value=None, det=det, near_pole=True)
    return RationalZeta(value=1.0 / det, det=det, near_pole=False)


def find_real_pole(block: BlockOperator, z_max: float | None = None,
                   tol: float = 1e-12) -> float:
    """First root of det(Id - z L) on the positive real axis (bisection)."""
    dense = block.dense

    def det_at(z: float) -> float:
        return float(np.linalg.det(np.eye(dense.shape[0]) - z * dense).real)

    radius = block.spectral_radius()
    if z_max is None:
        z_max = 1.5 / radius
    lo, flow = 0.0, det_at(0.0)
    hi = z_max
    steps = 64
    grid = np.linspace(0.0, z_max, steps + 1)
    vals = [det_at(z) for z in grid]
    bracket = None
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            return float(a)
        if fa * fb < 0:
            bracket = (a, b, fa, fb)
            break
    if bracket is None:
        raise ValueError("no sign change of det(Id - zL) on the scanned range")
    a, b, fa, fb = bracket
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = det_at(mid)
        if fm == 0.0:
            return float(mid)
        if fa * fm < 0:
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return float(0.5 * (a + b))


def zeta_minus_v(s: complex, family: PushForwardFamily, potential: Potential) -> RationalZeta:
    """The weight-scan zeta at complex s: 1/det(Id - L_{-sV})."""
    from .transfer import scaled_weight_dense
    dense = scaled_weight_dense(family, potential, -s)
    return zeta_rational(1.0, dense)


def zeta_minus_v_logderiv(s: complex, family: PushForwardFamily,
                          potential: Potential) -> complex:
    """Exact logarithmic derivative d/ds log zeta_{-V}(s) via the trace formula
    tr((Id - L)^{-1} dL/ds)."""
    weights = np.exp(-s * potential.table.astype(complex))
    _, _, dense = _assemble_dense(family, potential.memory, weights)
    _, _, ddense = _assemble_dense(
        family, potential.memory, -potential.table.astype(complex) * weights)
    mat = np.eye(dense.shape[0], dtype=complex) - dense
    return complex(np.trace(np.linalg.solve(mat, ddense)))


@dataclass
class LineScanResult:
    y: np.ndarray
    det: np.ndarray
    min_modulus: float
    argmin_y: float
    exclusion: float


def line_scan(family: PushForwardFamily, potential: Potential, y_values,
              exclude: float = 0.05) -> LineScanResult:
    """|det(Id - L_{-(1+iy)V})| along the critical line; the reported minimum
    excludes the neighborhood |y| < exclude of the pole at y = 0."""
    from .transfer import scaled_weight_dense
    y_values = np.asarray(y_values, dtype=float)
    dets = np.empty(y_values.shape, dtype=complex)
    eye = None
    for idx, y in enumerate(y_values):
        dense = scaled_weight_dense(family, potential, -(1.0 + 1j * y))
        if eye is None:
            eye = np.eye(dense.shape[0], dtype=complex)
        dets[idx] = np.linalg.det(eye - dense)
    mask = np.abs(y_values) >= exclude
    if not np.any(mask):
        raise ValueError("exclusion removed the whole grid")
    mods = np.abs(dets[mask])
    pos = int(np.argmin(mods))
    return LineScanResult(y=y_values, det=dets, min_modulus=float(mods[pos]),
                          argmin_y=float(y_values[mask][pos]), exclusion=exclude)


# -- counting functions ------------------------------------------------------


def _step_eval(thresholds: np.ndarray, cum: np.ndarray, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    idx = np.searchsorted(thresholds, r, side="right")
    padded = np.concatenate([[0.0], cum])
    return padded[idx]


@dataclass
class CountingTables:
    """Exact finite truncations of the orbit-counting functions.

    pi and s live on the weight scale (thresholds e^{V(tau)} and powers);
    pi_prime and eta live on the period scale.  Values are exact for
    arguments up to ``exact_weight`` / ``exact_period``; beyond that orbits
    outside the enumeration could contribute.
    """

    max_period: int
    c: float
    pi_thresholds: np.ndarray
    pi_cum: np.ndarray
    pi_prime_thresholds: np.ndarray
    pi_prime_cum: np.ndarray
    eta_thresholds: np.ndarray
    eta_cum: np.ndarray
    s_thresholds: np.ndarray
    s_cum: np.ndarray
    exact_period: int
    exact_weight: float

    def pi(self, r):
        return _step_eval(self.pi_thresholds, self.pi_cum, r)

    def pi_prime(self, r):
        return _step_eval(self.pi_prime_thresholds, self.pi_prime_cum, r)

    def eta(self, r):
        return _step_eval(self.eta_thresholds, self.eta_cum, r)

    def s_fun(self, r):
        return _step_eval(self.s_thresholds, self.s_cum, r)


def counting_tables(family: PushForwardFamily, vhat: Potential, c: float,
                    max_period: int, orbit_data: OrbitData | None = None,
                    budget: int | None = None) -> CountingTables:
    """Assemble pi, pi', eta and S from all prime orbits of period <= max_period.

    ``c`` is the pressure root for vhat (nonzero); orbit weights are
    N(tau) = exp(|c| vhat(tau)).  pi' and eta are weight-free.
    """
    if c == 0.0:
        raise ValueError("c must be nonzero")
    if vhat.min <= 0.0:
        raise ValueError("vhat must be strictly positive")
    if orbit_data is None or orbit_data.max_period < max_period:
        orbit_data = enumerate_orbits(family, max_period, budget=budget)
    abs_c = abs(c)
    exact_weight = math.exp(abs_c * vhat.min * (max_period + 1))

    pp_t, pp_w = [], []
    eta_events = {}
    pi_t, pi_w = [], []
    s_t, s_w = [], []
    for n in sorted(orbit_data.blocks):
        if n > max_period:
            continue
        blk = orbit_data.blocks[n]
        vts = abs_c * orbit_data.birkhoff(vhat, n)
        n_tau = np.exp(vts)
        pp_t.append(n)
        pp_w.append(float(np.sum(blk.traces)))
        k = 1
        while k * n <= max_period:
            tr_k = np.sum(blk.alphas ** k, axis=1).real
            eta_events[k * n] = eta_events.get(k * n, 0.0) + n * float(np.sum(tr_k))
            k += 1
        pi_t.append(n_tau)
        pi_w.append(blk.traces)
        log_n = vts
        kmax = np.floor(np.log(exact_weight) / log_n).astype(np.int64)
        kmax = np.maximum(kmax, 1)
        for k in range(1, int(kmax.max()) + 1):
            mask = kmax >= k
            if not np.any(mask):
                break
            tr_k = np.sum(blk.alphas[mask] ** k, axis=1).real
            s_t.append(n_tau[mask] ** k)
            s_w.append(log_n[mask] * tr_k)

    def _sorted_events(ts, ws):
        ts = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in ts])
        ws = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in ws])
        order = np.argsort(ts, kind="stable")
        return ts[order], np.cumsum(ws[order])

    pi_thr, pi_cum = _sorted_events(pi_t, pi_w)
    pp_thr, pp_cum = _sorted_events([np.array(pp_t)], [np.array(pp_w)])
    eta_keys = np.array(sorted(eta_events), dtype=float)
    eta_cum = np.cumsum([eta_events[int(kk)] for kk in eta_keys])
    s_thr, s_cum = _sorted_events(s_t, s_w)
    return CountingTables(
        max_period=max_period, c=c,
        pi_thresholds=pi_thr, pi_cum=pi_cum,
        pi_prime_thresholds=pp_thr, pi_prime_cum=pp_cum,
        eta_thresholds=eta_keys, eta_cum=np.asarray(eta_cum, dtype=float),
        s_thresholds=s_thr, s_cum=s_cum,
        exact_period=max_period, exact_weight=exact_weight)


@dataclass
class RescaledCounts:
    thresholds: np.ndarray
    cum: np.ndarray
    exact_weight: float
    c: float

    def pi_hat(self, r):
        return _step_eval(self.thresholds, self.cum, r)

    def normalized(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.pi_hat(r) * np.log(r) / r ** abs(self.c)


def rescale_counts(tables: CountingTables, c: float) -> RescaledCounts:
    """pi_hat(r) = pi(r^{|c|}) as an exact threshold reindexing, together with
    the pi_hat(r) log(r) / r^{|c|} normalization."""
    if c == 0.0:
        raise ValueError("rescaling needs c != 0")
    return RescaledCounts(thresholds=tables.pi_thresholds ** (1.0 / abs(c)),
                          cum=tables.pi_cum,
                          exact_weight=tables.exact_weight ** (1.0 / abs(c)), c=c)


def asymptotic_report(tables: CountingTables, beta: float, c: float,
                      gamma_prime: float = 1.5, r_values=None) -> dict:
    """Normalized counting sequences with their asserted bounds attached.

    Columns: the raw counts at each grid r plus r*pi'(r)/beta^r,
    pi'(r)/beta^(gamma'*r), pi(r)*log(r)/r, S(r)/r, the geometric eta model
    and the constant bound columns.
    """
    if r_values is None:
        r_values = np.arange(1.0, tables.max_period + 1.0)
    r = np.asarray(r_values, dtype=float)
    pi_r = tables.pi(r)
    ppr = tables.pi_prime(r)
    eta_r = tables.eta(r)
    s_r = tables.s_fun(r)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        beta_pow = beta ** r
        rows = {
            "r": r,
            "pi": pi_r,
            "pi_prime": ppr,
            "eta": eta_r,
            "s": s_r,
            "r_pi_prime_over_beta_r": r * ppr / beta_pow,
            "pi_prime_over_beta_gamma_r": ppr / beta ** (gamma_prime * r),
            "pi_log_r_over_r": pi_r * np.log(r) / r,
            "s_over_r": s_r / r,
            "eta_model": beta * (beta_pow - 1.0) / (beta - 1.0) if beta != 1.0
            else r * 0.0,
            "bound_beta_ratio": np.full_like(r, beta / (beta - 1.0) if beta > 1.0
                                             else np.nan),
            "bound_pi_log": np.full_like(
                r, beta / (beta - 1.0) * math.log(beta) if beta > 1.0 else np.nan),
        }
    rows["eta_abs_err"] = np.abs(rows["eta"] - rows["eta_model"])
    return rows


def fit_geometric_error(tables: CountingTables, beta: float) -> dict:
    """Fit a positive rate eps with |eta(r) - geometric model| <= D2 beta^r e^{-eps r}.

    The decay statement is asymptotic and holds in the beta > 1 regime; eps is
    fitted from the tail half of the range (half the worst tail rate) and the
    prefactor D2 absorbs the small-r errors.  Errors at floating-point zero
    are skipped.
    """
    r = np.arange(1.0, tables.max_period + 1.0)
    model = beta * (beta ** r - 1.0) / (beta - 1.0)
    err = np.abs(tables.eta(r) - model)
    rel = err / beta ** r
    tail = (r >= max(2.0, tables.max_period / 2.0)) & (rel > 0.0)
    if not np.any(tail):
        return {"eps": 1.0, "d2": 0.0, "r": r, "err": err, "rescaled": rel}
    rates = -np.log(rel[tail]) / r[tail]
    eps = 0.5 * float(np.min(rates))
    rescaled = err * np.exp(eps * r) / beta ** r
    return {"eps": eps, "d2": float(np.max(rescaled)), "r": r, "err": err,
            "rescaled": rescaled}
