"""Words, cylinders, periodic points, prime-orbit enumeration and potentials
on the full shift over t symbols.  Words are tuples over the alphabet 1..t.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BudgetError

ENUMERATION_BUDGET = 50_000_000


def _check_budget(t: int, n: int, budget: int | None = None):
    limit = ENUMERATION_BUDGET if budget is None else budget
    if t ** n > limit:
        raise BudgetError(
            f"enumerating period {n} over {t} symbols needs {t ** n} words, "
            f"exceeding the budget of {limit}"
        )


def fix_points(t: int, n: int, budget: int | None = None):
    """All period-n sequences (as length-n words), lexicographic order."""
    if n < 1:
        raise ValueError("period must be at least 1")
    _check_budget(t, n, budget)
    return itertools.product(range(1, t + 1), repeat=n)


def fix_points_block(t: int, n: int, lead: int, budget: int | None = None):
    """The block of fix_points(t, n) with a fixed leading symbol; the
    concatenation over lead = 1..t reproduces the serial order exactly."""
    if not 1 <= lead <= t:
        raise ValueError("leading symbol outside alphabet")
    _check_budget(t, n, budget)
    if n == 1:
        return iter([(lead,)])
    return ((lead,) + w for w in itertools.product(range(1, t + 1), repeat=n - 1))


def lyndon_words(t: int, n: int, budget: int | None = None):
    """Lyndon words of length exactly n over 1..t, in lexicographic order.

    These are the canonical representatives of the cyclic classes of minimal
    period exactly n (Duval's algorithm).
    """
    if n < 1:
        raise ValueError("period must be at least 1")
    _check_budget(t, n, budget)

    def gen():
        w = [-1]
        while w:
            w[-1] += 1
            m = len(w)
            if m == n:
                yield tuple(s + 1 for s in w)
            while len(w) < n:
                w.append(w[-m])
            while w and w[-1] == t - 1:
                w.pop()

    return gen()


def _mobius(n: int) -> int:
    if n == 1:
        return 1
    res = 1
    p = 2
    while p * p <= n:
        if n % p == 0:
            n //= p
            if n % p == 0:
                return 0
            res = -res
        p += 1
    if n > 1:
        res = -res
    return res


def lyndon_count(t: int, n: int) -> int:
    """Number of cyclic classes of minimal period exactly n (exact integer)."""
    total = sum(_mobius(d) * t ** (n // d) for d in range(1, n + 1) if n % d == 0)
    return total // n


def rotate(word, k: int):
    n = len(word)
    k %= n
    return tuple(word[k:]) + tuple(word[:k])


@dataclass(frozen=True)
class Potential:
    """A potential of finite memory: a full table over alphabet^memory.

    ``table`` has shape (t,) * memory; ``value`` consumes 1-based windows.
    ``truncation_error`` records the sup-norm bound when the table came from
    truncating a parametric family.
    """

    t: int
    memory: int
    table: np.ndarray
    tag: str = ""
    truncation_error: float | None = None

    def __post_init__(self):
        tab = np.asarray(self.table)
        if tab.shape != (self.t,) * self.memory:
            raise ValueError(
                f"table shape {tab.shape} does not match alphabet^{self.memory}"
            )
        object.__setattr__(self, "table", tab)

    def value(self, window) -> float:
        idx = tuple(s - 1 for s in window[: self.memory])
        return self.table[idx]

    def scaled(self, coef: float) -> "Potential":
        return Potential(t=self.t, memory=self.memory, table=coef * self.table,
                         tag=f"{coef}*({self.tag})" if self.tag else f"{coef}*V")

    def shifted(self, const: float) -> "Potential":
        return Potential(t=self.t, memory=self.memory, table=self.table + const,
                         tag=self.tag)

    @property
    def min(self) -> float:
        return float(np.min(self.table))

    @staticmethod
    def constant(t: int, value: float, memory: int = 1, tag: str = "const") -> "Potential":
        return Potential(t=t, memory=memory,
                         table=np.full((t,) * memory, float(value)), tag=tag)

    @staticmethod
    def from_dict(t: int, memory: int, entries: dict, tag: str = "") -> "Potential":
        """Build from string keys like "132" (symbols concatenated)."""
        table = np.full((t,) * memory, np.nan)
        for key, val in entries.items():
            if len(key) != memory or not all(ch.isdigit() for ch in key):
                raise ValueError(f"bad potential key {key!r}: expected {memory} digits")
            idx = tuple(int(ch) - 1 for ch in key)
            if not all(0 <= i < t for i in idx):
                raise ValueError(f"potential key {key!r} outside alphabet 1..{t}")
            table[idx] = float(val)
        if np.any(np.isnan(table)):
            raise ValueError("potential table is incomplete")
        return Potential(t=t, memory=memory, table=table, tag=tag)


def birkhoff_sum(potential: Potential, word) -> float:
    """Sum of the potential over the cyclic windows of the periodic word."""
    word = tuple(word)
    n = len(word)
    if n < 1:
        raise ValueError("word must be nonempty")
    k = potential.memory
    total = 0.0
    for j in range(n):
        window = tuple(word[(j + jj) % n] for jj in range(k))
        total += potential.value(window)
    return total


def birkhoff_sums(potential: Potential, words: np.ndarray) -> np.ndarray:
    """Vectorized birkhoff_sum over an integer array of words, shape (N, n)."""
    words0 = np.asarray(words, dtype=np.int64) - 1
    n = words0.shape[1]
    k = potential.memory
    total = np.zeros(words0.shape[0])
    for j in range(n):
        idx = tuple(words0[:, (j + jj) % n] for jj in range(k))
        total += potential.table[idx]
    return total


@dataclass(frozen=True)
class HolderFamily:
    """A potential family evaluated on a finite prefix followed by the
    canonical all-ones tail, with declared regularity metadata.

    ``holder_const`` and ``alpha`` are the declared Holder data and ``gamma``
    the metric parameter, giving the truncation bound
    holder_const * gamma ** (alpha * k) at memory k.
    """

    t: int
    fun: Callable[[tuple], float]
    holder_const: float | None = None
    alpha: float | None = None
    gamma: float | None = None
    tag: str = "family"

    def evaluate(self, prefix) -> float:
        return float(self.fun(tuple(prefix)))


def truncate_to_memory(family: HolderFamily, k: int) -> Potential:
    """Tabulate the family on all memory-k prefixes (with the canonical tail)
    and attach the declared geometric truncation bound."""
    if k < 1:
        raise ValueError("memory must be at least 1")
    if family.holder_const is None or family.alpha is None or family.gamma is None:
        raise ValueError("family lacks Holder metadata (holder_const, alpha, gamma)")
    t = family.t
    table = np.empty((t,) * k)
    for word in itertools.product(range(1, t + 1), repeat=k):
        table[tuple(s - 1 for s in word)] = family.evaluate(word)
    bound = family.holder_const * family.gamma ** (family.alpha * k)
    return Potential(t=t, memory=k, table=table, tag=family.tag,
                     truncation_error=float(bound))


def tail_weighted_family(t: int, values, weight: float, tag: str = "tail_weighted") -> HolderFamily:
    """V(x) = sum_j weight^j * values[x_j], evaluated exactly on prefix + all-ones tail."""
    values = np.asarray(values, dtype=float)
    if values.shape != (t,):
        raise ValueError("values must list one number per symbol")
    if not 0.0 < abs(weight) < 1.0:
        raise ValueError("weight must satisfy 0 < |weight| < 1")

    def fun(prefix):
        acc = 0.0
        for j, s in enumerate(prefix):
            acc += weight ** j * values[s - 1]
        acc += weight ** len(prefix) * values[0] / (1.0 - weight)
        return acc

    holder_const = 2.0 * float(np.max(np.abs(values))) / (1.0 - abs(weight))
    return HolderFamily(t=t, fun=fun, holder_const=holder_const,
                        alpha=1.0, gamma=abs(weight), tag=tag)


def words_array(t: int, n: int, kind: str = "lyndon", budget: int | None = None) -> np.ndarray:
    """Dense int array of words (rows), kind in {"lyndon", "fix"}."""
    if kind == "lyndon":
        it = lyndon_words(t, n, budget)
    elif kind == "fix":
        it = fix_points(t, n, budget)
    else:
        raise ValueError(f"unknown word kind {kind!r}")
    arr = np.fromiter(itertools.chain.from_iterable(it), dtype=np.int64)
    return arr.reshape(-1, n)
