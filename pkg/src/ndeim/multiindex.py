"""Multi-index algebra and the multivariate Faa di Bruno formula.

Multi-indices are plain tuples of nonnegative integers.  The partition sets
used by the higher-order chain rule are enumerated once per ``(nu, omega)``
pair and cached, so repeated evaluations of the same derivative order only
pay for the arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_ORDER = 8

MultiIndex = tuple


class CapabilityError(ValueError):
    """Requested derivative order exceeds what the engine supports."""


class EmptyDomainError(ValueError):
    """Arguments outside the domain of an enumeration."""


class MissingDerivativeError(KeyError):
    """A derivative table lacks an entry needed by an evaluation."""

    def __init__(self, index, table="table"):
        self.index = tuple(index)
        super().__init__(f"{table} has no entry for multi-index {self.index}")


def multi_index(components: Iterable[int]) -> MultiIndex:
    """Validate and return a multi-index as a tuple of ints."""
    nu = tuple(int(c) for c in components)
    if not nu:
        raise ValueError("multi-index needs at least one component")
    if any(c < 0 for c in nu):
        raise ValueError(f"negative component in {nu}")
    return nu


def order(nu: Sequence[int]) -> int:
    return int(sum(nu))


def mi_factorial(nu: Sequence[int]) -> int:
    out = 1
    for c in nu:
        out *= math.factorial(c)
    return out


def mi_power(x, nu: Sequence[int]):
    """``x**nu`` componentwise product with ``0**0 = 1``."""
    out = 1.0
    for xi, c in zip(x, nu):
        if c:
            out = out * xi**c
    return out


def unit(n: int, i: int) -> MultiIndex:
    return tuple(1 if j == i else 0 for j in range(n))


def indices_of_order(n: int, k: int) -> list:
    """All multi-indices of length ``n`` and order exactly ``k``, ascending."""
    if k == 0:
        return [(0,) * n]
    out = []
    for bars in itertools.combinations(range(k + n - 1), n - 1):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(k + n - 2 - prev)
        out.append(tuple(comp))
    out.sort(key=_prec_key)
    return out


def indices_up_to(n: int, k: int, start: int = 0) -> list:
    out = []
    for j in range(start, k + 1):
        out.extend(indices_of_order(n, j))
    return out


def _prec_key(nu):
    return (sum(nu),) + tuple(nu)


def lex_prec(mu: Sequence[int], nu: Sequence[int]) -> bool:
    """Strict order: lower total order first, then first differing component."""
    if len(mu) != len(nu):
        raise ValueError(f"length mismatch: {len(mu)} vs {len(nu)}")
    return _prec_key(tuple(mu)) < _prec_key(tuple(nu))


def partitions_univariate(m: int, j: int) -> list:
    """Tuples ``(w_1..w_m)`` with ``sum w_i = j`` and ``sum i*w_i = m``."""
    if j < 1 or j > m:
        raise EmptyDomainError(f"need 1 <= j <= m, got m={m}, j={j}")
    if m > MAX_ORDER:
        raise CapabilityError(f"order {m} exceeds supported maximum {MAX_ORDER}")
    return list(_univariate(m, j))


@lru_cache(maxsize=None)
def _univariate(m, j):
    out = []

    def rec(i, left_count, left_weight, acc):
        if i == 0:
            if left_count == 0 and left_weight == 0:
                out.append(tuple(reversed(acc)))
            return
        for w in range(min(left_count, left_weight // i), -1, -1):
            rec(i - 1, left_count - w, left_weight - i * w, acc + [w])

    rec(m, j, m, [])
    out.sort()
    return tuple(out)


@dataclass(frozen=True)
class PartitionTuple:
    """One element ``(k_1..k_s; l_1..l_s)`` of a partition set."""

    ks: tuple
    ls: tuple
    coefficient: Fraction

    @property
    def s(self) -> int:
        return len(self.ks)


def partitions_multivariate(nu: Sequence[int], omega: Sequence[int]) -> dict:
    """Partition sets grouped by chain length ``s``.

    Returns a dict ``{s: [PartitionTuple, ...]}`` covering ``s = 1..|nu|``.
    The coefficient stored with each tuple is
    ``nu! / prod_j (k_j! (l_j!)^{|k_j|})`` as an exact fraction.
    """
    nu = multi_index(nu)
    omega = multi_index(omega)
    if order(nu) > MAX_ORDER:
        raise CapabilityError(f"order {order(nu)} exceeds supported maximum {MAX_ORDER}")
    groups = _multivariate(nu, omega)
    return {s: list(groups[s - 1]) for s in range(1, order(nu) + 1)}


@lru_cache(maxsize=None)
def _multivariate(nu, omega):
    n_total = order(nu)
    groups = [[] for _ in range(n_total)]
    if order(omega) == 0 or order(omega) > n_total:
        return tuple(tuple(g) for g in groups)
    candidates = [l for l in indices_up_to(len(nu), n_total, start=1)
                  if all(a <= b for a, b in zip(l, nu))]
    m = len(omega)
    nu_fact = mi_factorial(nu)

    def k_choices(rem_omega, l, rem_nu):
        # nonzero k <= rem_omega with |k| * l <= rem_nu
        cap = min((rem_nu[i] // l[i] for i in range(len(l)) if l[i]), default=0)
        ranges = [range(c + 1) for c in rem_omega]
        for k in itertools.product(*ranges):
            sk = sum(k)
            if 0 < sk <= cap:
                yield k

    def rec(start, rem_nu, rem_omega, ks, ls):
        if not any(rem_omega):
            if not any(rem_nu):
                denom = 1
                for k, l in zip(ks, ls):
                    denom *= mi_factorial(k) * mi_factorial(l) ** sum(k)
                groups[len(ks) - 1].append(
                    PartitionTuple(tuple(ks), tuple(ls), Fraction(nu_fact, denom)))
            return
        if not any(rem_nu):
            return
        for idx in range(start, len(candidates)):
            l = candidates[idx]
            if any(a > b for a, b in zip(l, rem_nu)):
                continue
            for k in k_choices(rem_omega, l, rem_nu):
                sk = sum(k)
                new_nu = tuple(a - sk * b for a, b in zip(rem_nu, l))
                new_omega = tuple(a - b for a, b in zip(rem_omega, k))
                rec(idx + 1, new_nu, new_omega, ks + [k], ls + [l])

    rec(0, nu, omega, [], [])
    for g in groups:
        g.sort(key=lambda p: (p.ls, p.ks))
    return tuple(tuple(g) for g in groups)


@dataclass
class DerivativeTable:
    """Partial derivatives at a base point keyed by multi-index.

    Values may be scalars or numpy arrays.  For an inner map with ``m``
    components each value is indexable by component (leading axis of length
    ``m``).  Arrays broadcast, so a table may hold derivatives at many base
    points at once.
    """

    entries: dict
    max_order: int

    def __getitem__(self, nu):
        try:
            return self.entries[tuple(nu)]
        except KeyError:
            raise MissingDerivativeError(nu) from None

    def __contains__(self, nu):
        return tuple(nu) in self.entries

    @classmethod
    def from_function(cls, func, n: int, max_order: int):
        """Build a table by calling ``func(nu)`` for every order up to ``max_order``."""
        return cls({nu: func(nu) for nu in indices_up_to(n, max_order)}, max_order)


def _lookup(table, nu, name):
    if isinstance(table, DerivativeTable):
        try:
            return table.entries[tuple(nu)]
        except KeyError:
            raise MissingDerivativeError(nu, name) from None
    try:
        return table[tuple(nu)]
    except KeyError:
        raise MissingDerivativeError(nu, name) from None


def faa_di_bruno(outer, inner, nu: Sequence[int]):
    """``D^nu`` of ``g(g_1(x), ..., g_m(x))`` from the partials of ``g`` and ``g_i``.

    Parameters
    ----------
    outer : DerivativeTable or mapping
        ``g_omega`` for ``1 <= |omega| <= |nu|`` (multi-indices of length m).
    inner : DerivativeTable or mapping
        ``g_mu`` for ``1 <= |mu| <= |nu|``; each value has a leading axis of
        length m holding ``(g^(1)_mu, ..., g^(m)_mu)``.
    nu : multi-index of length n, ``|nu| >= 1``.
    """
    nu = multi_index(nu)
    n_total = order(nu)
    if n_total == 0:
        raise ValueError("faa_di_bruno needs |nu| >= 1; the zeroth derivative is g itself")
    if n_total > MAX_ORDER:
        raise CapabilityError(f"order {n_total} exceeds supported maximum {MAX_ORDER}")
    m = _inner_width(inner, nu)
    inner_cache = {}

    def g_inner(l):
        if l not in inner_cache:
            inner_cache[l] = _lookup(inner, l, "inner")
        return inner_cache[l]

    total = 0.0
    for w_order in range(1, n_total + 1):
        for omega in indices_of_order(m, w_order):
            groups = _multivariate(nu, omega)
            acc = 0.0
            for group in groups:
                for part in group:
                    term = float(part.coefficient)
                    for k, l in zip(part.ks, part.ls):
                        gl = g_inner(l)
                        for i, ki in enumerate(k):
                            if ki:
                                term = term * gl[i] ** ki
                    acc = acc + term
            if isinstance(acc, float) and acc == 0.0:
                continue
            total = total + _lookup(outer, omega, "outer") * acc
    return total


def _inner_width(inner, nu):
    first = unit(len(nu), next(i for i, c in enumerate(nu) if c))
    return len(_lookup(inner, first, "inner"))


def dk_multilinear(partials, directions: Sequence):
    """Evaluate ``D^k h(x)(xi_1, ..., xi_k)`` by summing over all index sequences.

    ``partials`` maps order-k multi-indices of length n to the mixed partial;
    the partial for an index sequence ``(j_1..j_k)`` is looked up under the
    multi-index counting how often each coordinate appears.
    """
    dirs = [np.asarray(d, dtype=float) for d in directions]
    if not dirs:
        raise ValueError("need at least one direction")
    n = dirs[0].shape[0]
    if any(d.shape != (n,) for d in dirs):
        raise ValueError("directions must all be vectors of the same dimension")
    k = len(dirs)
    total = 0.0
    for seq in itertools.product(range(n), repeat=k):
        weight = 1.0
        for d, j in zip(dirs, seq):
            weight *= d[j]
        if weight == 0.0:
            continue
        counts = [0] * n
        for j in seq:
            counts[j] += 1
        total = total + _lookup(partials, tuple(counts), "partials") * weight
    return total


def multilinear_norm(partials: Mapping, n: int, k: int):
    """Upper bound of the max-norm operator norm of an order-k derivative.

    ``partials[nu]`` holds arrays whose last axis indexes output components.
    Returns ``max_i sum_{|nu|=k} k!/nu! |partials[nu][..., i]|`` over the
    trailing component axis (leading batch axes are kept).
    """
    total = 0.0
    kf = math.factorial(k)
    for nu in indices_of_order(n, k):
        total = total + (kf // mi_factorial(nu)) * np.abs(partials[nu])
    return np.max(total, axis=-1)
