import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndeim.multiindex import (
    CapabilityError,
    EmptyDomainError,
    MissingDerivativeError,
    dk_multilinear,
    faa_di_bruno,
    indices_of_order,
    indices_up_to,
    lex_prec,
    mi_factorial,
    mi_power,
    multi_index,
    partitions_multivariate,
    partitions_univariate,
    unit,
)


# -- lex_prec -----------------------------------------------------------------

def test_lex_prec_examples():
    assert lex_prec((0, 1), (1, 0))
    assert not lex_prec((1, 1), (1, 1))
    assert lex_prec((2, 0), (0, 3))
    assert not lex_prec((0, 3), (2, 0))


def test_lex_prec_length_mismatch():
    with pytest.raises(ValueError):
        lex_prec((1,), (1, 0))


def test_multi_index_rejects_negative():
    with pytest.raises(ValueError):
        multi_index((1, -1))
    assert mi_factorial((2, 3)) == 12
    assert mi_power(np.array([0.0, 2.0]), (0, 3)) == 8.0


@given(st.integers(1, 3), st.integers(0, 4))
def test_lex_prec_total_strict_order_per_class(n, k):
    cls = indices_of_order(n, k)
    for a, b in itertools.combinations(cls, 2):
        assert lex_prec(a, b) != lex_prec(b, a)
    for a in cls:
        assert not lex_prec(a, a)


# -- univariate partitions ----------------------------------------------------

def test_partitions_univariate_examples():
    assert partitions_univariate(3, 2) == [(1, 1, 0)]
    assert partitions_univariate(4, 1) == [(0, 0, 0, 1)]
    assert partitions_univariate(4, 4) == [(4, 0, 0, 0)]


def test_partitions_univariate_errors():
    with pytest.raises(EmptyDomainError):
        partitions_univariate(3, 4)
    with pytest.raises(EmptyDomainError):
        partitions_univariate(3, 0)
    with pytest.raises(CapabilityError):
        partitions_univariate(9, 2)


def _integer_partition_count(m):
    # independent counter via the standard coin-change recurrence
    ways = [1] + [0] * m
    for part in range(1, m + 1):
        for v in range(part, m + 1):
            ways[v] += ways[v - part]
    return ways[m]


@pytest.mark.parametrize("m", range(1, 9))
def test_partition_counts_match_integer_partitions(m):
    total = 0
    for j in range(1, m + 1):
        tuples = partitions_univariate(m, j)
        for w in tuples:
            assert sum(w) == j
            assert sum((i + 1) * wi for i, wi in enumerate(w)) == m
        assert len(set(tuples)) == len(tuples)
        # brute force over all tuples with entries <= j
        brute = [w for w in itertools.product(range(j + 1), repeat=m)
                 if sum(w) == j and sum((i + 1) * wi for i, wi in enumerate(w)) == m]
        assert sorted(brute) == sorted(tuples)
        total += len(tuples)
    assert total == _integer_partition_count(m)


# -- multivariate partitions --------------------------------------------------

def _as_pairs(groups):
    return {s: [(p.ks, p.ls) for p in g] for s, g in groups.items() if g}


def test_partitions_multivariate_examples():
    assert _as_pairs(partitions_multivariate((2,), (1,))) == {1: [(((1,),), ((2,),))]}
    assert _as_pairs(partitions_multivariate((1, 0), (1,))) == {1: [(((1,),), ((1, 0),))]}
    assert _as_pairs(partitions_multivariate((2,), (2,))) == {1: [(((2,),), ((1,),))]}


def test_partitions_multivariate_omega_too_large_is_empty():
    groups = partitions_multivariate((1, 0), (1, 1))
    assert all(not g for g in groups.values())


def _check_partition_invariants(nu, omega):
    seen = set()
    for s, group in partitions_multivariate(nu, omega).items():
        for p in group:
            assert p.s == s
            assert all(sum(k) > 0 for k in p.ks)
            for a, b in zip(p.ls, p.ls[1:]):
                assert lex_prec(a, b)
            assert tuple(map(sum, zip(*p.ks))) == tuple(omega)
            total = [0] * len(nu)
            for k, l in zip(p.ks, p.ls):
                for i, li in enumerate(l):
                    total[i] += sum(k) * li
            assert tuple(total) == tuple(nu)
            key = (p.ks, p.ls)
            assert key not in seen
            seen.add(key)


@pytest.mark.parametrize("nu", [(2, 1), (1, 1, 1), (0, 3), (2, 2)])
def test_partitions_multivariate_invariants(nu):
    for w in range(1, sum(nu) + 1):
        for omega in indices_of_order(2, w):
            _check_partition_invariants(nu, omega)


@pytest.mark.parametrize("order_nu", range(1, 7))
def test_univariate_reduction(order_nu):
    # for univariate nu, s-chains with omega=(j) correspond to p(|nu|, j)
    for j in range(1, order_nu + 1):
        got = set()
        for group in partitions_multivariate((order_nu,), (j,)).values():
            for p in group:
                w = [0] * order_nu
                for k, l in zip(p.ks, p.ls):
                    w[l[0] - 1] += k[0]
                got.add(tuple(w))
        assert got == set(partitions_univariate(order_nu, j))


# -- Faa di Bruno ---------------------------------------------------------------

def test_fdb_univariate_second_order_is_classical():
    g1, g2 = 1.7, -0.4
    i1, i2 = 0.3, 2.5
    outer = {(1,): g1, (2,): g2}
    inner = {(1,): np.array([i1]), (2,): np.array([i2])}
    assert faa_di_bruno(outer, inner, (2,)) == pytest.approx(g2 * i1**2 + g1 * i2, rel=1e-15)


def test_fdb_exp_of_sum_is_one():
    outer = {om: 1.0 for om in indices_up_to(1, 4, start=1)}
    inner = {mu: np.array([1.0 if sum(mu) == 1 else 0.0]) for mu in indices_up_to(2, 4, start=1)}
    for nu in indices_up_to(2, 4, start=1):
        assert faa_di_bruno(outer, inner, nu) == pytest.approx(1.0, abs=1e-14)


def test_fdb_polynomial_composite_against_frozen_oracle():
    # g(u1, u2) = u1^2 u2 + sin(u1) with u1 = x y + x, u2 = y^2 - x at (0.4, -0.7);
    # value of d^2/dx^2 d/dy from 40-digit numerical differentiation
    oracle = -1.211568435264090801
    x, y = 0.4, -0.7
    u1, u2 = x * y + x, y * y - x
    outer = {(1, 0): 2 * u1 * u2 + math.cos(u1), (0, 1): u1**2, (2, 0): 2 * u2 - math.sin(u1),
             (1, 1): 2 * u1, (0, 2): 0.0, (3, 0): -math.cos(u1), (2, 1): 2.0,
             (1, 2): 0.0, (0, 3): 0.0}
    inner = {(1, 0): np.array([y + 1, -1.0]), (0, 1): np.array([x, 2 * y]),
             (2, 0): np.array([0.0, 0.0]), (1, 1): np.array([1.0, 0.0]),
             (0, 2): np.array([0.0, 2.0])}
    for mu in indices_of_order(2, 3):
        inner[mu] = np.array([0.0, 0.0])
    assert faa_di_bruno(outer, inner, (2, 1)) == pytest.approx(oracle, rel=1e-12)


def test_fdb_missing_entry_names_index():
    with pytest.raises(MissingDerivativeError) as err:
        faa_di_bruno({(1,): 1.0}, {(1,): np.array([1.0])}, (2,))
    assert "(2,)" in str(err.value) or "2" in str(err.value)


def test_fdb_capability_limit():
    with pytest.raises(CapabilityError):
        faa_di_bruno({}, {(1,): np.array([1.0])}, (9,))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_fdb_first_order_is_chain_rule(n, m, seed):
    rng = np.random.default_rng(seed)
    outer = {unit(m, i): rng.normal() for i in range(m)}
    inner = {unit(n, j): rng.normal(size=m) for j in range(n)}
    for j in range(n):
        nu = unit(n, j)
        expect = sum(outer[unit(m, i)] * inner[nu][i] for i in range(m))
        assert faa_di_bruno(outer, inner, nu) == pytest.approx(expect, rel=1e-14, abs=1e-14)


# -- D^k multilinear -----------------------------------------------------------

def test_dk_directional_derivative():
    grad = {(1, 0, 0): 2.0, (0, 1, 0): -1.0, (0, 0, 1): 0.5}
    assert dk_multilinear(grad, [np.array([1.0, 2.0, 3.0])]) == pytest.approx(1.5)


def test_dk_quadratic_form():
    Q = np.array([[1.0, 2.0], [-0.5, 3.0]])
    hess = {(2, 0): 2 * Q[0, 0], (1, 1): Q[0, 1] + Q[1, 0], (0, 2): 2 * Q[1, 1]}
    u, v = np.array([0.3, -1.2]), np.array([2.0, 0.7])
    assert dk_multilinear(hess, [u, v]) == pytest.approx(u @ (Q + Q.T) @ v, rel=1e-14)
    assert dk_multilinear(hess, [u, np.zeros(2)]) == 0.0


def test_dk_dimension_mismatch():
    with pytest.raises(ValueError):
        dk_multilinear({(1, 0): 1.0}, [np.ones(2), np.ones(3)])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-5, 5, allow_nan=False))
def test_dk_multilinear_scaling(seed, c):
    rng = np.random.default_rng(seed)
    parts = {nu: rng.normal() for nu in indices_of_order(3, 3)}
    dirs = [rng.normal(size=3) for _ in range(3)]
    base = dk_multilinear(parts, dirs)
    scaled = dk_multilinear(parts, [dirs[0], c * dirs[1], dirs[2]])
    assert scaled == pytest.approx(c * base, rel=1e-12, abs=1e-12)
    # symmetry under swapping directions
    assert dk_multilinear(parts, [dirs[2], dirs[0], dirs[1]]) == pytest.approx(base, rel=1e-12, abs=1e-12)
