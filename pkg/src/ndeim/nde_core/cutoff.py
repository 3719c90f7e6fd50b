"""Smooth cut-off of a right-hand side outside a ball.

The bump ``chi`` equals 1 on [0, 1] and 0 on [2, inf); in between it is the
smooth transition ``q(u - 1)`` with ``q(s) = psi(1-s) / (psi(1-s) + psi(s))``
and ``psi(u) = exp(-1/u)``.  Its slope peaks at the midpoint with value 2.

The modified field evaluates ``f(c(w) y, c(w) z)`` where ``w = (y, z)`` and
``c(w) = prod_i chi(|w_i| / kappa)``.  The product form keeps the scaling
smooth while matching the max norm: ``c = 1`` exactly when every component
is at most ``kappa`` and ``c = 0`` once some component reaches ``2 kappa``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from ..multiindex import DerivativeTable, faa_di_bruno, indices_up_to
from .problem import RhsField

_TINY = 1.0 / 700.0


@lru_cache(maxsize=None)
def _psi_poly(m):
    """Polynomial ``P_m`` with ``psi^(m)(u) = P_m(1/u) exp(-1/u)``."""
    p = Polynomial([1.0])
    s2 = Polynomial([0.0, 0.0, 1.0])
    for _ in range(m):
        p = s2 * (p - p.deriv())
    return p


def _psi_derivs(u, order):
    u = np.asarray(u, dtype=float)
    out = np.zeros((order + 1,) + u.shape)
    ok = u > _TINY
    if np.any(ok):
        inv = 1.0 / u[ok]
        e = np.exp(-inv)
        for m in range(order + 1):
            out[m][ok] = _psi_poly(m)(inv) * e
    return out


def transition_derivs(s, order):
    """``q^(j)(s)`` for ``j = 0..order`` on ``0 < s < 1``."""
    a = _psi_derivs(1.0 - s, order)
    for m in range(1, order + 1, 2):
        a[m] = -a[m]
    b = _psi_derivs(s, order)
    den = a + b
    q = np.zeros_like(a)
    for m in range(order + 1):
        acc = a[m].copy()
        for j in range(m):
            acc -= math.comb(m, j) * q[j] * den[m - j]
        q[m] = acc / den[0]
    return q


def chi_derivs(u, order):
    """``chi^(j)(u)`` for ``j = 0..order`` (``u >= 0``)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((order + 1,) + u.shape)
    out[0] = np.where(u <= 1.0, 1.0, 0.0)
    mid = (u > 1.0) & (u < 2.0)
    if np.any(mid):
        q = transition_derivs(u[mid] - 1.0, order)
        for j in range(order + 1):
            out[j][mid] = q[j]
    return out


def chi(u):
    return chi_derivs(u, 0)[0]


def max_chi_slope(samples: int = 200001) -> float:
    u = np.linspace(1.0, 2.0, samples)
    return float(np.max(np.abs(chi_derivs(u, 1)[1])))


def _scaled_component_derivs(w, kappa, order):
    """Derivatives of ``u -> chi(|u| / kappa)`` at each component of ``w``."""
    a = np.abs(w) / kappa
    d = chi_derivs(a, order)
    sign = np.where(w < 0, -1.0, 1.0)
    for j in range(1, order + 1):
        d[j] = d[j] * sign**j / kappa**j
    return d


def scaling(w, kappa):
    """``c(w) = prod_i chi(|w_i| / kappa)`` over the last axis."""
    return np.prod(chi(np.abs(w) / kappa), axis=-1)


def _inner_table(w, kappa, order):
    """Partials of ``g_i(w) = c(w) w_i`` for ``1 <= |mu| <= order``.

    ``w`` has shape ``(npts, m)``; each table value has shape ``(m, npts)``.
    """
    npts, m = w.shape
    comp = _scaled_component_derivs(w, kappa, order)   # (order+1, npts, m)

    def c_part(mu):
        out = np.ones(npts)
        for j, p in enumerate(mu):
            out = out * comp[p][:, j]
        return out

    cache = {}
    for mu in indices_up_to(m, order):
        cache[mu] = c_part(mu)
    table = {}
    for mu in indices_up_to(m, order, start=1):
        vals = np.empty((m, npts))
        for i in range(m):
            v = w[:, i] * cache[mu]
            if mu[i] > 0:
                lower = list(mu)
                lower[i] -= 1
                v = v + mu[i] * cache[tuple(lower)]
            vals[i] = v
        table[mu] = vals
    return table


def cutoff_modify(rhs: RhsField, kappa: float) -> RhsField:
    """Field equal to ``rhs`` where ``max(|y|, |z|) <= kappa`` and constant far out."""
    if not kappa > 0:
        raise ValueError("cut-off radius must be positive")
    if not rhs.is_autonomous:
        raise TypeError("cut-off applies to autonomous fields f(y, z)")
    f = rhs.f
    n = rhs.dim

    def modified(y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        y, z = np.broadcast_arrays(y, z)
        w = np.concatenate([y, z], axis=-1)
        c = scaling(w, kappa)[..., None]
        return f(c * y, c * z)

    def table(y, z, max_order):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        y, z = np.broadcast_arrays(y, z)
        batch = y.shape[:-1]
        w = np.concatenate([y, z], axis=-1).reshape(-1, 2 * n)
        c = scaling(w, kappa)[:, None]
        gy, gz = c * w[:, :n], c * w[:, n:]
        inner = _inner_table(w, kappa, max_order)
        outer_raw = rhs.partials_table(gy, gz, max_order)
        outer = {nu: np.moveaxis(np.asarray(v, dtype=float) * np.ones((w.shape[0], n)), -1, 0)
                 for nu, v in outer_raw.items()}
        out = {}
        for nu in indices_up_to(2 * n, max_order, start=1):
            val = faa_di_bruno(outer, inner, nu)
            val = np.moveaxis(np.asarray(val) * np.ones((n, w.shape[0])), 0, -1)
            out[nu] = val.reshape(batch + (n,))
        return out

    order = rhs.max_order
    return RhsField.autonomous(modified, n, rhs.delays[0], partials=None, lipschitz=None,
                               max_order=order, name=f"{rhs.name}_cutoff",
                               partials_table=table)
