"""Catalog of right-hand sides with exact derivative oracles.

Every entry is a polynomial in the stacked variables ``(y, z) = (x(t),
x(t - r))``, so all partial derivatives are available in closed form.
"""

from __future__ import annotations

import math

import numpy as np

from .nde_core.cutoff import cutoff_modify
from .nde_core.problem import NdeProblem, NeutralPart, RhsField


class PolynomialField:
    """``f_i(w) = sum_e c_{i,e} w^e`` over ``w = (y, z)`` of length ``2n``."""

    def __init__(self, n, components):
        self.n = n
        self.components = [{tuple(e): float(c) for e, c in comp.items()} for comp in components]
        for comp in self.components:
            for e in comp:
                if len(e) != 2 * n:
                    raise ValueError("exponent length must be 2n")

    def degree(self):
        return max((sum(e) for comp in self.components for e in comp), default=0)

    def _eval_monomials(self, comp, w, nu):
        out = np.zeros(w.shape[:-1])
        for e, c in comp.items():
            if any(a < b for a, b in zip(e, nu)):
                continue
            coef = c
            term = np.ones(w.shape[:-1])
            for j, (a, b) in enumerate(zip(e, nu)):
                coef *= math.perm(a, b)
                if a - b:
                    term = term * w[..., j] ** (a - b)
            out = out + coef * term
        return out

    def __call__(self, y, z):
        return self.partial(y, z, (0,) * (2 * self.n))

    def partial(self, y, z, nu):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        y, z = np.broadcast_arrays(y, z)
        w = np.concatenate([y, z], axis=-1)
        return np.stack([self._eval_monomials(comp, w, nu) for comp in self.components],
                        axis=-1)

    def rhs(self, delay, name="polynomial"):
        return RhsField.autonomous(self, self.n, delay, partials=self.partial,
                                   max_order=None, name=name)


def vdp_field(b: float, eps: float) -> PolynomialField:
    """Right-hand side of the neutral van der Pol system.

    ``f_1 = y_2 - (y_1^2/2 + y_1^3/3)`` and ``f_2 = eps (b - z_1)``.
    """
    comp1 = {(0, 1, 0, 0): 1.0, (2, 0, 0, 0): -0.5, (3, 0, 0, 0): -1.0 / 3.0}
    comp2 = {(0, 0, 0, 0): eps * b, (0, 0, 1, 0): -eps}
    return PolynomialField(2, [comp1, comp2])


def vdp_problem(b, c, eps, r, kappa_cutoff=None) -> NdeProblem:
    """``d/dt[x1 - c x1(t-r)] = f_1``, ``dx2/dt = f_2``, optionally cut off."""
    field = vdp_field(b, eps).rhs(r, name="vdp")
    if kappa_cutoff is not None:
        field = cutoff_modify(field, kappa_cutoff)
    A = np.array([[c, 0.0], [0.0, 0.0]])
    return NdeProblem(NeutralPart.single(A, r), field, r, name="vdp")


def linear_field(a, bcoef) -> PolynomialField:
    """Scalar ``f(y, z) = a y + b z``."""
    return PolynomialField(1, [{(1, 0): a, (0, 1): bcoef}])


def affine_field(A, B, c) -> PolynomialField:
    """``f(y, z) = A y + B z + c`` with ``n x n`` matrices."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n = A.shape[0]
    comps = []
    for i in range(n):
        comp = {(0,) * (2 * n): c[i]}
        for j in range(n):
            e = [0] * (2 * n)
            e[j] = 1
            comp[tuple(e)] = comp.get(tuple(e), 0.0) + A[i, j]
            e = [0] * (2 * n)
            e[n + j] = 1
            comp[tuple(e)] = comp.get(tuple(e), 0.0) + B[i, j]
        comps.append(comp)
    return PolynomialField(n, comps)


def delayed_exponential_field(a) -> PolynomialField:
    """Scalar ``f(y, z) = -a z``."""
    return PolynomialField(1, [{(0, 1): -a}])


def build_problem(spec: dict) -> NdeProblem:
    """Problem from a catalog description (the ``problem`` block of a config)."""
    kind = spec["rhs"]
    r = float(spec["r"])
    params = spec.get("params", {})
    if kind == "vdp_neutral":
        return vdp_problem(params["b"], params["c"], params["eps"], r,
                           spec.get("kappa_cutoff"))
    if kind == "linear_scalar":
        field = linear_field(params["a"], params.get("b", 0.0))
    elif kind == "affine":
        field = affine_field(params["A"], params["B"], params["c"])
    elif kind == "delayed_exponential":
        field = delayed_exponential_field(params["a"])
    else:
        raise KeyError(f"unknown right-hand side {kind!r}")
    rhs = field.rhs(r, name=kind)
    if spec.get("kappa_cutoff") is not None:
        rhs = cutoff_modify(rhs, spec["kappa_cutoff"])
    n = field.n
    neutral = spec.get("neutral", [])
    atoms = NeutralPart([(np.atleast_2d(np.asarray(a["matrix"], dtype=float)).reshape(n, n),
                          float(a.get("delay", r))) for a in neutral])
    return NdeProblem(atoms, rhs, r, name=kind)


CATALOG = ("vdp_neutral", "linear_scalar", "affine", "delayed_exponential")
