"""Composite-function check of the multivariate chain rule.

Two families of compositions ``g(G(x))`` with ``G : R^n -> R^m`` have exact
partials at every order because both layers are ridge functions:

* ``exp-sine``:      ``g(u) = exp(a . u)``,         ``G_i(x) = sin(b_i . x + c_i)``
* ``rational-exp``:  ``g(u) = 1 / (1 + a . u)``,    ``G_i(x) = s_i exp(b_i . x)``

The chain-rule value is compared with high-precision numerical
differentiation of the composite itself (mpmath at 50 digits), which never
touches the partition machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .multiindex import faa_di_bruno, indices_up_to, mi_power

DIGITS = 50
REL_FLOOR = 1e-8


@dataclass
class Composite:
    family: str
    a: np.ndarray       # (m,)
    b: np.ndarray       # (m, n)
    c: np.ndarray       # (m,)

    @property
    def n(self):
        return self.b.shape[1]

    @property
    def m(self):
        return self.b.shape[0]

    def inner_value(self, x):
        theta = self.b @ x
        if self.family == "exp-sine":
            return np.sin(theta + self.c)
        return self.c * np.exp(theta)

    def inner_partials(self, x, max_order):
        theta = self.b @ x
        table = {}
        for mu in indices_up_to(self.n, max_order, start=1):
            k = sum(mu)
            weight = np.array([mi_power(self.b[i], mu) for i in range(self.m)], dtype=float)
            if self.family == "exp-sine":
                table[mu] = weight * np.sin(theta + self.c + k * math.pi / 2)
            else:
                table[mu] = weight * self.c * np.exp(theta)
        return table

    def outer_partials(self, u, max_order):
        s = float(self.a @ u)
        table = {}
        for om in indices_up_to(self.m, max_order, start=1):
            k = sum(om)
            w = float(mi_power(self.a, om))
            if self.family == "exp-sine":
                table[om] = w * math.exp(s)
            else:
                table[om] = w * (-1) ** k * math.factorial(k) / (1.0 + s) ** (k + 1)
        return table

    def mp_function(self):
        a = [mpmath.mpf(float(v)) for v in self.a]
        b = [[mpmath.mpf(float(v)) for v in row] for row in self.b]
        c = [mpmath.mpf(float(v)) for v in self.c]
        exp_sine = self.family == "exp-sine"

        def func(*x):
            total = mpmath.mpf(0)
            for i in range(len(a)):
                theta = mpmath.fsum(bi * xi for bi, xi in zip(b[i], x))
                gi = mpmath.sin(theta + c[i]) if exp_sine else c[i] * mpmath.exp(theta)
                total += a[i] * gi
            return mpmath.exp(total) if exp_sine else 1 / (1 + total)
        return func


def random_composite(family, n, m, rng) -> Composite:
    if family == "exp-sine":
        a = rng.uniform(-0.8, 0.8, m)
        b = rng.uniform(-1.0, 1.0, (m, n))
        c = rng.uniform(-math.pi, math.pi, m)
    else:
        # keep 1 + a . u away from zero on the sampled region
        a = rng.uniform(-0.3, 0.3, m) / m
        b = rng.uniform(-0.6, 0.6, (m, n))
        c = rng.uniform(0.5, 1.0, m)
    return Composite(family, a, b, c)


@dataclass
class FdbCheckResult:
    max_rel_error: float
    cases: int
    worst: dict = field(default_factory=dict)
    per_shape: dict = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def ok(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def to_dict(self):
        return {
            "certificate": "chain rule vs high-precision differentiation of the composite",
            "max_rel_error": self.max_rel_error,
            "tolerance": self.tolerance,
            "ok": self.ok,
            "cases": self.cases,
            "worst": self.worst,
            "per_shape": self.per_shape,
        }


def check_composite(comp: Composite, x, max_order=4):
    """Largest relative error over all ``1 <= |nu| <= max_order`` at ``x``."""
    u = comp.inner_value(x)
    inner = comp.inner_partials(x, max_order)
    outer = comp.outer_partials(u, max_order)
    func = comp.mp_function()
    worst, worst_nu = 0.0, None
    with mpmath.workdps(DIGITS):
        xs = [mpmath.mpf(float(v)) for v in x]
        for nu in indices_up_to(comp.n, max_order, start=1):
            value = float(faa_di_bruno(outer, inner, nu))
            oracle = float(mpmath.diff(func, xs, nu))
            err = abs(value - oracle) / max(abs(oracle), REL_FLOOR)
            if err > worst:
                worst, worst_nu = err, nu
    return worst, worst_nu


def run_suite(seed=0, points=10, max_order=4, shapes=None, tolerance=1e-5) -> FdbCheckResult:
    """Chain-rule check over ``(n, m) in {1, 2, 3}^2`` with ``points`` base points each."""
    rng = np.random.default_rng(seed)
    shapes = [(n, m) for n in (1, 2, 3) for m in (1, 2, 3)] if shapes is None else shapes
    result = FdbCheckResult(0.0, 0, tolerance=tolerance)
    for n, m in shapes:
        shape_worst = 0.0
        for p in range(points):
            family = "exp-sine" if p % 2 == 0 else "rational-exp"
            comp = random_composite(family, n, m, rng)
            x = rng.uniform(-1.0, 1.0, n)
            err, nu = check_composite(comp, x, max_order)
            result.cases += 1
            shape_worst = max(shape_worst, err)
            if err >= result.max_rel_error:
                result.max_rel_error = err
                result.worst = {"n": n, "m": m, "family": family, "nu": list(nu or ()),
                                "x": [float(v) for v in x]}
        result.per_shape[f"{n}x{m}"] = shape_worst
    return result
