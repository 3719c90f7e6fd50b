"""Problem description: history segments, neutral atoms, right-hand sides."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..multiindex import indices_up_to

# Lagrange weights for the midpoint between nodes, indexed by the offset of
# the midpoint inside a four-node stencil (0.5, 1.5 or 2.5 node spacings).
_HALF_WEIGHTS = {
    0: np.array([5.0, 15.0, -5.0, 1.0]) / 16.0,
    1: np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0,
    2: np.array([1.0, -5.0, 15.0, 5.0]) / 16.0,
}


def lagrange_weights(u):
    """Cubic Lagrange weights at offset ``u`` (in node spacings) from stencil start."""
    u = np.asarray(u, dtype=float)
    return np.stack([
        -(u - 1) * (u - 2) * (u - 3) / 6.0,
        u * (u - 2) * (u - 3) / 2.0,
        -u * (u - 1) * (u - 3) / 2.0,
        u * (u - 1) * (u - 2) / 6.0,
    ], axis=-1)


class HistoryError(ValueError):
    """Evaluation requested outside the span of a history segment."""


class HistorySegment:
    """Initial function sampled on a uniform grid covering ``[anchor - r, anchor]``.

    Evaluation uses piecewise cubic interpolation through the four nearest
    nodes, which reproduces cubic polynomials exactly.
    """

    def __init__(self, values, r: float, anchor: float = 0.0):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] < 4:
            raise ValueError("a history segment needs at least 4 nodes")
        if not r > 0:
            raise ValueError("history span must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("history samples must be finite")
        self.values = values
        self.r = float(r)
        self.anchor = float(anchor)
        self.h = self.r / (values.shape[0] - 1)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self):
        return self.anchor - self.r + self.h * np.arange(self.values.shape[0])

    @classmethod
    def from_function(cls, func, r: float, nodes: int = 33, anchor: float = 0.0):
        """Sample ``func(theta)`` (theta in [-r, 0]) on ``nodes`` uniform points."""
        theta = np.linspace(-r, 0.0, nodes)
        vals = np.array([np.atleast_1d(func(th)) for th in theta], dtype=float)
        return cls(vals, r, anchor)

    @classmethod
    def constant(cls, value, r: float, nodes: int = 33, anchor: float = 0.0):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.tile(value, (nodes, 1)), r, anchor)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.anchor - self.r, self.anchor
        tol = 1e-12 * max(1.0, abs(self.r))
        if np.any(t < lo - tol) or np.any(t > hi + tol):
            raise HistoryError(f"time outside history span [{lo}, {hi}]")
        pos = (np.clip(t, lo, hi) - lo) / self.h
        last = self.values.shape[0] - 1
        start = np.clip(np.floor(pos).astype(int) - 1, 0, last - 3)
        w = lagrange_weights(pos - start)
        idx = start[..., None] + np.arange(4)
        return np.einsum("...k,...kn->...n", w, self.values[idx])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class NeutralPart:
    """Finite sum of delay atoms ``sum_i A_i(t) x(t - r_i)``.

    Each atom is ``(matrix, delay)`` where ``matrix`` is an ``n x n`` array
    or a callable of ``t`` returning one.
    """

    atoms: list

    def __post_init__(self):
        clean = []
        for mat, delay in self.atoms:
            if not delay > 0:
                raise ValueError("atom delays must be positive")
            if not callable(mat):
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
            clean.append((mat, float(delay)))
        self.atoms = clean

    @property
    def delays(self):
        return tuple(d for _, d in self.atoms)

    @property
    def time_dependent(self) -> bool:
        return any(callable(m) for m, _ in self.atoms)

    def matrix(self, i, t=0.0):
        mat = self.atoms[i][0]
        return np.atleast_2d(np.asarray(mat(t), dtype=float)) if callable(mat) else mat

    def norm(self, t=0.0) -> float:
        """Max-norm operator norm of the atom sum (a bound on the neutral part)."""
        if not self.atoms:
            return 0.0
        return float(sum(np.max(np.sum(np.abs(self.matrix(i, t)), axis=1))
                         for i in range(len(self.atoms))))

    @classmethod
    def single(cls, matrix, delay):
        return cls([(matrix, delay)])

    @classmethod
    def none(cls):
        return cls([])


class RhsField:
    """Right-hand side ``F(t, x(t), (x(t - d_1), ...))`` with delays ``d_i``.

    ``func(t, current, delayed)`` must accept arrays whose last axis is the
    state dimension and a tuple ``delayed`` of such arrays.  For the
    autonomous form ``f(y, z)`` use :meth:`autonomous`; there ``partials(y,
    z, nu)`` returns the mixed partial of ``f`` with respect to the stacked
    variables ``(y, z)`` (``nu`` has length ``2n``).
    """

    def __init__(self, dim, func, delays, partials=None, lipschitz=None,
                 max_order=None, name="rhs", f=None, partials_table=None):
        self.dim = int(dim)
        self.func = func
        self.delays = tuple(float(d) for d in delays)
        self._partials = partials
        self._partials_table = partials_table
        self.lipschitz = lipschitz
        self.max_order = max_order
        self.name = name
        self.f = f

    @classmethod
    def autonomous(cls, f, dim, delay, partials=None, lipschitz=None, max_order=None,
                   name="rhs", partials_table=None):
        func = lambda t, y, delayed: f(y, delayed[0])
        return cls(dim, func, (delay,), partials=partials, lipschitz=lipschitz,
                   max_order=max_order, name=name, f=f, partials_table=partials_table)

    @property
    def is_autonomous(self) -> bool:
        return self.f is not None

    def eval(self, t, current, delayed):
        return self.func(t, current, delayed)

    def with_delay(self, delay):
        """Same autonomous field sampled at a different delay."""
        if not self.is_autonomous:
            raise TypeError("only autonomous fields can be re-delayed")
        return RhsField.autonomous(self.f, self.dim, delay, self._partials, self.lipschitz,
                                   self.max_order, self.name, self._partials_table)

    def partials(self, y, z, nu):
        if self._partials is None:
            if self._partials_table is not None:
                return self._partials_table(y, z, sum(nu))[tuple(nu)]
            raise NotImplementedError(f"{self.name} has no derivative oracle")
        return self._partials(y, z, tuple(nu))

    def partials_table(self, y, z, max_order):
        """All partials of order 1..max_order keyed by multi-index over ``(y, z)``."""
        if self._partials_table is not None:
            return self._partials_table(y, z, max_order)
        return {nu: self.partials(y, z, nu)
                for nu in indices_up_to(2 * self.dim, max_order, start=1)}


@dataclass
class NdeProblem:
    """``d/dt[x(t) - sum_i A_i x(t - r_i)] = F(t, x_t)`` with principal delay ``r``."""

    neutral: NeutralPart
    rhs: RhsField
    r: float
    name: str = "problem"

    def __post_init__(self):
        self.r = float(self.r)
        longest = max(self.neutral.delays + self.rhs.delays, default=self.r)
        if longest > self.r * (1 + 1e-12):
            raise ValueError("every delay must be at most the principal delay r")

    @property
    def dim(self) -> int:
        return self.rhs.dim

    @property
    def delays(self):
        return tuple(sorted(set(self.neutral.delays + self.rhs.delays)))

    def with_delay(self, r):
        """Copy with every delay scaled to the new principal delay."""
        scale = r / self.r
        neutral = NeutralPart([(m, d * scale) for m, d in self.neutral.atoms])
        if self.rhs.is_autonomous:
            rhs = self.rhs.with_delay(self.rhs.delays[0] * scale)
        else:
            raise TypeError("only autonomous problems can be re-delayed")
        return NdeProblem(neutral, rhs, r, self.name)

    def neutral_term(self, t, lookup):
        """``sum_i A_i(t) x(t - r_i)`` given ``lookup(delay) -> x(t - delay)``."""
        total = 0.0
        for i, (_, delay) in enumerate(self.neutral.atoms):
            total = total + lookup(delay) @ self.neutral.matrix(i, t).T
        return total


@dataclass
class Trajectory:
    """Grid solution including the initial segment.

    ``t_grid[0]`` is the left end of the history; ``anchor`` is the initial
    time (joints sit at ``anchor + j*r``).  ``anchor=None`` marks a smooth
    grid function without joints, such as a manifold slice.
    """

    t_grid: np.ndarray
    values: np.ndarray
    step: float
    r: float
    anchor: Optional[float] = 0.0

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def index_of(self, t) -> int:
        i = int(round((t - self.t_grid[0]) / self.step))
        if i < 0 or i >= len(self.t_grid) or abs(self.t_grid[i] - t) > 1e-9 * self.step + 1e-12:
            raise HistoryError(f"time {t} is not a grid node")
        return i

    def at(self, t):
        """Cubic interpolation inside the grid."""
        seg = HistorySegment(self.values, self.t_grid[-1] - self.t_grid[0], self.t_grid[-1])
        return seg(t)

    def segment(self, t_end, r=None):
        """History segment ``x_t`` on ``[t_end - r, t_end]``."""
        r = self.r if r is None else r
        i1 = self.index_of(t_end)
        i0 = self.index_of(t_end - r)
        return HistorySegment(self.values[i0:i1 + 1], r, t_end)
