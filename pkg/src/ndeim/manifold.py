"""Inertial manifold charts as fixed points of the integral operators.

For a phase ``xi`` the chart value ``Psi(t, xi)`` is the globally defined
solution with ``Psi(0) - sum A_i Psi(-r_i) = xi`` whose growth is at most
``exp(lambda |t|)``.  It is computed by Picard iteration of

    T(x)(t, xi) = xi + sum_i A_i(t) x(t - r_i, xi) + int_0^t F(s, x_s) ds

on a uniform grid, all phases at once.  The integral uses the composite
trapezoid rule and the delays are grid aligned, so one application of
``T`` maps grid functions to grid functions.  Each application needs ``r``
of history to the left of its output; the grid therefore carries a buffer
of ``(N + 1) r`` beyond the window, where ``N`` bounds the number of
iterations through the contraction rate.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nde_core.io import write_csv
from .nde_core.problem import NdeProblem, Trajectory
from .nde_core.solver import DEFAULT_STEPS_PER_DELAY, StepSizeError, _delay_steps, residual

MAX_ITERATIONS = 2000
NONCONTRACTION_RUN = 5


class NonContractionError(RuntimeError):
    """Picard iteration failed to contract."""

    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = list(gaps or [])


class StencilError(ValueError):
    """Finite-difference estimates at two step sizes disagree."""


@dataclass
class WeightedChart:
    """Samples ``Psi(t, xi)`` of a manifold chart on a uniform grid.

    ``values`` has shape ``(len(t_grid), len(xi_set), n)``.  ``t_grid``
    includes the left buffer; ``window`` is the interval on which the values
    are converged.
    """

    t_grid: np.ndarray
    xi_set: np.ndarray
    values: np.ndarray
    lam: float
    gamma: int
    r: float
    h: float
    window: tuple
    valid_from: int = 0

    @property
    def window_slice(self):
        i0 = int(round((self.window[0] - self.t_grid[0]) / self.h))
        i1 = int(round((self.window[1] - self.t_grid[0]) / self.h))
        return slice(i0, i1 + 1)

    @property
    def t_window(self):
        return self.t_grid[self.window_slice]

    @property
    def window_values(self):
        return self.values[self.window_slice]

    def index_of(self, t) -> int:
        i = int(round((t - self.t_grid[0]) / self.h))
        if i < 0 or i >= len(self.t_grid) or abs(self.t_grid[i] - t) > 1e-9 * self.h:
            raise ValueError(f"time {t} is not a chart node")
        return i

    def weights(self, t=None, power=1):
        """``(exp(lambda |t|) |xi|^gamma)^(-power)`` with shape ``(nt, nxi)``."""
        t = self.t_window if t is None else t
        w = np.exp(-power * self.lam * np.abs(t))[:, None]
        if self.gamma:
            norms = np.max(np.abs(self.xi_set), axis=1)
            w = w * norms[None, :] ** (-self.gamma * power)
        else:
            w = w * np.ones(len(self.xi_set))[None, :]
        return w

    def weighted_norm(self, values=None) -> float:
        values = self.window_values if values is None else values
        return float(np.max(np.max(np.abs(values), axis=-1) * self.weights()))

    def trajectory(self, j: int, t_start=None) -> Trajectory:
        """Chart slice for phase ``j`` as a joint-free trajectory."""
        sl = self.window_slice
        i0 = sl.start if t_start is None else self.index_of(t_start)
        t = self.t_grid[i0:sl.stop]
        return Trajectory(t, self.values[i0:sl.stop, j, :], self.h, self.r, anchor=None)

    def history(self, j: int):
        """``Psi_0(., xi_j)`` on ``[-r, 0]`` as a history segment."""
        from .nde_core.problem import HistorySegment
        i0 = self.index_of(-self.r)
        i1 = self.index_of(0.0)
        return HistorySegment(self.values[i0:i1 + 1, j, :], self.r, 0.0)

    def to_csv(self, path_or_buf=None, r_value=None):
        import io
        n = self.values.shape[-1]
        header = ["t", "r"] + [f"xi_{i + 1}" for i in range(n)] + [f"psi_{i + 1}" for i in range(n)]
        rows = []
        rv = self.r if r_value is None else r_value
        for ti, t in zip(range(*self.window_slice.indices(len(self.t_grid))), self.t_window):
            for j, xi in enumerate(self.xi_set):
                rows.append([t, rv, *xi, *self.values[ti, j]])
        buf = io.StringIO() if path_or_buf is None else path_or_buf
        return write_csv(buf, header, rows)


@dataclass
class PicardDiagnostics:
    iterates: int = 0
    weighted_gaps: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    empirical_rate: Optional[float] = None
    kappa_bound: Optional[float] = None
    iteration_budget: int = 0
    noise_floor: float = 0.0
    weighted_norms: list = field(default_factory=list)
    beta0: Optional[float] = None
    self_map_ok: Optional[bool] = None
    boundary_defect: Optional[float] = None
    residual: Optional[float] = None
    residual_allowance: Optional[float] = None
    converged: bool = False

    def contraction_ok(self, slack=0.05, skip=2) -> bool:
        """Measured gap ratios after the first ``skip`` iterations stay below kappa (1 + slack)."""
        if self.kappa_bound is None:
            return True
        rates = [q for i, q in enumerate(self.ratios) if i >= skip and q is not None]
        return all(q <= self.kappa_bound * (1 + slack) for q in rates)

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, float) and not math.isfinite(v):
                v = None
            out[k] = v
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Grid:
    """Grid bookkeeping and one application of the integral operator."""

    def __init__(self, problem: NdeProblem, h, t_left, t_right):
        self.problem = problem
        self.h = h
        self.n_left = int(round(-t_left / h))
        self.n_right = int(round(t_right / h))
        self.t = h * np.arange(-self.n_left, self.n_right + 1)
        self.i0 = self.n_left
        self.atom_lags = [_delay_steps(d, h) for d in problem.neutral.delays]
        self.rhs_lags = [_delay_steps(d, h) for d in problem.rhs.delays]
        self.max_lag = max(self.atom_lags + self.rhs_lags, default=0)
        if problem.neutral.time_dependent:
            self.mats = [np.stack([problem.neutral.matrix(i, s) for s in self.t])
                         for i in range(len(problem.neutral.atoms))]
        else:
            self.mats = [problem.neutral.matrix(i) for i in range(len(problem.neutral.atoms))]

    def apply(self, X, xi):
        """``T(X)`` on nodes with full history support; other nodes copied."""
        L = self.max_lag
        out = X.copy()
        sl = slice(L, None)
        new = np.broadcast_to(xi, X[sl].shape).copy()
        for mat, lag in zip(self.mats, self.atom_lags):
            past = X[L - lag: X.shape[0] - lag]
            if mat.ndim == 3:
                new += np.einsum("tij,tkj->tki", mat[L:], past)
            else:
                new += past @ mat.T
        t = self.t[L:][:, None, None]
        delayed = tuple(X[L - lag: X.shape[0] - lag] for lag in self.rhs_lags)
        g = self.problem.rhs.func(t, X[sl], delayed)
        g = np.broadcast_to(g, new.shape)
        new += self.integral(g, self.i0 - L)
        out[sl] = new
        return out

    def integral(self, g, i0):
        """Signed cumulative trapezoid integral from node ``i0``."""
        incr = 0.5 * self.h * (g[1:] + g[:-1])
        cum = np.zeros_like(g)
        cum[1:] = np.cumsum(incr, axis=0)
        return cum - cum[i0]


def _window_bounds(lam, h, window):
    if window is None:
        T = 5.0 / lam
        window = (-T, T)
    lo = -math.ceil(-window[0] / h - 1e-9) * h
    hi = math.ceil(window[1] / h - 1e-9) * h
    return lo, hi


def _weights(t, xi_set, lam, gamma, power=1):
    w = np.exp(-power * lam * np.abs(t))[:, None]
    if gamma:
        norms = np.max(np.abs(xi_set), axis=1)
        return w * norms[None, :] ** (-gamma * power)
    return w * np.ones(len(xi_set))[None, :]


def default_h(problem: NdeProblem) -> float:
    return problem.r / DEFAULT_STEPS_PER_DELAY


def solve_manifold(problem: NdeProblem, report, xi_set, window=None, tol=1e-12, h=None,
                   gamma=0, lam=None, kappa_bound=None, initial=None, max_iter=None):
    """Picard iteration of the integral operator from ``x = xi``.

    Parameters
    ----------
    problem : NdeProblem
    report : AdmissibilityReport
        Supplies ``lambda`` (weight rate), ``kappa`` (contraction bound) and
        ``beta[0]`` for the self-mapping check.
    xi_set : array (n_xi, n)
    window : (t_min, t_max), optional
        Output window; default ``[-5/lambda, 5/lambda]``.
    tol : float
        Stop when the weighted gap between iterates is at most ``tol``.
    initial : callable, optional
        ``initial(t, xi_set) -> array (nt, n_xi, n)``; default ``xi``.

    Returns
    -------
    (WeightedChart, PicardDiagnostics)
    """
    xi_set = np.atleast_2d(np.asarray(xi_set, dtype=float))
    if xi_set.shape[1] != problem.dim:
        raise ValueError("phase dimension does not match the problem")
    if report is not None and not report.feasible:
        raise ValueError("solve_manifold needs a feasible admissibility report")
    if report is not None and report.delta is not None and problem.r > report.delta * (1 + 1e-9):
        raise ValueError(f"delay {problem.r} exceeds the admissible bound {report.delta}")
    if lam is None and report is not None:
        lam = report.lambda_
    if lam is None:
        raise ValueError("a weight rate is needed: pass a report or lam")
    kappa = report.kappa if (kappa_bound is None and report is not None) else kappa_bound
    h = default_h(problem) if h is None else float(h)
    if h > problem.r / 8 * (1 + 1e-12):
        raise StepSizeError("step exceeds r/8")
    lo, hi = _window_bounds(lam, h, window)
    scale = max(1.0, float(np.max(np.abs(xi_set))))
    floor = 64 * np.finfo(float).eps * scale
    if not tol > floor:
        raise ValueError(f"tolerance {tol} is below the round-off floor {floor:.3g}")

    # first application on a window-only grid gives the initial gap
    probe = _Grid(problem, h, lo - problem.r, hi)
    X0 = _initial(probe.t, xi_set, initial)
    X1 = probe.apply(X0, xi_set)
    wsl = slice(probe.max_lag, None)
    w_probe = _weights(probe.t[wsl], xi_set, lam, gamma)
    gap0 = float(np.max(np.max(np.abs(X1[wsl] - X0[wsl]), axis=-1) * w_probe))
    if kappa is not None and 0 < kappa < 1 and gap0 > tol:
        budget = int(math.ceil(math.log(tol / gap0) / math.log(kappa))) + 2
    else:
        budget = MAX_ITERATIONS if gap0 > tol else 1
    budget = min(max(budget, 1), MAX_ITERATIONS if max_iter is None else max_iter)
    if max_iter is not None:
        budget = min(budget, max_iter)

    grid = _Grid(problem, h, lo - (budget + 1) * problem.r, hi)
    X = _initial(grid.t, xi_set, initial)
    win = slice(int(round((lo - grid.t[0]) / h)), len(grid.t))
    w = _weights(grid.t[win], xi_set, lam, gamma)
    diag = PicardDiagnostics(kappa_bound=kappa, iteration_budget=budget, noise_floor=floor)
    beta0 = None
    if report is not None and report.beta:
        beta0 = report.eps[0] if (gamma and report.eps) else report.beta[0]
    diag.beta0 = beta0
    rising = 0
    for it in range(1, budget + 1):
        Xn = grid.apply(X, xi_set)
        gap = float(np.max(np.max(np.abs(Xn[win] - X[win]), axis=-1) * w))
        diag.weighted_gaps.append(gap)
        diag.weighted_norms.append(float(np.max(np.max(np.abs(Xn[win]), axis=-1) * w)))
        if len(diag.weighted_gaps) >= 2:
            prev = diag.weighted_gaps[-2]
            ratio = gap / prev if prev > 1e3 * floor else None
            diag.ratios.append(ratio)
            rising = rising + 1 if (ratio is not None and ratio >= 1) else 0
        X = Xn
        diag.iterates = it
        if rising >= NONCONTRACTION_RUN:
            raise NonContractionError(
                f"weighted gap failed to shrink for {NONCONTRACTION_RUN} iterations",
                diag.weighted_gaps)
        if gap <= tol:
            diag.converged = True
            break
    if not diag.converged:
        raise NonContractionError(f"no convergence within {budget} iterations "
                                  f"(last gap {diag.weighted_gaps[-1]:.3g})", diag.weighted_gaps)
    rates = [q for i, q in enumerate(diag.ratios) if i >= 2 and q is not None]
    diag.empirical_rate = max(rates) if rates else None
    if beta0 is not None:
        diag.self_map_ok = all(v <= beta0 * (1 + 1e-9) for v in diag.weighted_norms)
    chart = WeightedChart(grid.t, xi_set, X, lam, gamma, problem.r, h, (lo, hi),
                          valid_from=grid.max_lag * (diag.iterates + 1))
    diag.boundary_defect = boundary_defect(chart, problem)
    res, allowance = chart_residual(chart, problem, tol)
    diag.residual, diag.residual_allowance = res, allowance
    return chart, diag


def _initial(t, xi_set, initial):
    if initial is None:
        return np.broadcast_to(xi_set, (len(t),) + xi_set.shape).copy()
    return np.asarray(initial(t, xi_set), dtype=float).copy()


def operator_T(chart: WeightedChart, problem: NdeProblem, report=None) -> WeightedChart:
    """One application of the integral operator to a chart.

    Nodes without ``r`` of history to their left keep their old values and
    the chart's ``valid_from`` index advances accordingly.
    """
    grid = _Grid(problem, chart.h, chart.t_grid[0], chart.t_grid[-1])
    if grid.max_lag > chart.window_slice.start:
        raise ValueError("chart lacks history support to the left of its window")
    X = grid.apply(chart.values, chart.xi_set)
    return WeightedChart(chart.t_grid, chart.xi_set, X, chart.lam, chart.gamma, chart.r,
                         chart.h, chart.window, valid_from=chart.valid_from + grid.max_lag)


def boundary_defect(chart: WeightedChart, problem: NdeProblem) -> float:
    """``max_xi |Psi(0) - sum_i A_i(0) Psi(-r_i) - xi|``."""
    i0 = chart.index_of(0.0)
    val = chart.values[i0].copy()
    for i, (_, d) in enumerate(problem.neutral.atoms):
        val -= chart.values[chart.index_of(-d)] @ problem.neutral.matrix(i, 0.0).T
    return float(np.max(np.abs(val - chart.xi_set)))


def chart_residual(chart: WeightedChart, problem: NdeProblem, tol: float):
    """Equation residual of each phase slice and the allowance ``10 tol + O(h^2)``.

    The trapezoid rule leaves exactly a quarter of the second difference of
    the integrand as centred-difference defect, so the ``O(h^2)`` part is
    twice that quantity measured on the slice.
    """
    worst = 0.0
    allowance = 0.0
    t_start = chart.window[0] + problem.r
    i0 = chart.index_of(t_start) - int(round(problem.r / chart.h))
    lags = [_delay_steps(d, chart.h) for d in problem.rhs.delays]
    for j in range(len(chart.xi_set)):
        traj = chart.trajectory(j, t_start=chart.t_grid[i0])
        res, _ = residual(problem, traj, exclude_joints=False)
        worst = max(worst, res)
        X = traj.values
        L = max(lags + [_delay_steps(d, chart.h) for d in problem.neutral.delays])
        t = traj.t_grid[L:][:, None]
        g = problem.rhs.func(t, X[L:], tuple(X[L - lag: X.shape[0] - lag] for lag in lags))
        g = np.broadcast_to(g, X[L:].shape)
        if g.shape[0] >= 3:
            d2 = np.max(np.abs(g[2:] - 2 * g[1:-1] + g[:-2]))
            allowance = max(allowance, 2 * 0.25 * d2)
    return worst, 10 * tol + allowance


def xi_stencil(base_points, step, reach=2):
    """Phases ``xi + step * a`` for offsets with at most two nonzero entries.

    Returns ``(xi_set, index)`` where ``index[(b, offset)]`` is the column of
    base point ``b`` shifted by ``offset``.
    """
    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    n = base_points.shape[1]
    offsets = [o for o in itertools.product(range(-reach, reach + 1), repeat=n)
               if sum(1 for v in o if v) <= 2]
    rows, index = [], {}
    for b, xi in enumerate(base_points):
        for o in offsets:
            index[(b, o)] = len(rows)
            rows.append(xi + step * np.array(o, dtype=float))
    return np.array(rows), index


def _fd_tables(values, index, n_base, n, step, scale):
    """First and second phase derivatives with step ``scale * step``.

    ``values`` has shape (nt, n_xi, n); returns arrays of shape
    ``(nt, n_base, n_out, n)`` and ``(nt, n_base, n_out, n, n)``.
    """
    def col(b, o):
        return values[:, index[(b, tuple(o))], :]

    nt = values.shape[0]
    n_out = values.shape[2]
    D1 = np.zeros((nt, n_base, n_out, n))
    D2 = np.zeros((nt, n_base, n_out, n, n))
    eta = scale * step
    for b in range(n_base):
        zero = [0] * n
        c0 = col(b, zero)
        for i in range(n):
            p = list(zero); p[i] = scale
            m = list(zero); m[i] = -scale
            D1[:, b, :, i] = (col(b, p) - col(b, m)) / (2 * eta)
            D2[:, b, :, i, i] = (col(b, p) - 2 * c0 + col(b, m)) / eta**2
            for j in range(i + 1, n):
                pp = list(zero); pp[i] = scale; pp[j] = scale
                pm = list(zero); pm[i] = scale; pm[j] = -scale
                mp = list(zero); mp[i] = -scale; mp[j] = scale
                mm = list(zero); mm[i] = -scale; mm[j] = -scale
                mixed = (col(b, pp) - col(b, pm) - col(b, mp) + col(b, mm)) / (4 * eta**2)
                D2[:, b, :, i, j] = mixed
                D2[:, b, :, j, i] = mixed
    return D1, D2


@dataclass
class DerivativeCheck:
    D1: np.ndarray
    D2: np.ndarray
    d1_weighted: float
    d2_weighted: float
    lipschitz_weighted: Optional[float]
    beta1: Optional[float]
    beta2: Optional[float]
    margins: dict
    ok: bool
    pairs: int = 0


def manifold_xi_derivatives(chart: WeightedChart, base_points, step, index, report=None,
                            order=2, rtol=1e-3, atol=1e-7, bound_tol=1e-9, max_pairs=None):
    """Finite-difference phase derivatives of a chart built on :func:`xi_stencil`.

    Checks the weighted bounds ``|D^j Psi| exp(-j lambda |t|) <= beta_j``
    for ``j = 1, 2`` and, at smoothness order one, the Lipschitz ratio of
    ``D Psi`` between base points against ``beta_2``.  Estimates from steps
    ``step`` and ``2 step`` must agree to ``rtol`` (relative to the largest
    entry) plus ``atol``, otherwise :class:`StencilError` is raised.
    """
    if order > 2:
        raise ValueError("phase derivatives are probed up to order 2")
    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    n_base, n = base_points.shape
    vals = chart.window_values
    D1, D2 = _fd_tables(vals, index, n_base, n, step, 1)
    D1c, D2c = _fd_tables(vals, index, n_base, n, step, 2)
    for name, fine, coarse in (("first", D1, D1c), ("second", D2, D2c)):
        if name == "second" and order < 2:
            continue
        gap = np.max(np.abs(fine - coarse))
        if gap > rtol * max(1.0, np.max(np.abs(fine))) + atol:
            raise StencilError(f"{name} derivative estimates disagree by {gap:.3g}")
    t = chart.t_window
    w1 = np.exp(-chart.lam * np.abs(t))[:, None]
    w2 = w1**2
    norm1 = np.max(np.sum(np.abs(D1), axis=-1), axis=-1)            # (nt, n_base)
    norm2 = np.max(np.sum(np.abs(D2), axis=(-1, -2)), axis=-1)
    d1w = float(np.max(norm1 * w1))
    d2w = float(np.max(norm2 * w2))
    lip = None
    pairs = 0
    combos = list(itertools.combinations(range(n_base), 2))
    if max_pairs is not None:
        combos = combos[:max_pairs]
    for a, b in combos:
        dist = float(np.max(np.abs(base_points[a] - base_points[b])))
        diff = np.max(np.sum(np.abs(D1[:, a] - D1[:, b]), axis=-1), axis=-1)
        val = float(np.max(diff * w2[:, 0]) / dist)
        lip = val if lip is None else max(lip, val)
        pairs += 1
    beta1 = beta2 = None
    margins = {}
    ok = True
    if report is not None and report.beta is not None:
        beta1 = report.beta[1]
        beta2 = report.beta[2] if len(report.beta) > 2 else None
        margins["d1"] = beta1 / d1w - 1 if d1w > 0 else math.inf
        ok &= d1w <= beta1 * (1 + bound_tol)
        if beta2 is not None:
            margins["d2"] = beta2 / d2w - 1 if d2w > 0 else math.inf
            ok &= d2w <= beta2 * (1 + bound_tol)
            if lip is not None:
                margins["lipschitz"] = beta2 / lip - 1 if lip > 0 else math.inf
                ok &= lip <= beta2 * (1 + bound_tol)
    return DerivativeCheck(D1, D2, d1w, d2w, lip, beta1, beta2, margins, bool(ok), pairs)


# ---------------------------------------------------------------------------
# the delay-parameterised chart


@dataclass
class ChartFamily:
    """Charts ``Psi(t, r, xi)`` for several delays on a common grid."""

    r_set: np.ndarray
    charts: list
    diagnostics: list

    @property
    def h(self):
        return self.charts[0].h

    def to_csv(self, path_or_buf=None):
        import io
        buf = io.StringIO() if path_or_buf is None else path_or_buf
        text = ""
        for k, (r, chart) in enumerate(zip(self.r_set, self.charts)):
            part = chart.to_csv(None, r_value=r)
            text += part if k == 0 else part.split("\n", 1)[1]
        buf.write(text)
        return text


def delay_grid(delta, count=5, steps_per_delay=DEFAULT_STEPS_PER_DELAY):
    """``count`` uniformly spaced delays in ``(0, delta)`` sharing one step ``h``.

    The delays are ``r_j = (j + 1) delta / (count + 1)``; ``h`` divides the
    smallest one into ``steps_per_delay`` pieces.
    """
    unit = delta / (count + 1)
    h = unit / steps_per_delay
    return np.array([(j + 1) * unit for j in range(count)]), h


def operator_F(family: ChartFamily, problem: NdeProblem, report=None) -> ChartFamily:
    """Slice-wise application of the delay-parameterised operator."""
    charts = [operator_T(c, problem.with_delay(r), report)
              for r, c in zip(family.r_set, family.charts)]
    return ChartFamily(family.r_set, charts, family.diagnostics)


def solve_manifold_family(problem: NdeProblem, report, r_set, xi_set, h, window=None,
                          tol=1e-12, gamma=0):
    """Fixed points of the delay-parameterised operator, one slice per delay."""
    if report.eps is None:
        raise ValueError("the delay-parameterised chart needs an H2 report with eps")
    r_set = np.asarray(r_set, dtype=float)
    if np.any(r_set <= 0) or np.any(r_set >= report.delta * (1 + 1e-12)):
        raise ValueError("every delay must lie in (0, delta)")
    lam = report.lambda_
    if window is None:
        T = 5.0 / lam
        window = (-T, T)
    charts, diags = [], []
    for r in r_set:
        chart, diag = solve_manifold(problem.with_delay(r), report, xi_set, window=window,
                                     tol=tol, h=h, gamma=gamma, lam=lam)
        charts.append(chart)
        diags.append(diag)
    return ChartFamily(r_set, charts, diags)


@dataclass
class DelayProbe:
    dt: np.ndarray
    dr: np.ndarray
    d1_weighted: float
    d2_weighted: float
    lipschitz_weighted: float
    eps1: float
    eps2: float
    identity_lhs: float
    identity_rhs: float
    identity_rel: float
    ok: bool


def _common_window(family):
    lo = max(c.window[0] for c in family.charts)
    hi = min(c.window[1] for c in family.charts)
    return lo, hi


def _on_nodes(chart, times):
    idx = np.array([chart.index_of(t) for t in times])
    return chart.values[idx]


def r_smoothness_probe(family: ChartFamily, report, t_step=1, bound_tol=1e-9,
                       identity_t=None, identity_phase=0):
    """Finite-difference (t, r) derivatives of a chart family and their bounds.

    Checks ``|D Psi| (exp(lambda|t|)|xi|^gamma)^-1 <= eps_1`` with ``D`` over
    ``(t, r)``, the second-derivative bound against ``eps_2``, the Lipschitz
    ratio of ``D Psi`` across delays against ``eps_2``, and the
    shifted-derivative identity for ``g(t, r) = Psi(t - r, r)`` at the mixed
    order ``(1, 1)``, where both sides come from independent difference
    stencils.
    """
    r_set = family.r_set
    if len(r_set) < 5:
        raise ValueError("need at least five delays")
    dr_step = np.diff(r_set)
    if np.max(np.abs(dr_step - dr_step[0])) > 1e-9 * dr_step[0]:
        raise ValueError("delays must be uniformly spaced")
    dr_step = float(dr_step[0])
    tols = {round(math.log10(max(d.weighted_gaps[-1], 1e-300))) for d in family.diagnostics}
    hs = {c.h for c in family.charts}
    if len(hs) != 1:
        raise ValueError("slices computed on different grids")
    h = hs.pop()
    ht = t_step * h
    lo, hi = _common_window(family)
    lo += 2 * ht
    hi -= 2 * ht
    times = h * np.arange(int(math.ceil(lo / h - 1e-9)), int(math.floor(hi / h + 1e-9)) + 1)
    vals = np.stack([_on_nodes(c, times) for c in family.charts])        # (nr, nt, nxi, n)
    vals_p = np.stack([_on_nodes(c, times + ht) for c in family.charts])
    vals_m = np.stack([_on_nodes(c, times - ht) for c in family.charts])
    dt = (vals_p - vals_m) / (2 * ht)
    dtt = (vals_p - 2 * vals + vals_m) / ht**2
    dr = np.empty_like(vals)
    dr[1:-1] = (vals[2:] - vals[:-2]) / (2 * dr_step)
    dr[0] = (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * dr_step)
    dr[-1] = (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * dr_step)
    drr = np.empty_like(vals)
    drr[1:-1] = (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / dr_step**2
    drr[0], drr[-1] = drr[1], drr[-2]
    dtr = np.empty_like(vals)
    dtr[1:-1] = (dt[2:] - dt[:-2]) / (2 * dr_step)
    dtr[0] = (-3 * dt[0] + 4 * dt[1] - dt[2]) / (2 * dr_step)
    dtr[-1] = (3 * dt[-1] - 4 * dt[-2] + dt[-3]) / (2 * dr_step)

    chart0 = family.charts[0]
    lam, gamma = chart0.lam, chart0.gamma
    w = _weights(times, chart0.xi_set, lam, gamma)[None]                # (1, nt, nxi)
    n1 = np.max(np.abs(dt) + np.abs(dr), axis=-1)
    n2 = np.max(np.abs(dtt) + 2 * np.abs(dtr) + np.abs(drr), axis=-1)
    d1w = float(np.max(n1 * w))
    d2w = float(np.max(n2 * w**2))
    lip = 0.0
    for a, b in itertools.combinations(range(len(r_set)), 2):
        diff = np.max(np.abs(dt[a] - dt[b]) + np.abs(dr[a] - dr[b]), axis=-1)
        lip = max(lip, float(np.max(diff * w[0] ** 2)) / abs(r_set[a] - r_set[b]))
    eps1, eps2 = report.eps[1], report.eps[2]
    ok = d1w <= eps1 * (1 + bound_tol) and d2w <= eps2 * (1 + bound_tol) \
        and lip <= eps2 * (1 + bound_tol)

    lhs, rhs = shifted_identity(family, identity_t, identity_phase)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    return DelayProbe(dt, dr, d1w, d2w, lip, eps1, eps2, lhs, rhs, rel, bool(ok))


def shifted_identity(family: ChartFamily, t=None, phase=0, t_step=None, component=0):
    """Both sides of ``d_t d_r [Psi(t - r, r)] = Psi_tr - Psi_tt`` at ``(t - r, r)``.

    The left side differences ``g(t, r) = Psi(t - r, r)`` directly; the
    right side differences ``Psi`` at the shifted point.  Evaluated at the
    middle delay, with the r-difference taken across the outermost slices
    and a t-step of a quarter of the window (both keep round-off from the
    fixed-point tolerance well below the truncation error).
    """
    mid = len(family.r_set) // 2
    lo_j, hi_j = 0, len(family.r_set) - 1
    r = float(family.r_set[mid])
    dr = float(family.r_set[hi_j] - family.r_set[lo_j])
    h = family.h
    lo, hi = _common_window(family)
    if t_step is None:
        t_step = max(1, int(0.25 * min(-lo, hi) / h))
    ht = t_step * h
    t = 0.0 if t is None else round(t / h) * h

    def psi(j, s):
        c = family.charts[j]
        return c.values[c.index_of(s), phase, component]

    def g(j, s):
        return psi(j, s - family.r_set[j])

    lhs = (g(hi_j, t + ht) - g(lo_j, t + ht) - g(hi_j, t - ht) + g(lo_j, t - ht)) / (2 * ht * dr)
    s = t - r
    psi_tr = (psi(hi_j, s + ht) - psi(lo_j, s + ht) - psi(hi_j, s - ht)
              + psi(lo_j, s - ht)) / (2 * ht * dr)
    psi_tt = (psi(mid, s + ht) - 2 * psi(mid, s) + psi(mid, s - ht)) / ht**2
    return float(lhs), float(psi_tr - psi_tt)
