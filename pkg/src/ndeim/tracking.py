"""Exponential tracking: the manifold orbit that a forward solution approaches.

For a forward solution ``x`` the tracking orbit ``y`` is the fixed point of

    Q(y)(t) = L(t) y_t + x(t) - L(t) x_t - int_t^inf (F(y_s) - F(x_s)) ds      t > 0
    Q(y)(t) = xi(y) + L(t) y_t + int_0^t F(y_s) ds                            t <= 0

with ``xi(y) = x(0) - L(0) x_0 - int_0^inf (F(y_s) - F(x_s)) ds``.  The
metric is ``sup_t |f - g| exp(lambda t)``.  For ``t >= -r`` the iteration
stores ``d = y - x`` rather than ``y``: the weight ``exp(lambda t)`` is large
there, and differencing two nearly equal states would amplify round-off.
The improper integral is truncated at the horizon ``T_f`` and the analytic
tail bound ``M_1 |y - x| exp(lambda (r - T_f)) / lambda`` is reported.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .manifold import NONCONTRACTION_RUN, NonContractionError, solve_manifold
from .nde_core.io import write_csv
from .nde_core.problem import HistorySegment, NdeProblem, Trajectory
from .nde_core.solver import (DEFAULT_STEPS_PER_DELAY, StepSizeError, _delay_steps, residual,
                              step_solve)

MAX_ITERATIONS = 2000


class HorizonTooShortError(ValueError):
    """The truncated tail of the improper integral is not negligible."""

    def __init__(self, message, required_t_forward):
        super().__init__(message)
        self.required_t_forward = required_t_forward


class ChartMismatchError(ValueError):
    """Tracking orbit and manifold chart disagree."""


@dataclass
class TrackingResult:
    xi: np.ndarray
    xi_boundary: np.ndarray
    y: Trajectory
    x: Trajectory
    difference: np.ndarray
    t_profile: np.ndarray
    weighted_profile: np.ndarray
    sup_weighted: float
    lambda_hat: Optional[float]
    lam: float
    t_back: float
    t_forward: float
    tail_bound: float
    gaps: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    kappa_bound: Optional[float] = None
    residual: Optional[float] = None
    residual_allowance: Optional[float] = None
    chart_gap: Optional[float] = None
    tol: float = 0.0

    @property
    def phase_gap(self) -> float:
        """Disagreement of the integral formula and ``y(0) - L(0) y_0``."""
        return float(np.max(np.abs(self.xi - self.xi_boundary)))

    def contraction_ok(self, slack=0.05, skip=2) -> bool:
        if self.kappa_bound is None:
            return True
        rates = [q for i, q in enumerate(self.ratios) if i >= skip and q is not None]
        return all(q <= self.kappa_bound * (1 + slack) for q in rates)

    def to_dict(self):
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v
        return {
            "xi": [float(v) for v in self.xi],
            "xi_boundary": [float(v) for v in self.xi_boundary],
            "phase_gap": self.phase_gap,
            "sup_weighted": clean(self.sup_weighted),
            "lambda_hat": clean(self.lambda_hat),
            "lambda": self.lam,
            "t_back": self.t_back,
            "t_forward": self.t_forward,
            "tail_bound": clean(self.tail_bound),
            "tol": self.tol,
            "iterations": len(self.gaps),
            "gaps": self.gaps,
            "ratios": self.ratios,
            "kappa_bound": self.kappa_bound,
            "residual": self.residual,
            "residual_allowance": self.residual_allowance,
            "chart_gap": self.chart_gap,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def profile_csv(self, path_or_buf=None):
        import io
        buf = io.StringIO() if path_or_buf is None else path_or_buf
        rows = [[t, w] for t, w in zip(self.t_profile, self.weighted_profile)]
        return write_csv(buf, ["t", "weighted_difference"], rows)


class _TrackingGrid:
    """Grid ``[t_left, T_f]`` with the forward solution on ``[-r, T_f]``."""

    def __init__(self, problem: NdeProblem, x: Trajectory, t_left):
        self.problem = problem
        self.h = h = x.step
        self.r = problem.r
        self.m = _delay_steps(problem.r, h)
        self.n_left = int(round(-t_left / h))
        self.n_right = x.values.shape[0] - 1 - self.m
        self.t = h * np.arange(-self.n_left, self.n_right + 1)
        self.i0 = self.n_left                        # index of t = 0
        self.x = x.values                            # x.values[k] is at t = -r + k h
        self.atom_lags = [_delay_steps(d, h) for d in problem.neutral.delays]
        self.rhs_lags = [_delay_steps(d, h) for d in problem.rhs.delays]
        self.max_lag = max(self.atom_lags + self.rhs_lags, default=0)
        self.mats = [np.stack([problem.neutral.matrix(i, s) for s in self.t])
                     if problem.neutral.time_dependent else problem.neutral.matrix(i)
                     for i in range(len(problem.neutral.atoms))]
        self.f_x = self._forcing(self.x, self.m)     # F(s, x_s) for s in [0, T_f]

    def _forcing(self, X, start):
        """``F(t, X(t), X(t - d_i))`` for rows ``start..`` of ``X``."""
        lags = self.rhs_lags
        t = self.h * (np.arange(start, X.shape[0]) - start)[:, None]
        return self.problem.rhs.func(t, X[start:], tuple(X[start - lag: X.shape[0] - lag]
                                                         for lag in lags))

    def _neutral(self, X, start, t_index_start):
        out = 0.0
        for mat, lag in zip(self.mats, self.atom_lags):
            past = X[start - lag: X.shape[0] - lag]
            if mat.ndim == 3:
                sub = mat[t_index_start: t_index_start + past.shape[0]]
                out = out + np.einsum("tij,tj->ti", sub, past)
            else:
                out = out + past @ mat.T
        return out

    def apply(self, Yneg, D):
        """One application of the operator.

        ``Yneg`` holds ``y`` on ``[t_left, 0]`` and ``D`` holds ``d = y - x``
        on ``[-r, T_f]``.  Returns the new pair and the phase.
        """
        h, m = self.h, self.m
        # forward branch, t > 0
        Ypos = self.x + D
        diff = self._forcing(Ypos, m) - self.f_x
        diff = np.broadcast_to(diff, (D.shape[0] - m, D.shape[1]))
        incr = 0.5 * h * (diff[1:] + diff[:-1])
        tail = np.zeros_like(diff)
        tail[:-1] = np.cumsum(incr[::-1], axis=0)[::-1]       # int_t^{T_f}
        D_new = D.copy()
        D_new[m:] = self._neutral(D, m, self.i0) - tail
        x0 = self.x[m]
        neutral_x0 = self._neutral(self.x[: m + 1], m, self.i0)[0] if self.mats else 0.0
        xi = x0 - neutral_x0 - tail[0]

        # backward branch, t <= 0
        L = self.max_lag
        Y_new = Yneg.copy()
        t = self.t[L: self.i0 + 1][:, None]
        delayed = tuple(Yneg[L - lag: Yneg.shape[0] - lag] for lag in self.rhs_lags)
        g = self.problem.rhs.func(t, Yneg[L:], delayed)
        g = np.broadcast_to(g, Yneg[L:].shape)
        inc = 0.5 * h * (g[1:] + g[:-1])
        cum = np.zeros_like(g)
        cum[1:] = np.cumsum(inc, axis=0)
        cum = cum - cum[-1]                                    # int_0^t
        Y_new[L:] = xi + self._neutral(Yneg, L, L) + cum
        # history part of d on [-r, 0] follows the backward branch
        D_new[: m + 1] = Y_new[self.i0 - m: self.i0 + 1] - self.x[: m + 1]
        return Y_new, D_new, xi

    def phase_boundary(self, Yneg):
        val = Yneg[self.i0].copy()
        for i, (mat, lag) in enumerate(zip(self.mats, self.atom_lags)):
            A = mat[self.i0] if mat.ndim == 3 else mat
            val -= A @ Yneg[self.i0 - lag]
        return val


def _weighted_gap(grid, Y0, Y1, D0, D1, lam, lo_index):
    neg = np.max(np.abs(Y1[lo_index: grid.i0 + 1] - Y0[lo_index: grid.i0 + 1]), axis=-1)
    w_neg = np.exp(lam * grid.t[lo_index: grid.i0 + 1])
    pos = np.max(np.abs(D1[grid.m:] - D0[grid.m:]), axis=-1)
    w_pos = np.exp(lam * grid.t[grid.i0:])
    return float(max(np.max(neg * w_neg), np.max(pos * w_pos)))


def default_horizons(lam, r):
    return 3.0 / lam, max(6.0 / lam, 20.0 * r)


def operator_Q(y: Trajectory, x: Trajectory, problem: NdeProblem, report=None) -> Trajectory:
    """One application of the tracking operator to an orbit ``y``.

    ``x`` covers ``[-r, T_f]`` and ``y`` covers ``[t_left, T_f]`` on the same
    step.  Nodes of the backward branch without ``r`` of history keep their
    values.
    """
    h = x.step
    if abs(y.step - h) > 1e-12 * h:
        raise StepSizeError("orbit and solution use different steps")
    t_left = y.t_grid[0]
    grid = _TrackingGrid(problem, x, t_left)
    if len(y.t_grid) != len(grid.t):
        raise ValueError("orbit must end where the forward solution ends")
    Yneg = y.values[: grid.i0 + 1]
    D = y.values[grid.i0 - grid.m:] - x.values
    Yn, Dn, _ = grid.apply(Yneg, D)
    out = np.concatenate([Yn, (x.values + Dn)[grid.m + 1:]])
    return Trajectory(grid.t, out, h, problem.r, anchor=0.0)


def track(phi: HistorySegment, problem: NdeProblem, report, chart=None, tol=1e-10,
          h=None, t_back=None, t_forward=None, tail_tol=None, lam=None, x=None,
          max_iter=None):
    """Tracking orbit, asymptotic phase and decay diagnostics for ``phi``.

    Parameters
    ----------
    phi : HistorySegment
        Initial history on ``[-r, 0]``.
    report : AdmissibilityReport
        Supplies ``lambda``, ``kappa`` and ``M_1``.
    chart : WeightedChart, optional
        When given, the orbit is compared with ``Psi(., xi)`` computed on the
        chart's grid and a :class:`ChartMismatchError` is raised if they
        differ by more than ``10 tol``.
    tail_tol : float, optional
        Ceiling for the truncated tail bound; default ``1e-3`` of the
        solution scale.
    """
    r = problem.r
    if report is not None and report.delta is not None and r > report.delta * (1 + 1e-9):
        raise ValueError(f"delay {r} exceeds the admissible bound {report.delta}")
    lam = report.lambda_ if lam is None else lam
    kappa = report.kappa if report is not None else None
    if h is None:
        h = r / DEFAULT_STEPS_PER_DELAY if chart is None else chart.h
    tb_default, tf_default = default_horizons(lam, r)
    t_back = tb_default if t_back is None else t_back
    t_forward = tf_default if t_forward is None else t_forward
    t_back = math.ceil(t_back / h - 1e-9) * h
    if x is None:
        x = step_solve(problem, phi, t_forward, h)
    t_forward = x.t_grid[-1]
    scale = max(1.0, float(np.max(np.abs(x.values))))
    tail_tol = 1e-3 * scale if tail_tol is None else tail_tol

    def initial(grid):
        Y = np.broadcast_to(grid.x[grid.m], (grid.i0 + 1, problem.dim)).copy()
        D = np.zeros_like(grid.x)
        D[: grid.m + 1] = grid.x[grid.m] - grid.x[: grid.m + 1]
        return Y, D

    probe = _TrackingGrid(problem, x, -t_back - r)
    Y0, D0 = initial(probe)
    Y1, D1, _ = probe.apply(Y0, D0)
    gap0 = _weighted_gap(probe, Y0, Y1, D0, D1, lam, probe.max_lag)
    if kappa is not None and 0 < kappa < 1 and gap0 > tol:
        budget = int(math.ceil(math.log(tol / gap0) / math.log(kappa))) + 2
    else:
        budget = MAX_ITERATIONS if gap0 > tol else 1
    budget = min(max(budget, 1), MAX_ITERATIONS if max_iter is None else max_iter)

    grid = _TrackingGrid(problem, x, -t_back - (budget + 1) * r)
    Y, D = initial(grid)
    lo_index = int(round((-t_back - grid.t[0]) / h))
    floor = 64 * np.finfo(float).eps * scale
    gaps, ratios = [], []
    rising = 0
    converged = False
    xi = None
    for _ in range(budget):
        Yn, Dn, xi = grid.apply(Y, D)
        gap = _weighted_gap(grid, Y, Yn, D, Dn, lam, lo_index)
        gaps.append(gap)
        if len(gaps) >= 2:
            prev = gaps[-2]
            q = gap / prev if prev > 1e3 * floor else None
            ratios.append(q)
            rising = rising + 1 if (q is not None and q >= 1) else 0
        Y, D = Yn, Dn
        if rising >= NONCONTRACTION_RUN:
            raise NonContractionError(
                f"tracking gap failed to shrink for {NONCONTRACTION_RUN} iterations", gaps)
        if gap <= tol:
            converged = True
            break
    if not converged:
        raise NonContractionError(f"no convergence within {budget} iterations "
                                  f"(last gap {gaps[-1]:.3g})", gaps)

    t_pos = grid.t[grid.i0:]
    diff = np.max(np.abs(D[grid.m:]), axis=-1)
    sup1 = float(np.max(diff * np.exp(lam * t_pos)))
    m1 = float(report.params["Mj"][0]) if report is not None and report.params else 0.0
    tail = m1 * sup1 * math.exp(lam * (r - t_forward)) / lam
    if tail > tail_tol:
        need = r + math.log(m1 * sup1 / (lam * tail_tol)) / lam
        raise HorizonTooShortError(
            f"tail bound {tail:.3g} exceeds {tail_tol:.3g}; need T_f >= {need:.6g}", need)

    keep = slice(lo_index, None)
    y_vals = np.concatenate([Y[lo_index:], (x.values + D)[grid.m + 1:]])
    y_traj = Trajectory(grid.t[keep], y_vals, h, r, anchor=0.0)
    sup_w, lam_hat = decay_fit(None, None, lam, tol, t=t_pos, diff=diff, r=r)
    res, allowance = _orbit_residual(problem, y_traj, x, tol)
    # the phase from the integral formula refers to the last input iterate;
    # recompute it for the returned orbit
    _, _, xi_final = grid.apply(Y, D)
    result = TrackingResult(
        xi=np.asarray(xi_final, dtype=float), xi_boundary=grid.phase_boundary(Y),
        y=y_traj, x=x, difference=D[grid.m:], t_profile=t_pos,
        weighted_profile=diff * np.exp(lam * t_pos), sup_weighted=sup_w, lambda_hat=lam_hat,
        lam=lam, t_back=t_back, t_forward=t_forward, tail_bound=tail, gaps=gaps,
        ratios=ratios, kappa_bound=kappa, residual=res, residual_allowance=allowance, tol=tol)
    if chart is not None:
        result.chart_gap = chart_gap(result, problem, report, chart, tol)
        if result.chart_gap > 10 * tol:
            raise ChartMismatchError(
                f"orbit differs from the chart by {result.chart_gap:.3g} (> 10 tol); "
                "check that lambda and delta agree between runs")
    return result


def chart_gap(result: TrackingResult, problem, report, chart, tol) -> float:
    """``max |y(t) - Psi(t, xi)|`` over the overlap of orbit and chart windows."""
    psi, _ = solve_manifold(problem, report, result.xi[None, :], window=chart.window,
                            tol=tol, h=chart.h, lam=chart.lam)
    lo = max(result.y.t_grid[0], chart.window[0])
    hi = min(result.y.t_grid[-1], chart.window[1])
    h = chart.h
    times = h * np.arange(int(math.ceil(lo / h - 1e-9)), int(math.floor(hi / h + 1e-9)) + 1)
    a = result.y.values[[result.y.index_of(t) for t in times]]
    b = psi.values[[psi.index_of(t) for t in times], 0, :]
    return float(np.max(np.abs(a - b)))


def _orbit_residual(problem, y: Trajectory, x: Trajectory, tol):
    """Residual of the orbit on ``[t_left + r, T_f - r]`` and its allowance."""
    r = problem.r
    h = y.step
    i0 = y.index_of(y.t_grid[0] + r) - _delay_steps(r, h)
    i1 = y.index_of(y.t_grid[-1] - r)
    sub = Trajectory(y.t_grid[i0:i1 + 1], y.values[i0:i1 + 1], h, r, anchor=0.0)
    res, _ = residual(problem, sub)
    res_x, _ = residual(problem, x)
    lags = [_delay_steps(d, h) for d in problem.rhs.delays]
    L = max(lags)

    def forcing(traj):
        X = traj.values
        t = traj.t_grid[L:][:, None]
        g = problem.rhs.func(t, X[L:], tuple(X[L - lag: X.shape[0] - lag] for lag in lags))
        return np.broadcast_to(g, X[L:].shape)

    g = forcing(y)
    second = float(np.max(np.abs(g[2:] - 2 * g[1:-1] + g[:-2]))) if g.shape[0] > 2 else 0.0
    gx = forcing(x)
    second_x = float(np.max(np.abs(gx[2:] - 2 * gx[1:-1] + gx[:-2]))) if gx.shape[0] > 2 else 0.0
    return res, 10 * tol + res_x + 0.5 * (second + second_x)


def decay_fit(x: Optional[Trajectory], y: Optional[Trajectory], lam, tol=1e-10, t=None,
              diff=None, r=None):
    """Weighted supremum of ``|x - y|`` on ``t >= 0`` and a fitted decay rate.

    The rate is minus the least-squares slope of ``log |x - y|`` over nodes
    with ``t >= r`` where the difference exceeds ``100 tol``.  Returns
    ``(sup_weighted, lambda_hat)`` with ``lambda_hat = None`` when fewer than
    three nodes qualify.
    """
    if diff is None:
        i0 = x.index_of(0.0)
        j0 = y.index_of(0.0)
        n = min(len(x.t_grid) - i0, len(y.t_grid) - j0)
        t = x.t_grid[i0:i0 + n]
        diff = np.max(np.abs(x.values[i0:i0 + n] - y.values[j0:j0 + n]), axis=-1)
        r = x.r if r is None else r
    t = np.asarray(t, dtype=float)
    diff = np.asarray(diff, dtype=float)
    sup_weighted = float(np.max(diff * np.exp(lam * t))) if len(t) else 0.0
    start = 0.0 if r is None else r
    use = (t >= start - 1e-12) & (diff > 100 * tol)
    if np.count_nonzero(use) < 3:
        return sup_weighted, None
    slope = np.polyfit(t[use], np.log(diff[use]), 1)[0]
    return sup_weighted, float(-slope)


def horizon_stability(phi, problem, report, factor=1.5, **kwargs):
    """Relative change of ``sup_weighted`` when the horizon grows by ``factor``."""
    base = track(phi, problem, report, **kwargs)
    longer = dict(kwargs)
    longer["t_forward"] = base.t_forward * factor
    ext = track(phi, problem, report, **longer)
    change = abs(ext.sup_weighted - base.sup_weighted) / max(base.sup_weighted, 1e-300)
    return base, ext, change
