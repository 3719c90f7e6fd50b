"""Method-of-steps integration of neutral equations and the residual check."""

from __future__ import annotations

import math

import numpy as np

from .problem import HistoryError, HistorySegment, NdeProblem, Trajectory, _HALF_WEIGHTS

DEFAULT_STEPS_PER_DELAY = 32
BLOWUP = 1e12


class StepSizeError(ValueError):
    """Step too large or not commensurate with the delays."""


class DivergenceError(RuntimeError):
    """The state left every bounded set."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


def _delay_steps(delay, h):
    q = delay / h
    iq = int(round(q))
    if iq < 1 or abs(q - iq) > 1e-9 * max(1.0, q):
        raise StepSizeError(f"delay {delay} is not an integer multiple of h = {h}")
    return iq


def default_step(problem: NdeProblem) -> float:
    return problem.r / DEFAULT_STEPS_PER_DELAY


def _history_on_grid(phi: HistorySegment, r, h, m):
    if abs(phi.anchor) > 1e-14:
        raise ValueError("initial history must be anchored at t0 = 0")
    if phi.r < r * (1 - 1e-12):
        raise HistoryError("initial history shorter than the principal delay")
    theta = -r + h * np.arange(m + 1)
    if phi.values.shape[0] == m + 1 and abs(phi.r - r) < 1e-12 * r:
        return phi.values.copy()
    return phi(theta)


def step_solve(problem: NdeProblem, phi: HistorySegment, t_end: float, h=None) -> Trajectory:
    """Integrate forward from the history ``phi`` on ``[-r, 0]`` to ``t_end``.

    The neutral difference ``y = x - sum A_i x(t - r_i)`` is advanced with the
    classical four-stage Runge-Kutta scheme and ``x`` is recovered from the
    already computed past.  Off-node delayed values come from cubic
    interpolation that does not reach across multiples of ``r``.
    """
    r = problem.r
    if h is None:
        h = default_step(problem)
    h = float(h)
    if not h > 0 or h > r / 8 * (1 + 1e-12):
        raise StepSizeError(f"step {h} exceeds r/8 = {r / 8}")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    m = _delay_steps(r, h)
    n_steps = int(math.ceil(t_end / h - 1e-9))
    n = problem.dim
    X = np.empty((m + 1 + n_steps, n))
    X[: m + 1] = _history_on_grid(phi, r, h, m)

    atoms = [(i, _delay_steps(d, h)) for i, (_, d) in enumerate(problem.neutral.atoms)]
    rhs_lags = [_delay_steps(d, h) for d in problem.rhs.delays]
    time_dep = problem.neutral.time_dependent
    const_mats = [problem.neutral.matrix(i).T for i, _ in atoms] if not time_dep else None
    rhs_eval = problem.rhs.func

    def mats(t):
        if const_mats is not None:
            return const_mats
        return [problem.neutral.matrix(i, t).T for i, _ in atoms]

    def node(idx):
        return X[idx]

    def half(idx, top):
        # x at the midpoint between nodes idx and idx+1, stencil kept inside
        # the delay segment containing it and inside the computed range
        seg_start = (idx // m) * m
        seg_end = min(seg_start + m, top)
        if seg_end - seg_start < 3:
            seg_start = max(0, seg_end - 3)
        s = min(max(idx - 1, seg_start), seg_end - 3)
        return _HALF_WEIGHTS[idx - s] @ X[s:s + 4]

    for step in range(n_steps):
        i = m + step            # index of t_n
        t = step * h
        top = i
        A_n = mats(t)
        y = X[i].copy()
        for (ia, lag), A in zip(atoms, A_n):
            y -= X[i - lag] @ A
        k1 = rhs_eval(t, X[i], tuple(X[i - lag] for lag in rhs_lags))

        th = t + 0.5 * h
        A_h = mats(th) if time_dep else A_n
        neutral_h = 0.0
        for (ia, lag), A in zip(atoms, A_h):
            neutral_h = neutral_h + half(i - lag, top) @ A
        delayed_h = tuple(half(i - lag, top) for lag in rhs_lags)
        x2 = y + 0.5 * h * k1 + neutral_h
        k2 = rhs_eval(th, x2, delayed_h)
        x3 = y + 0.5 * h * k2 + neutral_h
        k3 = rhs_eval(th, x3, delayed_h)

        t1 = t + h
        A_1 = mats(t1) if time_dep else A_n
        neutral_1 = 0.0
        for (ia, lag), A in zip(atoms, A_1):
            neutral_1 = neutral_1 + X[i + 1 - lag] @ A
        delayed_1 = tuple(X[i + 1 - lag] for lag in rhs_lags)
        x4 = y + h * k3 + neutral_1
        k4 = rhs_eval(t1, x4, delayed_1)

        X[i + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + neutral_1
        if not np.all(np.isfinite(X[i + 1])) or np.max(np.abs(X[i + 1])) > BLOWUP:
            raise DivergenceError(f"solution blew up near t = {t1:.6g}", t1)

    t_grid = -r + h * np.arange(X.shape[0])
    return Trajectory(t_grid, X, h, r, anchor=0.0)


def step_solve_nonautonomous(problem: NdeProblem, phi: HistorySegment, t_end: float, h=None):
    """Same integrator for time-dependent atoms ``A_i(t)`` and ``F(t, x_t)``."""
    return step_solve(problem, phi, t_end, h)


def neutral_difference(problem: NdeProblem, traj: Trajectory, start_index: int):
    """``y(t_i) = x(t_i) - sum A_i(t_i) x(t_i - r_i)`` for nodes from ``start_index``."""
    h = traj.step
    X = traj.values
    idx = np.arange(start_index, X.shape[0])
    Y = X[idx].copy()
    for i, (_, delay) in enumerate(problem.neutral.atoms):
        lag = _delay_steps(delay, h)
        if problem.neutral.atoms[i][0] is not None and callable(problem.neutral.atoms[i][0]):
            for row, j in enumerate(idx):
                Y[row] -= problem.neutral.matrix(i, traj.t_grid[j]) @ X[j - lag]
        else:
            Y -= X[idx - lag] @ problem.neutral.matrix(i).T
    return idx, Y


def residual(problem: NdeProblem, traj: Trajectory, exclude_joints=None):
    """Largest defect of the grid function in the neutral equation.

    The derivative of the neutral difference is taken by centred differences
    at interior nodes and compared with the right-hand side.  Returns
    ``(sup, time_of_sup)``.  Nodes at the joints ``anchor + j*r`` are skipped
    when the trajectory carries an anchor, since the derivative of ``x`` jumps
    there.
    """
    h = traj.step
    lags = [_delay_steps(d, h) for d in problem.delays]
    longest = max(lags, default=0)
    if traj.values.shape[0] < longest + 3:
        raise ValueError("trajectory too short for a residual")
    idx, Y = neutral_difference(problem, traj, longest)
    if len(idx) < 3:
        raise ValueError("trajectory too short for a residual")
    centre = idx[1:-1]
    dY = (Y[2:] - Y[:-2]) / (2 * h)
    X = traj.values
    rhs_lags = [_delay_steps(d, h) for d in problem.rhs.delays]
    t = traj.t_grid[centre]
    rhs = problem.rhs.func(t[:, None], X[centre], tuple(X[centre - lag] for lag in rhs_lags))
    err = np.max(np.abs(dY - rhs), axis=1)
    if exclude_joints is None:
        exclude_joints = traj.anchor is not None
    if exclude_joints:
        rel = (t - traj.anchor) / traj.r
        joint = np.abs(rel - np.round(rel)) * traj.r < 0.5 * h
        for d in problem.delays:
            reld = (t - traj.anchor) / d
            joint |= (np.abs(reld - np.round(reld)) * d < 0.5 * h) & (reld > -0.5)
        err = np.where(joint, 0.0, err)
    k = int(np.argmax(err))
    return float(err[k]), float(t[k])


def residual_allowance(problem: NdeProblem, traj: Trajectory, floor=1e-9):
    """Size of the centred-difference defect expected from smoothness alone.

    The centred difference of the neutral difference ``y`` differs from
    ``y'`` by ``h^2 y''' / 6``; ``y''' = g''`` is estimated by second
    differences of the forcing ``g`` away from joints, with a factor-three
    safety margin.
    """
    h = traj.step
    X = traj.values
    lags = [_delay_steps(d, h) for d in problem.rhs.delays]
    L = max([_delay_steps(d, h) for d in problem.delays], default=0)
    t = traj.t_grid[L:]
    g = problem.rhs.func(t[:, None], X[L:], tuple(X[L - lag: X.shape[0] - lag] for lag in lags))
    g = np.broadcast_to(g, X[L:].shape)
    if g.shape[0] < 3:
        return floor
    d2 = np.max(np.abs(g[2:] - 2 * g[1:-1] + g[:-2]), axis=1)
    tc = t[1:-1]
    if traj.anchor is not None:
        near = np.zeros(len(tc), dtype=bool)
        for d in problem.delays:
            rel = (tc - traj.anchor) / d
            near |= (np.abs(rel - np.round(rel)) * d < 1.5 * h) & (rel > -0.5)
        d2 = np.where(near, 0.0, d2)
    return float(3.0 * np.max(d2) / 6.0) + floor
