"""Neutral van der Pol study: derivative bounds, periodic orbits, r -> 0 limit.

The system is

    d/dt [x1(t) - c x1(t - r)] = x2(t) - (x1(t)^2/2 + x1(t)^3/3)
    d/dt x2(t)                 = eps (b - x1(t - r))

and its ``r = 0`` reduction is the slow-fast system
``(1 - c) x1' = x2 - (x1^2/2 + x1^3/3)``, ``x2' = eps (b - x1)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .admissibility import (HypothesisParams, ceiling_value, check_hypotheses, h2_bound,
                            h_eval)
from .catalog import vdp_field, vdp_problem
from .multiindex import multilinear_norm
from .nde_core.problem import HistorySegment, NdeProblem, NeutralPart, RhsField
from .nde_core.solver import step_solve


@dataclass
class VdpSpec:
    b: float = -0.5
    c: float = 0.1
    eps: float = 0.05
    r: float = 0.001
    kappa_cutoff: float = 2.0

    def validate(self):
        if not 0 < self.c < 1:
            raise ValueError("c must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.r < self.eps:
            raise ValueError("the delay must satisfy 0 < r < eps")
        if not self.kappa_cutoff > 0:
            raise ValueError("cut-off radius must be positive")
        return self

    @property
    def eps_tilde(self):
        return 1.0 / math.sqrt(self.eps)

    def to_dict(self):
        return asdict(self)


def covers_working_box(kappa_cutoff) -> bool:
    """The cut-off is inactive on ``[-2, 1] x [-1/2, 1/2]``."""
    return kappa_cutoff >= 2.0


# ---------------------------------------------------------------------------
# derivative bounds of the modified field


def _norm_at(rhs: RhsField, points, order):
    points = np.atleast_2d(points)
    n = rhs.dim
    table = rhs.partials_table(points[:, :n], points[:, n:], order)
    parts = {nu: v for nu, v in table.items() if sum(nu) == order}
    return multilinear_norm(parts, 2 * n, order)


def measure_derivative_bounds(rhs: RhsField, radius, orders=(1, 2), points=9, refine=6,
                              inflation=1.1):
    """Largest operator norm of ``D^j f`` over the box ``|w|_inf <= radius``.

    A tensor grid with ``points`` nodes per stacked coordinate is scanned,
    then the best ``refine`` nodes seed Nelder-Mead searches clipped to the
    box.  Returns ``(measured, inflated)`` lists indexed like ``orders``.
    """
    m = 2 * rhs.dim
    axis = np.linspace(-radius, radius, points)
    grid = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    measured = []
    for j in orders:
        vals = _norm_at(rhs, grid, j)
        best = float(np.max(vals))
        seeds = grid[np.argsort(vals)[::-1][:refine]]
        for seed in seeds:
            def neg(w, j=j):
                w = np.clip(w, -radius, radius)
                return -float(_norm_at(rhs, w[None, :], j)[0])
            res = minimize(neg, seed, method="Nelder-Mead",
                           options={"xatol": 1e-6 * radius, "fatol": 1e-10, "maxiter": 4000})
            best = max(best, -res.fun)
        measured.append(best)
    return measured, [inflation * v for v in measured]


def attainable_orders(M, measured_orders):
    """Largest smoothness order available under each hypothesis.

    Under H1 the bound ``M_{k+1}`` must be measured; H2 adds
    ``M < 1 / (2 3^k)``.
    """
    k_h1 = max(measured_orders) - 1
    k_h2 = 0
    for k in range(1, k_h1 + 1):
        if M < h2_bound(k):
            k_h2 = k
    return {"H1": k_h1, "H2": k_h2}


def default_r0(M, M1, k, hypothesis):
    """Half of the largest admissible ``r0``: ``H(ceiling) / (2 M_1)``."""
    return 0.5 * h_eval(ceiling_value(M, k, hypothesis), M) / M1


def vdp_admissibility(spec: VdpSpec, bounds=None, hypothesis="H1", k=1, d=1.0, run_delay=None,
                      r0=None, points=9):
    """Admissibility of the cut-off system with measured constants.

    ``bounds`` are the inflated ``M_1 .. M_{k+1}``; they are measured when
    omitted.  ``M0`` is the size of ``f(0, 0)``.
    """
    problem = vdp_problem(spec.b, spec.c, spec.eps, spec.r, spec.kappa_cutoff)
    if bounds is None:
        _, bounds = measure_derivative_bounds(problem.rhs, 2 * spec.kappa_cutoff,
                                              orders=tuple(range(1, k + 2)), points=points)
    M = spec.c
    M0 = float(np.max(np.abs(problem.rhs.f(np.zeros(2), np.zeros(2)))))
    r0 = default_r0(M, bounds[0], k, hypothesis) if r0 is None else r0
    params = HypothesisParams(M=M, M0=M0, Mj=tuple(bounds[: k + 1]), k=k, r0=r0, d=d,
                              hypothesis=hypothesis, n=2)
    return check_hypotheses(params, run_delay=run_delay), problem


# ---------------------------------------------------------------------------
# periodic orbit study


def vdp_direct_problem(spec: VdpSpec, r=None) -> NdeProblem:
    """The uncut system with a closed-form right-hand side (fast to evaluate)."""
    r = spec.r if r is None else r
    b, eps = spec.b, spec.eps

    def f(y, z):
        if y.ndim == 1 and z.ndim == 1:
            a = float(y[0])
            return np.array([float(y[1]) - (0.5 * a * a + a * a * a / 3.0),
                             eps * (b - float(z[0]))])
        y1 = y[..., 0]
        out = np.empty(np.broadcast_shapes(y.shape, z.shape))
        out[..., 0] = y[..., 1] - (0.5 * y1**2 + y1**3 / 3.0)
        out[..., 1] = eps * (b - z[..., 0])
        return out

    field = vdp_field(b, eps)
    rhs = RhsField.autonomous(f, 2, r, partials=field.partial, name="vdp_direct")
    A = np.array([[spec.c, 0.0], [0.0, 0.0]])
    return NdeProblem(NeutralPart.single(A, r), rhs, r, name="vdp")


def ode_reference(spec: VdpSpec, state0, t_end, rtol=1e-12, atol=1e-12):
    """Dense solution of the ``r = 0`` reduction."""
    b, c, eps = spec.b, spec.c, spec.eps

    def rhs(t, x):
        return [(x[1] - (0.5 * x[0]**2 + x[0]**3 / 3.0)) / (1.0 - c), eps * (b - x[0])]

    return solve_ivp(rhs, (0.0, t_end), np.asarray(state0, dtype=float), method="DOP853",
                     rtol=rtol, atol=atol, dense_output=True)


def section_crossings(t, values, level, component=0, direction=1):
    """Times and states where ``values[:, component]`` crosses ``level``.

    Sign changes in the requested direction are refined by the root of the
    cubic through the four surrounding nodes.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    s = values[:, component] - level
    idx = np.nonzero((s[:-1] * direction < 0) & (s[1:] * direction >= 0))[0]
    times, states = [], []
    for i in idx:
        lo = max(0, min(i - 1, len(t) - 4))
        tt = t[lo:lo + 4]
        centre = tt[1]
        scale = tt[-1] - tt[0]
        u = (tt - centre) / scale
        coef = np.polyfit(u, s[lo:lo + 4], 3)
        roots = np.roots(coef)
        a, bnd = (t[i] - centre) / scale, (t[i + 1] - centre) / scale
        real = [z.real for z in roots if abs(z.imag) < 1e-9 and a - 1e-12 <= z.real <= bnd + 1e-12]
        if real:
            uc = real[0]
        else:
            uc = a + (bnd - a) * s[i] / (s[i] - s[i + 1])
        tc = centre + uc * scale
        st = np.array([np.polyval(np.polyfit(u, values[lo:lo + 4, j], 3), uc)
                       for j in range(values.shape[1])])
        times.append(tc)
        states.append(st)
    return np.array(times), np.array(states).reshape(-1, values.shape[1])


@dataclass
class OrbitSummary:
    r: float
    period: float | None
    amplitude: float | None
    closure: float | None
    crossing_times: list
    status: str

    def to_dict(self):
        return asdict(self)


def summarize_orbit(r, t, values, level):
    times, states = section_crossings(t, values, level)
    if len(times) < 3:
        return OrbitSummary(r, None, None, None, [float(v) for v in times], "inconclusive")
    period = float(times[-1] - times[-2])
    mask = (t >= times[-2]) & (t <= times[-1])
    amplitude = float(np.max(values[mask, 0]) - np.min(values[mask, 0]))
    closure = float(np.max(np.abs(states[-1] - states[-2])))
    return OrbitSummary(r, period, amplitude, closure, [float(v) for v in times], "periodic")


def _nde_run(args):
    spec, r, state0, t_end, steps_per_delay = args
    problem = vdp_direct_problem(spec, r)
    phi = HistorySegment.constant(state0, r, nodes=steps_per_delay + 1)
    traj = step_solve(problem, phi, t_end, h=r / steps_per_delay)
    keep = traj.t_grid >= 0
    return traj.t_grid[keep], traj.values[keep]


def _aligned_difference(t_a, x_a, times_a, interp_b, times_b, samples=4001):
    """Sup difference over the last full return, in normalised phase."""
    a0, a1 = times_a[-2], times_a[-1]
    b0, b1 = times_b[-2], times_b[-1]
    s = np.linspace(0.0, 1.0, samples)
    xa = np.stack([np.interp(a0 + s * (a1 - a0), t_a, x_a[:, j]) for j in range(x_a.shape[1])],
                  axis=-1)
    xb = interp_b(b0 + s * (b1 - b0))
    return float(np.max(np.abs(xa - xb)))


def delay_study(spec: VdpSpec, r_values=(0.004, 0.002, 0.001), state0=(0.5, 0.1), t_end=None,
                steps_per_delay=8, workers=1):
    """Orbits of the neutral system for each delay against the ``r = 0`` reference.

    Returns a dict with per-delay orbit summaries, the phase-aligned sup
    differences to the reference orbit and their successive ratios.
    """
    level = spec.b
    # the relaxation period is close to 1.45 / eps; three returns need ~5 / eps
    t_end = 5.0 / spec.eps if t_end is None else t_end
    ode = ode_reference(spec, state0, t_end)
    t_ode = np.linspace(0.0, t_end, int(t_end / 1e-3) + 1)
    x_ode = ode.sol(t_ode).T
    ode_summary = summarize_orbit(0.0, t_ode, x_ode, level)
    ode_times, _ = section_crossings(t_ode, x_ode, level)
    jobs = [(spec, float(r), state0, t_end, steps_per_delay) for r in r_values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_nde_run, jobs))
    else:
        runs = [_nde_run(job) for job in jobs]
    summaries, diffs = [], []
    for r, (t, x) in zip(r_values, runs):
        summ = summarize_orbit(float(r), t, x, level)
        summaries.append(summ)
        if summ.status != "periodic" or ode_summary.status != "periodic":
            diffs.append(None)
            continue
        times, _ = section_crossings(t, x, level)
        diffs.append(_aligned_difference(t, x, times, lambda s: ode.sol(s).T, ode_times))
    ratios = [diffs[i] / diffs[i + 1] if diffs[i] and diffs[i + 1] else None
              for i in range(len(diffs) - 1)]
    status = "ok" if all(s.status == "periodic" for s in summaries) else "inconclusive"
    return {
        "spec": spec.to_dict(),
        "state0": list(state0),
        "t_end": t_end,
        "reference": ode_summary.to_dict(),
        "orbits": [s.to_dict() for s in summaries],
        "sup_differences": diffs,
        "ratios": ratios,
        "status": status,
    }
