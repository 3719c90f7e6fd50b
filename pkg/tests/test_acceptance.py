"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from ndeim.admissibility import (
    HypothesisParams,
    ceiling_value,
    check_hypotheses,
    critical_point,
    h2_bound,
    h_eval,
    root_interval,
)
from ndeim.cli import main
from ndeim.manifold import (
    delay_grid,
    manifold_xi_derivatives,
    operator_F,
    r_smoothness_probe,
    solve_manifold,
    solve_manifold_family,
    xi_stencil,
)
from ndeim.nde_core import HistorySegment, residual, step_solve
from ndeim.catalog import build_problem
from ndeim.tracking import horizon_stability, track
from ndeim.vdp import VdpSpec, delay_study

from conftest import record_criterion

# closed form of d/dt[x - 0.2 x(t - 0.1)] = -x, phi = 1 (sympy, per segment)
LINEAR_CLOSED_FORM = {
    0.05: 0.95122942450071400909, 0.1: 0.90483741803595957316,
    0.15: 0.85119568218005066714, 0.2: 0.80063400471726266721,
    0.25: 0.75112464640087674171, 0.3: 0.70463060837006194534,
    0.35: 0.66060949557643643200, 0.4: 0.61932340198169815389,
}


def interval_draws(seed=2024, count=100):
    """Random (M, M1, r) with M1 r below the maximum of H."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        M = float(rng.uniform(0.01, 0.95))
        M1 = float(rng.uniform(0.1, 10.0))
        hmax = float(h_eval(critical_point(M), M))
        r = float(rng.uniform(0.01, 0.99) * hmax / M1)
        out.append((M, M1, r))
    return out


# -- 1 ------------------------------------------------------------------------

def test_criterion_01_root_interval():
    draws = interval_draws()
    start = time.perf_counter()
    worst_level, worst_interior, order_ok = 0.0, math.inf, True
    for M, M1, r in draws:
        level = M1 * r
        x0 = critical_point(M)
        x1, x2 = root_interval(M, M1, r)
        order_ok &= x1 < x0 < x2 < -math.log(M)
        worst_level = max(worst_level, abs(h_eval(x1, M) - level), abs(h_eval(x2, M) - level))
        inner = np.linspace(x1, x2, 102)[1:-1]
        worst_interior = min(worst_interior, float(np.min(h_eval(inner, M) - level)))
    elapsed = time.perf_counter() - start
    ok = order_ok and worst_level <= 1e-12 and worst_interior > 0 and elapsed < 1.0
    record_criterion(1, ok, f"draws={len(draws)} max|H(x_i)-M1 r|={worst_level:.2e} "
                     f"min interior gap={worst_interior:.2e} time={elapsed:.3f}s")
    assert ok


# -- 2 ------------------------------------------------------------------------

def test_criterion_02_feasibility_matches_interval_test():
    rng = np.random.default_rng(7)
    kappa_disagree = feas_disagree = 0
    feasible = 0
    for M, M1, r in interval_draws():
        ceil = ceiling_value(M, 1, "H1")
        x_star = float(rng.uniform(0.02, 1.1) * ceil)
        p = HypothesisParams(M=M, M0=0.0, Mj=[M1, 1.0], k=1, r0=r, d=1.0)
        rep = check_hypotheses(p, x_star=x_star, run_delay=r)
        level = M1 * r
        above = h_eval(x_star, M) > level
        kappa_disagree += (rep.kappa < 1) != above
        # independent interval test: roots by Brent's method, then x1 < x* < ceiling <= x2
        x0 = float(brentq(lambda x: (1 - x) * math.exp(-x) - M, 0.0, 1.0, xtol=1e-15))
        g = lambda x: x * math.exp(-x) - M * x - level
        x1 = float(brentq(g, 0.0, x0, xtol=1e-15))
        x2 = float(brentq(g, x0, -math.log(M), xtol=1e-15))
        direct = x1 < x_star < ceil and ceil < x2 and M * math.exp(2 * x_star) < 1
        feas_disagree += rep.feasible != direct
        feasible += direct
    ok = kappa_disagree == 0 and feas_disagree == 0
    record_criterion(2, ok, f"draws=100 feasible={feasible} kappa/H disagreements="
                     f"{kappa_disagree} feasibility disagreements={feas_disagree}")
    assert ok


# -- 3 ------------------------------------------------------------------------

def test_criterion_03_fdb_check(tmp_path):
    cfg = tmp_path / "fdb.json"
    cfg.write_text(json.dumps({"schema_version": 1}))
    start = time.perf_counter()
    code = main(["fdb-check", "--config", str(cfg), "--out", str(tmp_path / "out")])
    elapsed = time.perf_counter() - start
    res = json.loads((tmp_path / "out" / "fdb_check.json").read_text())
    shapes = sorted(res["per_shape"])
    ok = (code == 0 and res["max_rel_error"] <= 1e-5 and elapsed < 10.0
          and shapes == [f"{n}x{m}" for n in (1, 2, 3) for m in (1, 2, 3)]
          and res["cases"] == 90)
    record_criterion(3, ok, f"cases={res['cases']} max rel error={res['max_rel_error']:.2e} "
                     f"time={elapsed:.2f}s")
    assert ok


# -- 4 ------------------------------------------------------------------------

def beta_inequalities(p, rep):
    """Self-map inequalities at k = 1, written out by hand."""
    x, d, M, M0 = rep.x_star, p.d, p.M, p.M0
    M1, M2 = p.Mj
    b0, b1, b2 = rep.beta
    lam = x / rep.delta_beta
    kappa = (M * x * math.exp(x) + M1 * p.r0 * math.exp(x)) / x
    A2 = math.exp(2 * x) * (M2 * b1**2 + M1 * b2) / 2
    return [
        ("beta0", d + M0 / lam + kappa * b0, b0),
        ("beta1", 1 + kappa * b1, b1),
        ("beta2", M * b2 * math.exp(2 * x) + A2 * rep.delta_beta / x, b2),
    ]


def eps_inequalities(p, rep):
    x, d, M, M0, n = rep.x_star, p.d, p.M, p.M0, p.n
    M1, M2 = p.Mj
    e0, e1, e2 = rep.eps
    delta = rep.delta_eps
    ex = math.exp(x)
    T10 = M1 * e1 * (1 + ex)
    T01 = M1 * e1 * (1 + 2 * ex)
    T0k1 = 8 * n * math.exp(2 * x) * (M2 * e1**2 + M1 * e2)
    kappa_d = (M * x * ex + M1 * delta * ex) / x
    return [
        ("positivity_first", 0.0, 1 - 3 * M * ex),
        ("positivity_last", 0.0, 1 - 6 * M * math.exp(2 * x)),
        ("eps0", d + e0 * kappa_d + M0 * delta / (math.e * x), e0),
        ("eps1", M * ex * e1 + M1 * ex * e0 + M0 + 2 * M * ex * e1 + T01 * delta / x, e1),
        ("eps2", 4 * M * math.exp(2 * x) * e2 + T0k1 * delta / (2 * x) + T01
         + 2 * M * math.exp(2 * x) * e2 + T10 + T01, e2),
    ]


def random_k1_params(rng, hypothesis):
    bound = 1.0 if hypothesis == "H1" else h2_bound(1)
    M = float(rng.uniform(0.02, 0.6) * bound)
    Mj = [float(v) for v in rng.uniform(0.5, 3.0, 2)]
    ceil = ceiling_value(M, 1, hypothesis)
    r0 = float(rng.uniform(0.05, 0.7) * h_eval(ceil, M) / Mj[0])
    return HypothesisParams(M=M, M0=float(rng.uniform(0, 0.5)), Mj=Mj, k=1, r0=r0,
                            d=float(rng.uniform(0.5, 3.0)) + (1.0 if hypothesis == "H2" else 0),
                            hypothesis=hypothesis, n=int(rng.integers(1, 4)))


def test_criterion_04_schedule_certificates():
    rng = np.random.default_rng(404)
    failures, worst_slack, min_delta = [], math.inf, math.inf
    for i in range(20):
        hyp = "H1" if i < 10 else "H2"
        p = random_k1_params(rng, hyp)
        rep = check_hypotheses(p)
        if not rep.feasible:
            failures.append((i, "infeasible", rep.reasons))
            continue
        checks = beta_inequalities(p, rep)
        if hyp == "H2":
            checks += eps_inequalities(p, rep)
        for name, lhs, rhs in checks:
            strict = name.startswith("positivity")
            good = lhs < rhs if strict else lhs <= rhs * (1 + 1e-12)
            if not good:
                failures.append((i, name, lhs, rhs))
            if not strict:
                worst_slack = min(worst_slack, (rhs - lhs) / rhs)
        min_delta = min(min_delta, rep.delta)
    ok = not failures and min_delta > 0
    record_criterion(4, ok, f"sets=20 failures={len(failures)} min relative slack="
                     f"{worst_slack:.1e} min delta={min_delta:.3g}")
    assert ok, failures


# -- 5 ------------------------------------------------------------------------

def test_criterion_05_solver_convergence():
    start = time.perf_counter()
    p = build_problem({"rhs": "linear_scalar", "r": 0.1, "params": {"a": -1.0},
                       "neutral": [{"matrix": 0.2}]})
    phi = HistorySegment.constant([1.0], 0.1)
    tr = step_solve(p, phi, 0.4, h=0.1 / 32)
    err = max(abs(tr.values[tr.index_of(t), 0] - v) for t, v in LINEAR_CLOSED_FORM.items())
    res = [residual(p, step_solve(p, phi, 0.4, h=0.1 / m))[0] for m in (32, 64, 128, 256)]
    gains = [res[i] / res[i + 1] for i in range(3)]
    elapsed = time.perf_counter() - start
    ok = err <= 1e-8 and all(3.5 <= g <= 4.5 for g in gains) and elapsed < 5.0
    record_criterion(5, ok, f"closed-form error={err:.2e} residual gains="
                     f"{', '.join(f'{g:.3f}' for g in gains)} time={elapsed:.2f}s")
    assert ok


# -- 6 ------------------------------------------------------------------------

def test_criterion_06_manifold_contraction(vdp_h1):
    rep, problem = vdp_h1
    tol = 1e-12
    xi = np.random.default_rng(6).uniform(-0.8, 0.8, (20, 2))
    start = time.perf_counter()
    chart, diag = solve_manifold(problem, rep, xi, tol=tol)
    elapsed = time.perf_counter() - start
    late = [q for q in diag.ratios[2:] if q is not None]
    ok = (diag.converged and all(q <= rep.kappa * 1.05 for q in late)
          and diag.boundary_defect <= 10 * tol and diag.residual <= diag.residual_allowance
          and elapsed < 120)
    record_criterion(6, ok, f"xi={len(xi)} iterates={diag.iterates} max late ratio="
                     f"{max(late, default=float('nan')):.3f} kappa={rep.kappa:.4f} "
                     f"boundary={diag.boundary_defect:.1e} residual={diag.residual:.1e} "
                     f"allowance={diag.residual_allowance:.1e} time={elapsed:.2f}s")
    assert ok


# -- 7 ------------------------------------------------------------------------

def test_criterion_07_phase_smoothness(vdp_h1):
    rep, problem = vdp_h1
    base = np.random.default_rng(7).uniform(-0.6, 0.6, (11, 2))
    step = 1e-2
    stencil, index = xi_stencil(base, step)
    chart, _ = solve_manifold(problem, rep, stencil, tol=1e-13)
    chk = manifold_xi_derivatives(chart, base, step, index, rep)
    m = chk.margins
    ok = chk.ok and min(m["d1"], m["d2"], m["lipschitz"]) >= 0.05 and chk.pairs >= 50
    record_criterion(7, ok, f"|D1|w={chk.d1_weighted:.3f} (beta1={chk.beta1:.3f}, margin "
                     f"{m['d1']:.2f}) |D2|w={chk.d2_weighted:.3g} (beta2={chk.beta2:.3f}, "
                     f"margin {m['d2']:.3g}) Lipschitz margin {m['lipschitz']:.3g} "
                     f"pairs={chk.pairs}")
    assert ok


# -- 8 ------------------------------------------------------------------------

def test_criterion_08_delay_smoothness(vdp_h2):
    rep, problem = vdp_h2
    tol = 1e-13
    r_set, h = delay_grid(rep.delta)
    xi = np.random.default_rng(8).uniform(-0.8, 0.8, (6, 2))
    fam = solve_manifold_family(problem, rep, r_set, xi, h, tol=tol)
    probe = r_smoothness_probe(fam, rep)
    mid = len(r_set) // 2
    single, _ = solve_manifold(problem.with_delay(r_set[mid]), rep, xi,
                               window=fam.charts[mid].window, tol=tol, h=h)
    t_gap = fam.charts[mid].weighted_norm(single.window_values - fam.charts[mid].window_values)
    again = operator_F(fam, problem, rep)
    f_gap = max(b.weighted_norm(a.window_values - b.window_values)
                for a, b in zip(again.charts, fam.charts))
    ok = (len(r_set) == 5 and probe.d1_weighted <= probe.eps1 and probe.identity_rel <= 1e-3
          and t_gap <= 10 * tol and f_gap <= 10 * tol)
    record_criterion(8, ok, f"r-grid={len(r_set)} |D(t,r)|w={probe.d1_weighted:.3f} "
                     f"(eps1={probe.eps1:.3f}) identity rel={probe.identity_rel:.1e} "
                     f"F vs T={t_gap:.1e} F-residual={f_gap:.1e}")
    assert ok


# -- 9 ------------------------------------------------------------------------

def random_history(seed, r, h):
    rng = np.random.default_rng(seed)
    base = rng.uniform(-1, 1, 2)
    wave = rng.uniform(-0.5, 0.5, 2)
    freq = rng.uniform(1, 3)
    theta = np.linspace(-r, 0, int(round(r / h)) + 1)
    return HistorySegment(base + wave * np.sin(2 * np.pi * freq * theta[:, None] / r), r)


def test_criterion_09_tracking(vdp_h1):
    rep, problem = vdp_h1
    start = time.perf_counter()
    changes, rates, bad = [], [], []
    for s in range(10):
        phi = random_history(100 + s, problem.r, problem.r / 32)
        base, _, change = horizon_stability(phi, problem, rep)
        changes.append(change)
        if base.lambda_hat is not None:
            rates.append(base.lambda_hat)
        if not (math.isfinite(base.sup_weighted) and change <= 0.05):
            bad.append(s)
    tol = 1e-11
    xi = np.array([[0.3, -0.2]])
    chart, _ = solve_manifold(problem, rep, xi, tol=1e-12)
    res = track(chart.history(0), problem, rep, chart=chart, tol=tol)
    trip = float(np.max(np.abs(res.xi - xi[0])))
    elapsed = time.perf_counter() - start
    rate_ok = all(q >= 0.8 * rep.lambda_ for q in rates)
    ok = not bad and trip <= 10 * tol and rate_ok and elapsed < 120
    record_criterion(9, ok, f"phi=10 max horizon change={max(changes):.1e} lambda_hat in "
                     f"[{min(rates, default=float('nan')):.0f}, "
                     f"{max(rates, default=float('nan')):.0f}] vs lambda={rep.lambda_:.0f} "
                     f"round trip={trip:.1e} time={elapsed:.1f}s")
    assert ok


# -- 10 -----------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_delay_study():
    start = time.perf_counter()
    out = delay_study(VdpSpec(), workers=1)
    elapsed = time.perf_counter() - start
    ratios = out["ratios"]
    closure = out["orbits"][-1]["closure"]
    ok = (out["status"] == "ok" and len(ratios) == 2
          and all(q is not None and 1.5 <= q <= 3.0 for q in ratios)
          and closure is not None and closure <= 1e-3 and elapsed < 180)
    record_criterion(10, ok, f"ratios={', '.join(f'{q:.3f}' for q in ratios if q)} "
                     f"closure={closure:.1e} time={elapsed:.1f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
