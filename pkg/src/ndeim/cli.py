"""Command-line front end: ``nde <command> --config <path> [--out <dir>]``.

Exit codes: 0 success, 1 a certificate failed, 2 hypotheses infeasible,
3 non-contraction diagnostic, 64 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .admissibility import HypothesisParams, REASON_MESSAGES, check_hypotheses
from .catalog import build_problem
from .fdb_check import run_suite
from .manifold import (NonContractionError, StencilError, manifold_xi_derivatives,
                       solve_manifold, xi_stencil)
from .nde_core.io import trajectory_to_csv
from .nde_core.problem import HistorySegment
from .nde_core.solver import (DivergenceError, StepSizeError, residual,
                               residual_allowance, step_solve)
from .tracking import ChartMismatchError, HorizonTooShortError, track
from .vdp import (VdpSpec, attainable_orders, delay_study, measure_derivative_bounds,
                  vdp_admissibility)

EXIT_OK = 0
EXIT_CERTIFICATE = 1
EXIT_INFEASIBLE = 2
EXIT_NONCONTRACTION = 3
EXIT_CONFIG = 64


class Infeasible(Exception):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def certificate(name, invariant, value, tolerance, ok=None):
    if ok is None:
        ok = value is not None and value <= tolerance
    return {"name": name, "invariant": invariant, "value": _clean(value),
            "tolerance": _clean(tolerance), "ok": bool(ok)}


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    return v


class Output:
    """Collects artifacts and writes them with a manifest of content hashes."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.files = {}

    def json(self, name, data):
        self.text(name, json.dumps(_clean(data), indent=2, sort_keys=True, ensure_ascii=False)
                  + "\n")

    def text(self, name, text):
        self.files[name] = text.encode("utf-8")

    def write(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        manifest = []
        for name in sorted(self.files):
            data = self.files[name]
            (self.dir / name).write_bytes(data)
            manifest.append({"name": name, "bytes": len(data),
                             "sha256": hashlib.sha256(data).hexdigest()})
        body = json.dumps({"artifacts": manifest}, indent=2, sort_keys=True) + "\n"
        (self.dir / "MANIFEST.json").write_text(body)


# ---------------------------------------------------------------------------
# helpers


def _params(cfg, n):
    hyp = cfg.get("hypothesis")
    if hyp is None:
        raise config_mod.ConfigError("this command needs a hypothesis block", "$.hypothesis")
    return HypothesisParams(M=hyp["M"], M0=hyp.get("M0", 0.0), Mj=list(hyp["Mj"]), k=hyp["k"],
                            r0=hyp["r0"], d=hyp.get("d", 1.0), hypothesis=hyp["name"], n=n)


def _report(cfg, n, run_delay=None):
    params = _params(cfg, n)
    rep = check_hypotheses(params, x_star=cfg["hypothesis"].get("x_star", "auto"),
                           run_delay=run_delay)
    if not rep.feasible:
        msgs = "; ".join(REASON_MESSAGES.get(c, c) for c in rep.reasons)
        raise Infeasible(f"hypotheses infeasible: {msgs}", rep)
    return rep


def _problem(cfg):
    if "problem" not in cfg:
        raise config_mod.ConfigError("this command needs a problem block", "$.problem")
    try:
        return build_problem(cfg["problem"])
    except (KeyError, ValueError, TypeError) as exc:
        raise config_mod.ConfigError(str(exc), "$.problem") from None


def _step(cfg, problem):
    grid = cfg.get("grid", {})
    if "h" in grid:
        return grid["h"]
    return problem.r / grid.get("steps_per_delay", 32)


def _history(spec, problem, h, cfg, report=None):
    r = problem.r
    nodes = int(round(r / h)) + 1
    kind = spec["kind"]
    n = problem.dim
    if kind == "constant":
        value = np.asarray(spec.get("value", [0.0] * n), dtype=float)
        if value.shape != (n,):
            raise config_mod.ConfigError("history value has the wrong dimension",
                                         "$.history.value")
        return HistorySegment.constant(value, r, nodes=nodes), None
    if kind == "samples":
        return HistorySegment(np.asarray(spec["samples"], dtype=float), r), None
    if kind == "random":
        rng = np.random.default_rng(spec.get("seed", cfg.get("seed", 0)))
        amp = spec.get("amplitude", 1.0)
        base = rng.uniform(-amp, amp, n)
        wave = rng.uniform(-0.5 * amp, 0.5 * amp, n)
        freq = rng.uniform(1.0, 3.0)
        theta = np.linspace(-r, 0.0, nodes)
        vals = base + wave * np.sin(2 * np.pi * freq * theta[:, None] / r)
        return HistorySegment(vals, r), None
    if kind == "chart":
        if report is None:
            raise config_mod.ConfigError("a chart history needs hypotheses", "$.hypothesis")
        xi = np.asarray(spec["xi"], dtype=float)[None, :]
        grid = cfg.get("grid", {})
        chart, _ = solve_manifold(problem, report, xi, tol=grid.get("tol", 1e-12), h=h)
        return chart.history(0), chart
    raise config_mod.ConfigError(f"unknown history kind {kind}", "$.history.kind")


def _table(rows):
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ---------------------------------------------------------------------------
# commands


def cmd_admissible(cfg, out: Output):
    n = _problem(cfg).dim if "problem" in cfg else 1
    params = _params(cfg, n)
    rep = check_hypotheses(params, x_star=cfg["hypothesis"].get("x_star", "auto"))
    out.json("admissibility.json", rep.to_dict())
    rows = [("hypothesis", rep.hypothesis), ("feasible", rep.feasible),
            ("x0", rep.x0), ("x1", rep.x1), ("x2", rep.x2), ("ceiling", rep.ceiling),
            ("x*", rep.x_star), ("kappa", rep.kappa), ("lambda", rep.lambda_),
            ("delta", rep.delta), ("beta", rep.beta), ("eps", rep.eps),
            ("reasons", ", ".join(REASON_MESSAGES.get(c, c) for c in rep.reasons) or "-")]
    print(_table([(k, _fmt(v)) for k, v in rows]))
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_simulate(cfg, out: Output):
    problem = _problem(cfg)
    h = _step(cfg, problem)
    sim = cfg.get("simulate")
    if sim is None:
        raise config_mod.ConfigError("simulate needs a simulate block", "$.simulate")
    phi, _ = _history(sim.get("history", {"kind": "constant"}), problem, h, cfg)
    traj = step_solve(problem, phi, sim["t_end"], h)
    res, t_res = residual(problem, traj)
    allowance = residual_allowance(problem, traj)
    out.text("trajectory.csv", trajectory_to_csv(traj))
    certs = [certificate("residual", "centred-difference defect of the neutral equation "
                         "away from joints, against h^2 |g''| / 2", res, allowance)]
    summary = {"residual": res, "residual_time": t_res, "h": h, "t_end": float(traj.t_grid[-1]),
               "nodes": len(traj.t_grid), "certificates": certs}
    out.json("simulate.json", summary)
    print(_table([("nodes", str(len(traj.t_grid)))]
                 + [(c["name"], f"{'ok' if c['ok'] else 'FAIL'}  {_fmt(c['value'])}")
                    for c in certs]))
    return EXIT_OK if all(c["ok"] for c in certs) else EXIT_CERTIFICATE


def _closed_form(problem_cfg, chart):
    """Exact chart for catalog entries that have one, else None."""
    params = problem_cfg.get("params", {})
    if problem_cfg.get("neutral") or problem_cfg.get("kappa_cutoff") is not None:
        return None
    t = chart.t_window[:, None, None]
    xi = chart.xi_set[None, :, :]
    rhs = problem_cfg["rhs"]
    if rhs == "affine":
        A = np.atleast_2d(np.asarray(params["A"], dtype=float))
        B = np.atleast_2d(np.asarray(params["B"], dtype=float))
        if np.any(A) or np.any(B):
            return None
        c = np.atleast_1d(np.asarray(params["c"], dtype=float))
        return xi + c[None, None, :] * t
    if rhs == "linear_scalar" and params.get("b", 0.0) == 0.0:
        return xi * np.exp(params["a"] * t)
    return None


def cmd_manifold(cfg, out: Output):
    problem = _problem(cfg)
    rep = _report(cfg, problem.dim, run_delay=problem.r)
    h = _step(cfg, problem)
    grid = cfg.get("grid", {})
    tol = grid.get("tol", 1e-12)
    window = (-grid["window"], grid["window"]) if "window" in grid else None
    man = cfg.get("manifold")
    if man is None:
        raise config_mod.ConfigError("manifold needs a manifold block", "$.manifold")
    xi = np.asarray(man["xi"], dtype=float)
    if xi.shape[1] != problem.dim:
        raise config_mod.ConfigError("xi has the wrong dimension", "$.manifold.xi")
    chart, diag = solve_manifold(problem, rep, xi, window=window, tol=tol, h=h,
                                 gamma=man.get("gamma", 0))
    certs = [
        certificate("contraction", "gap ratios after two iterations <= kappa (1 + 0.05)",
                    diag.empirical_rate, None, ok=diag.contraction_ok()),
        certificate("boundary_identity", "|Psi(0,xi) - L(0) Psi_0 - xi|",
                    diag.boundary_defect, 10 * tol),
        certificate("fixed_point_residual", "equation residual of each chart slice",
                    diag.residual, diag.residual_allowance),
        certificate("self_map", "weighted norm of every iterate <= beta_0",
                    max(diag.weighted_norms), diag.beta0, ok=diag.self_map_ok),
    ]
    closed = _closed_form(cfg["problem"], chart)
    if closed is not None:
        err = float(np.max(np.abs(chart.window_values - closed)))
        certs.append(certificate("closed_form", "max |Psi - exact chart| on the window",
                                 err, 1e-6))
    deriv = man.get("derivatives")
    if deriv is not None:
        base = np.asarray(deriv["base_points"], dtype=float)
        step = deriv.get("step", 1e-2)
        stencil, index = xi_stencil(base, step)
        dchart, _ = solve_manifold(problem, rep, stencil, window=window, tol=min(tol, 1e-13),
                                   h=h)
        chk = manifold_xi_derivatives(dchart, base, step, index, rep)
        certs.append(certificate("xi_derivative_bounds", "|D^j Psi| e^{-j lambda |t|} <= beta_j "
                                 "and the order-1 Lipschitz ratio <= beta_2",
                                 min(chk.margins.values()) if chk.margins else None, 0.0,
                                 ok=chk.ok))
    out.text("chart.csv", chart.to_csv())
    body = diag.to_dict()
    body["certificates"] = certs
    body["lambda"] = rep.lambda_
    body["window"] = list(chart.window)
    out.json("manifold.json", body)
    out.json("admissibility.json", rep.to_dict())
    print(_table([(c["name"], f"{'ok' if c['ok'] else 'FAIL'}  {_fmt(c['value'])}")
                  for c in certs]))
    return EXIT_OK if all(c["ok"] for c in certs) else EXIT_CERTIFICATE


def cmd_track(cfg, out: Output):
    problem = _problem(cfg)
    rep = _report(cfg, problem.dim, run_delay=problem.r)
    h = _step(cfg, problem)
    spec = cfg.get("track")
    if spec is None:
        raise config_mod.ConfigError("track needs a track block", "$.track")
    tol = spec.get("tol", 1e-10)
    phi, chart = _history(spec["history"], problem, h, cfg, rep)
    result = track(phi, problem, rep, chart=chart, tol=tol, h=h,
                   t_back=spec.get("t_back"), t_forward=spec.get("t_forward"))
    certs = [
        certificate("q_contraction", "gap ratios after two iterations <= kappa (1 + 0.05)",
                    max([q for q in result.ratios[2:] if q is not None], default=None), None,
                    ok=result.contraction_ok()),
        certificate("phase_consistency", "integral phase vs y(0) - L(0) y_0",
                    result.phase_gap, 10 * tol),
        certificate("orbit_residual", "equation residual of the tracking orbit",
                    result.residual, result.residual_allowance),
        certificate("tail_bound", "truncated tail of the improper integral",
                    result.tail_bound, 1e-3 * max(1.0, float(np.max(np.abs(result.x.values))))),
    ]
    if chart is not None:
        target = np.asarray(spec["history"]["xi"], dtype=float)
        err = float(np.max(np.abs(result.xi - target)))
        certs.append(certificate("round_trip", "recovered phase vs generating phase",
                                 err, 10 * tol))
        certs.append(certificate("chart_agreement", "|y - Psi(., xi)| on the overlap",
                                 result.chart_gap, 10 * tol))
    body = result.to_dict()
    body["certificates"] = certs
    out.json("tracking.json", body)
    out.text("profile.csv", result.profile_csv())
    print(_table([(c["name"], f"{'ok' if c['ok'] else 'FAIL'}  {_fmt(c['value'])}")
                  for c in certs]))
    return EXIT_OK if all(c["ok"] for c in certs) else EXIT_CERTIFICATE


def cmd_vdp(cfg, out: Output):
    block = cfg.get("vdp", {})
    spec = VdpSpec(b=block.get("b", -0.5), c=block.get("c", 0.1), eps=block.get("eps", 0.05),
                   r=block.get("r", 0.001), kappa_cutoff=block.get("kappa_cutoff", 2.0))
    try:
        spec.validate()
    except ValueError as exc:
        raise config_mod.ConfigError(str(exc), "$.vdp") from None
    problem = None
    if "bounds" in block:
        inflated = list(block["bounds"])
        measured = None
    else:
        from .catalog import vdp_problem
        problem = vdp_problem(spec.b, spec.c, spec.eps, spec.r, spec.kappa_cutoff)
        measured, inflated = measure_derivative_bounds(problem.rhs, 2 * spec.kappa_cutoff,
                                                       points=block.get("sample_points", 9))
    orders = attainable_orders(spec.c, range(1, len(inflated) + 1))
    reports = {}
    for hyp in ("H1", "H2"):
        k = orders[hyp]
        if k < 1:
            reports[hyp] = None
            continue
        rep, _ = vdp_admissibility(spec, bounds=inflated, hypothesis=hyp, k=k,
                                   d=1.0 if hyp == "H1" else 2.0)
        reports[hyp] = rep.to_dict()
    study = delay_study(spec, r_values=tuple(block.get("r_values", (0.004, 0.002, 0.001))),
                        state0=tuple(block.get("state0", (0.5, 0.1))),
                        t_end=block.get("t_end"),
                        steps_per_delay=block.get("steps_per_delay", 8),
                        workers=block.get("workers", 1))
    certs = []
    for i, q in enumerate(study["ratios"]):
        certs.append(certificate(f"r_halving_{i + 1}", "sup difference to the r = 0 orbit "
                                 "shrinks by a factor in [1.5, 3] when r halves", q, 3.0,
                                 ok=q is not None and 1.5 <= q <= 3.0))
    last = study["orbits"][-1]
    certs.append(certificate("orbit_closure", "Poincare return of the smallest delay",
                             last["closure"], 1e-3))
    bundle = {"spec": spec.to_dict(), "measured_bounds": measured, "bounds": inflated,
              "attainable_k": orders, "admissibility": reports, "study": study}
    if block.get("manifold", False) and reports.get("H1") and reports["H1"]["feasible"]:
        bundle["manifold"] = _vdp_manifold(spec, inflated, block, certs)
    bundle["certificates"] = certs
    out.json("vdp_study.json", bundle)
    rows = [(f"r = {o['r']}", f"period {_fmt(o['period'])}  amplitude {_fmt(o['amplitude'])}  "
             f"closure {_fmt(o['closure'])}") for o in study["orbits"] + [study["reference"]]]
    rows += [(c["name"], f"{'ok' if c['ok'] else 'FAIL'}  {_fmt(c['value'])}") for c in certs]
    print(_table(rows))
    if study["status"] != "ok":
        return EXIT_OK
    return EXIT_OK if all(c["ok"] for c in certs) else EXIT_CERTIFICATE


def _vdp_manifold(spec, bounds, block, certs):
    run_r = block.get("manifold_r", 5e-4)
    local = VdpSpec(spec.b, spec.c, spec.eps, run_r, spec.kappa_cutoff)
    rep, problem = vdp_admissibility(local, bounds=bounds[:2], hypothesis="H1", k=1,
                                     run_delay=run_r)
    if not rep.feasible:
        return {"status": "infeasible", "reasons": rep.reasons}
    xi = np.array([[0.3, -0.2], [-0.5, 0.1], [0.8, 0.4]])
    chart, diag = solve_manifold(problem, rep, xi, tol=1e-12)
    certs.append(certificate("vdp_contraction", "gap ratios <= kappa (1 + 0.05)",
                             diag.empirical_rate, None, ok=diag.contraction_ok()))
    certs.append(certificate("vdp_boundary_identity", "|Psi(0,xi) - L(0) Psi_0 - xi|",
                             diag.boundary_defect, 1e-11))
    result = track(chart.history(0), problem, rep, chart=chart, tol=1e-11)
    err = float(np.max(np.abs(result.xi - xi[0])))
    certs.append(certificate("vdp_round_trip", "tracking a chart history recovers its phase",
                             err, 1e-10))
    return {"status": "ok", "r": run_r, "kappa": rep.kappa, "lambda": rep.lambda_,
            "delta": rep.delta, "iterations": diag.iterates, "empirical_rate": diag.empirical_rate,
            "round_trip_error": err}


def cmd_fdb_check(cfg, out: Output):
    block = cfg.get("fdb", {})
    res = run_suite(seed=cfg.get("seed", 0), points=block.get("points", 10),
                    max_order=block.get("max_order", 4), tolerance=block.get("tolerance", 1e-5))
    out.json("fdb_check.json", res.to_dict())
    print(_table([("cases", res.cases), ("max relative error", _fmt(res.max_rel_error)),
                  ("tolerance", _fmt(res.tolerance)), ("ok", res.ok)]))
    return EXIT_OK if res.ok else EXIT_CERTIFICATE


COMMANDS = {
    "admissible": cmd_admissible,
    "simulate": cmd_simulate,
    "manifold": cmd_manifold,
    "track": cmd_track,
    "vdp": cmd_vdp,
    "fdb-check": cmd_fdb_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="nde", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory (default: config output.dir or nde_out)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            cfg = config_mod.validate({"schema_version": config_mod.SCHEMA_VERSION})
        else:
            cfg = config_mod.load(args.config)
        out_dir = args.out or cfg.get("output", {}).get("dir", "nde_out")
        out = Output(out_dir)
        code = COMMANDS[args.command](cfg, out)
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(str(exc), file=sys.stderr)
        if exc.report is not None:
            out.json("admissibility.json", exc.report.to_dict())
            out.write()
        return EXIT_INFEASIBLE
    except NonContractionError as exc:
        print(f"non-contraction: {exc}", file=sys.stderr)
        return EXIT_NONCONTRACTION
    except (HorizonTooShortError, ChartMismatchError, StencilError, StepSizeError,
            DivergenceError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except ValueError as exc:
        if "admissible bound" in str(exc):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        raise
    out.write()
    return code


if __name__ == "__main__":
    sys.exit(main())
