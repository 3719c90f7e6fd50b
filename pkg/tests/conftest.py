import numpy as np
import pytest

from ndeim.catalog import vdp_problem
from ndeim.manifold import solve_manifold
from ndeim.vdp import VdpSpec, measure_derivative_bounds, vdp_admissibility

# delay used for the manifold and tracking runs on the modified vdP system
VDP_RUN_DELAY = 5e-4

_CRITERIA = {}


def record_criterion(number, ok, detail):
    """Store and print one acceptance line."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture(scope="session")
def vdp_bounds():
    """Inflated M_1, M_2 of the cut-off vdP field on the 2 kappa box."""
    spec = VdpSpec(r=VDP_RUN_DELAY)
    problem = vdp_problem(spec.b, spec.c, spec.eps, spec.r, spec.kappa_cutoff)
    measured, inflated = measure_derivative_bounds(problem.rhs, 2 * spec.kappa_cutoff)
    return measured, inflated


@pytest.fixture(scope="session")
def vdp_h1(vdp_bounds):
    rep, problem = vdp_admissibility(VdpSpec(r=VDP_RUN_DELAY), bounds=vdp_bounds[1],
                                     hypothesis="H1", k=1, d=1.0, run_delay=VDP_RUN_DELAY)
    assert rep.feasible, rep.reasons
    return rep, problem


@pytest.fixture(scope="session")
def vdp_h2(vdp_bounds):
    rep, problem = vdp_admissibility(VdpSpec(r=VDP_RUN_DELAY), bounds=vdp_bounds[1],
                                     hypothesis="H2", k=1, d=2.0)
    assert rep.feasible, rep.reasons
    return rep, problem


@pytest.fixture(scope="session")
def vdp_chart(vdp_h1):
    rep, problem = vdp_h1
    xi = np.random.default_rng(0).uniform(-0.8, 0.8, (20, 2))
    chart, diag = solve_manifold(problem, rep, xi, tol=1e-12)
    return chart, diag
