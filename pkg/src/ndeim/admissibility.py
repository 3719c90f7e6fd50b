"""Smallness hypotheses, the auxiliary function H, and the constant schedules.

Two hypothesis families are supported.  ``H1`` covers the general neutral
problem ``d/dt[x - L(t)x_t] = F(t, x_t)``; ``H2`` covers the autonomous
problem ``d/dt[x - A x(t-r)] = f(x(t), x(t-r))`` and additionally yields the
smoothness-in-delay constants eps_j.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect

from .multiindex import (
    indices_of_order,
    mi_factorial,
    partitions_multivariate,
    partitions_univariate,
)

ROOT_XTOL = 1e-14
ROOT_RTOL = 1e-15
ROOT_MAXITER = 200
CERT_SLACK = 1e-12


class InfeasibleError(ValueError):
    """A hypothesis or schedule precondition fails."""

    def __init__(self, message, code=None, h_max=None):
        super().__init__(message)
        self.code = code
        self.h_max = h_max


class ConsistencyError(RuntimeError):
    """A quantity that should be positive by construction is not."""


REASON_MESSAGES = {
    "HYPOTHESIS_UNKNOWN": "hypothesis must be H1 or H2",
    "K_INVALID": "k must be a positive integer",
    "MJ_COUNT": "Mj must list M_1..M_{k+1}",
    "MJ_NONPOSITIVE": "every M_j must be positive",
    "M0_NEGATIVE": "M0 must be nonnegative",
    "R0_NONPOSITIVE": "r0 must be positive",
    "D_NONPOSITIVE": "d must be positive",
    "M_NONPOSITIVE": "M ≤ 0",
    "M_GE_1": "M ≥ 1",
    "M_GE_H2_BOUND": "M ≥ 1/(2·3^k)",
    "NO_ROOTS": "M1·r0 ≥ H(x0): H(x) = M1·r0 has no root pair",
    "M1R0_GE_H_CEILING": "M1·r0 ≥ H(ceiling)",
    "XSTAR_OUT_OF_INTERVAL": "x* outside (x1(r0), ceiling)",
    "KAPPA_GE_1": "κ ≥ 1",
    "EXP_CONDITION": "exponential smallness condition fails",
    "RUN_DELAY_INVALID": "run delay must lie in (0, r0]",
}


@dataclass
class HypothesisParams:
    """Constants entering the smallness hypotheses.

    ``Mj`` holds ``M_1..M_{k+1}``.  ``n`` is the state dimension; it only
    enters the delay-Lipschitz constant of the H2 schedule.
    """

    M: float
    M0: float
    Mj: list
    k: int
    r0: float
    d: float
    hypothesis: str = "H1"
    n: int = 1

    def mj(self, j: int) -> float:
        """``M_j`` for ``1 <= j <= k+1``."""
        if j < 1 or j > len(self.Mj):
            raise IndexError(f"M_{j} not available (have M_1..M_{len(self.Mj)})")
        return float(self.Mj[j - 1])

    def validate(self) -> list:
        codes = []
        if self.hypothesis not in ("H1", "H2"):
            codes.append("HYPOTHESIS_UNKNOWN")
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            codes.append("K_INVALID")
        elif len(self.Mj) != self.k + 1:
            codes.append("MJ_COUNT")
        if any(not (float(m) > 0) for m in self.Mj):
            codes.append("MJ_NONPOSITIVE")
        if not self.M0 >= 0:
            codes.append("M0_NEGATIVE")
        if not self.r0 > 0:
            codes.append("R0_NONPOSITIVE")
        if not self.d > 0:
            codes.append("D_NONPOSITIVE")
        if not self.M > 0:
            codes.append("M_NONPOSITIVE")
        elif self.hypothesis == "H1" and self.M >= 1:
            codes.append("M_GE_1")
        elif self.hypothesis == "H2" and "K_INVALID" not in codes and self.M >= h2_bound(self.k):
            codes.append("M_GE_H2_BOUND")
        return codes


def h2_bound(k: int) -> float:
    return 1.0 / (2.0 * 3.0**k)


# ---------------------------------------------------------------------------
# the auxiliary function H


def h_eval(x, M):
    """``H(x) = x e^{-x} - M x``."""
    return x * np.exp(-x) - M * x


def h_prime(x, M):
    return (1.0 - x) * np.exp(-x) - M


def critical_point(M: float) -> float:
    """Unique positive zero ``x0`` of ``H'``; it lies in (0, 1)."""
    if not (0.0 < M < 1.0):
        raise ValueError(f"critical_point needs 0 < M < 1, got {M}")
    return bisect(h_prime, 0.0, 1.0, args=(M,), xtol=ROOT_XTOL, rtol=ROOT_RTOL,
                  maxiter=ROOT_MAXITER)


def root_interval(M: float, M1: float, r: float):
    """The two positive roots ``x1 < x0 < x2`` of ``H(x) = M1 r``."""
    x0 = critical_point(M)
    hmax = float(h_eval(x0, M))
    level = M1 * r
    if level > hmax:
        raise InfeasibleError(
            f"M1*r = {level:.6g} exceeds max H = {hmax:.6g}", code="NO_ROOTS", h_max=hmax)
    if level == hmax:
        return x0, x0
    g = lambda x: h_eval(x, M) - level
    x1 = 0.0 if level <= 0 else bisect(g, 0.0, x0, xtol=ROOT_XTOL, rtol=ROOT_RTOL,
                                        maxiter=ROOT_MAXITER)
    x2 = bisect(g, x0, -math.log(M), xtol=ROOT_XTOL, rtol=ROOT_RTOL, maxiter=ROOT_MAXITER)
    return x1, x2


def ceiling_value(M: float, k: int, hypothesis: str) -> float:
    if hypothesis == "H2":
        return -math.log(2.0 * 3.0**k * M) / (k + 1)
    return -math.log(M) / (k + 1)


def kappa_value(M, M1, r0, x_star):
    return (M * x_star * math.exp(x_star) + M1 * r0 * math.exp(x_star)) / x_star


# ---------------------------------------------------------------------------
# constants of the T-operator schedule


def _beta(betas, i):
    try:
        return float(betas[i])
    except (IndexError, KeyError):
        raise KeyError(f"beta_{i} missing from schedule") from None


def _univariate_sum(m, j, betas):
    total = 0.0
    for omega in partitions_univariate(m, j):
        term = 1.0
        for i, w in enumerate(omega, start=1):
            if w:
                term *= _beta(betas, i) ** w / (math.factorial(w) * math.factorial(i) ** w)
        total += term
    return total


def a_m_constant(m: int, betas: Sequence, p: HypothesisParams, x_star: float) -> float:
    """Constant ``A_m`` (2 <= m <= k) bounding the m-th xi-derivative of the integral term.

    ``betas`` is indexed from 0, so ``betas[i]`` is beta_i.
    """
    if m < 2:
        raise ValueError("a_m_constant needs m >= 2")
    total = 0.0
    for j in range(1, m + 1):
        total += p.mj(j) * _univariate_sum(m, j, betas)
    return math.factorial(m - 1) * math.exp(m * x_star) * total


def a_k1_constant(betas: Sequence, p: HypothesisParams, x_star: float) -> float:
    """Lipschitz constant ``A_{k+1}`` for the k-th xi-derivative of the integral term."""
    k = p.k
    growth = math.exp((k + 1) * x_star)
    kf = math.factorial(k)

    def factor(i, w):
        if w == 0:
            return 1.0
        return _beta(betas, i) ** w / (math.factorial(w) * math.factorial(i) ** w)

    first = 0.0
    second = 0.0
    for m in range(1, k + 1):
        for omega in partitions_univariate(k, m):
            prod = 1.0
            for i, w in enumerate(omega, start=1):
                prod *= factor(i, w)
            first += p.mj(m + 1) * prod
            # omega padded with omega_0 = omega_{k+1} = 0
            padded = (0,) + tuple(omega) + (0,)
            inner = 0.0
            for j in range(1, k + 1):
                wj = padded[j]
                if wj == 0:
                    continue
                term = wj * _beta(betas, j + 1) * _beta(betas, j) ** (wj - 1)
                term /= math.factorial(wj) * math.factorial(j) ** wj
                for i in range(0, j):
                    term *= factor(i, padded[i])
                for i in range(j + 1, k + 2):
                    term *= factor(i, padded[i])
                inner += term
            second += p.mj(m) * inner
    a1 = _beta(betas, 1) * growth * kf * first
    a2 = growth * kf * second
    return (a1 + a2) / (k + 1)


def beta_schedule(p: HypothesisParams, x_star: float, policy=None):
    """Constants ``beta_0..beta_{k+1}`` and the delay bound ``delta``.

    ``policy`` maps ``(m, beta_1)`` to beta_m for ``m >= 2``; the default
    is the geometric ladder ``beta_1**m``.
    """
    kappa = kappa_value(p.M, p.mj(1), p.r0, x_star)
    denom = x_star - p.M * x_star * math.exp(x_star) - p.mj(1) * p.r0 * math.exp(x_star)
    if not denom > 0 or not kappa < 1:
        raise ConsistencyError(f"beta_1 denominator not positive ({denom})")
    beta1 = x_star / denom
    beta0 = (p.d + p.M0 * p.r0 / x_star) / (1.0 - kappa)
    if policy is None:
        policy = lambda m, b1: b1**m
    betas = [beta0, beta1] + [float(policy(m, beta1)) for m in range(2, p.k + 2)]
    candidates = [p.r0]
    for m in range(2, p.k + 2):
        a_m = a_m_constant(m, betas, p, x_star) if m <= p.k else a_k1_constant(betas, p, x_star)
        if a_m > 0:
            candidates.append(x_star * (1.0 - p.M * math.exp(m * x_star)) * betas[m] / a_m)
    delta = min(candidates)
    if not delta > 0:
        raise ConsistencyError(f"delta not positive ({delta})")
    return betas, delta


def beta_certificates(p: HypothesisParams, x_star: float, betas, delta, run_delay=None):
    """Re-evaluate the self-mapping inequalities for a beta schedule.

    Returns a list of ``(name, lhs, rhs, ok)`` tuples.  Inequalities that the
    schedule meets with equality are compared with a relative slack of
    ``CERT_SLACK``.
    """
    out = []
    kappa = kappa_value(p.M, p.mj(1), p.r0, x_star)

    def leq(name, lhs, rhs, strict=False):
        ok = lhs < rhs if strict else lhs <= rhs * (1 + CERT_SLACK) + CERT_SLACK * 1e-3
        out.append((name, float(lhs), float(rhs), bool(ok)))

    r = delta if run_delay is None else run_delay
    lam = x_star / r
    leq("beta0", p.d + p.M0 / lam + kappa * betas[0], betas[0])
    leq("beta1", 1 + kappa * betas[1], betas[1])
    kappa_r = p.M * math.exp(x_star) + p.mj(1) * math.exp(x_star) / lam
    if r < p.r0:
        leq("beta1_strict", 1 + kappa_r * betas[1], 1 + kappa * betas[1], strict=True)
    for m in range(2, p.k + 2):
        a_m = a_m_constant(m, betas, p, x_star) if m <= p.k else a_k1_constant(betas, p, x_star)
        leq(f"beta{m}", p.M * betas[m] * math.exp(m * x_star) + a_m * delta / x_star, betas[m])
    return out


# ---------------------------------------------------------------------------
# constants of the F-operator schedule


def s_nu(nu, x_star: float) -> float:
    """``S_nu = 2^{nu_2} e^{|nu| x*}`` for a (t, r) multi-index."""
    if len(nu) != 2:
        raise ValueError("s_nu expects a (t, r) multi-index")
    return 2.0 ** nu[1] * math.exp((nu[0] + nu[1]) * x_star)


def _eps(eps, i):
    try:
        val = eps[i]
    except (IndexError, KeyError):
        raise KeyError(f"eps_{i} missing from schedule") from None
    if val is None:
        raise KeyError(f"eps_{i} missing from schedule")
    return float(val)


def t_nu(nu, eps: Sequence, p: HypothesisParams, x_star: float) -> float:
    """Constant ``T_nu`` bounding ``d^nu f(x(t,r), x(t-r,r))`` for ``1 <= |nu| <= k``.

    ``eps`` is indexed from 0 (``eps[j]`` is eps_j).
    """
    nu = tuple(nu)
    order_nu = sum(nu)
    nu_fact = mi_factorial(nu)
    total = 0.0
    for w in range(1, order_nu + 1):
        for omega in indices_of_order(2, w):
            acc = 0.0
            for group in partitions_multivariate(nu, omega).values():
                for part in group:
                    term = float(nu_fact)
                    for kj, lj in zip(part.ks, part.ls):
                        e = _eps(eps, sum(lj))
                        term /= mi_factorial(kj) * mi_factorial(lj) ** sum(kj)
                        term *= e ** kj[0] * (e * s_nu(lj, x_star)) ** kj[1]
                    acc += term
            total += p.mj(w) * acc
    return total


def t_0k1_constant(eps: Sequence, p: HypothesisParams, x_star: float) -> float:
    """Delay-Lipschitz constant ``T_{(0,k+1)}`` of the k-th r-derivative."""
    k = p.k
    n2 = 2 * p.n
    nu = (0, k)
    kf = math.factorial(k)

    def block(kj, lj):
        # (eps_{|l|} S_l)^{|k|} / (k! (l!)^{|k|}), equal to 1 for the padding entries
        if kj is None or sum(kj) == 0:
            return 1.0
        base = _eps(eps, sum(lj)) * s_nu(lj, x_star)
        return base ** sum(kj) / (mi_factorial(kj) * mi_factorial(lj) ** sum(kj))

    first = 0.0
    second = 0.0
    for w in range(1, k + 1):
        for omega in indices_of_order(n2, w):
            groups = partitions_multivariate(nu, omega)
            acc_first = 0.0
            acc_second = 0.0
            for s in range(1, k + 1):
                for part in groups[s]:
                    prod = 1.0
                    for kj, lj in zip(part.ks, part.ls):
                        prod *= block(kj, lj)
                    acc_first += prod
                    acc_second += _j_term(part, eps, x_star, block)
            first += p.mj(w + 1) * _eps(eps, 1) * s_nu((0, 1), x_star) * acc_first
            second += p.mj(w) * acc_second
    return kf * first + kf * second


def _k_term(kj, lj, eps, x_star):
    base = _eps(eps, sum(lj)) * s_nu(lj, x_star)
    shifted = _eps(eps, sum(lj) + 1) * s_nu((lj[0], lj[1] + 1), x_star)
    padded = (0,) + tuple(kj) + (0,)
    total = 0.0
    for i in range(1, len(kj) + 1):
        if padded[i] == 0:
            continue
        term = padded[i] * shifted * base ** (padded[i] - 1)
        for m in range(0, i):
            term *= base ** padded[m]
        for m in range(i + 1, len(kj) + 2):
            term *= base ** padded[m]
        total += term
    return total


def _j_term(part, eps, x_star, block):
    s = part.s
    ks = (None,) + tuple(part.ks) + (None,)
    ls = (None,) + tuple(part.ls) + (None,)
    total = 0.0
    for j in range(1, s + 1):
        kj, lj = ks[j], ls[j]
        term = _k_term(kj, lj, eps, x_star) / (mi_factorial(kj) * mi_factorial(lj) ** sum(kj))
        for i in range(0, j):
            term *= block(ks[i], ls[i])
        for i in range(j + 1, s + 2):
            term *= block(ks[i], ls[i])
        total += term
    return total


def _positivity_factors(p, x_star):
    """The three factors that must be positive for the eps schedule."""
    k, M = p.k, p.M
    first = 1.0 - M * math.exp(x_star) - M * s_nu((0, 1), x_star)
    middle = {}
    for j in range(2, k + 1):
        acc = sum(math.factorial(j) * s_nu((a, j - a), x_star)
                  / (math.factorial(a) * math.factorial(j - a)) for a in range(0, j + 1))
        middle[j] = 1.0 - M * acc
    acc = sum(math.factorial(k) * s_nu((a, k - a + 1), x_star)
              / (math.factorial(a) * math.factorial(k - a)) for a in range(0, k + 1))
    last = 1.0 - M * acc
    return first, middle, last


def epsilon_schedule(p: HypothesisParams, x_star: float):
    """Constants ``eps_0..eps_{k+1}``, the per-order bounds ``delta_j`` and ``delta``.

    Returns ``(eps, deltas, delta, factors)`` where ``deltas[j-1]`` is
    delta_j and ``factors`` records the positivity factors.
    """
    k, M = p.k, p.M
    f00 = p.M0
    kappa = kappa_value(M, p.mj(1), p.r0, x_star)
    if not kappa < 1:
        raise InfeasibleError("kappa >= 1", code="KAPPA_GE_1")
    first, middle, last = _positivity_factors(p, x_star)
    if not first > 0:
        raise InfeasibleError("first-order positivity factor not positive", code="POSITIVITY_FIRST")
    for j, val in middle.items():
        if not val > 0:
            raise InfeasibleError(f"order-{j} positivity factor not positive", code="POSITIVITY_MIDDLE")
    if not last > 0:
        raise InfeasibleError("Lipschitz positivity factor not positive", code="POSITIVITY_LAST")

    eps = [None] * (k + 2)
    eps[0] = (p.d + f00 * p.r0 / (math.e * x_star)) / (1.0 - kappa)
    eps[1] = 2.0 * (p.mj(1) * math.exp(x_star) * eps[0] + f00) / first
    deltas = []
    t01 = t_nu((0, 1), eps, p, x_star)
    deltas.append(first * eps[1] * x_star / (2.0 * t01) if t01 > 0 else math.inf)
    for j in range(2, k + 1):
        rhs = 2.0 * sum(math.factorial(j) * t_nu((a - 1, j - a), eps, p, x_star)
                        / (math.factorial(a) * math.factorial(j - a)) for a in range(1, j + 1))
        eps[j] = rhs / middle[j]
        t0j = t_nu((0, j), eps, p, x_star)
        deltas.append(middle[j] * eps[j] * j * x_star / (2.0 * t0j) if t0j > 0 else math.inf)
    rhs = 2.0 * t_nu((0, k), eps, p, x_star)
    for a in range(1, k + 1):
        rhs += 2.0 * math.factorial(k) * (t_nu((a, k - a), eps, p, x_star)
                                          + t_nu((a - 1, k - a + 1), eps, p, x_star)) \
            / (math.factorial(a) * math.factorial(k - a))
    eps[k + 1] = rhs / last
    tk1 = t_0k1_constant(eps, p, x_star)
    deltas.append(last * eps[k + 1] * (k + 1) * x_star / (2.0 * tk1) if tk1 > 0 else math.inf)
    delta = min([p.r0] + deltas)
    if not delta > 0:
        raise ConsistencyError(f"delta not positive ({delta})")
    factors = {"first": first, "middle": [middle[j] for j in range(2, k + 1)], "last": last}
    return eps, deltas, delta, factors


def epsilon_certificates(p: HypothesisParams, x_star: float, eps, delta):
    """Check that the per-derivative bounds combine to at most eps_j.

    Each entry is ``(name, lhs, rhs, ok)``.  The bounds for the individual
    t/r partials are summed with the multinomial weights of the full
    derivative, so ``lhs <= rhs`` is the self-mapping property of the eps
    schedule at delay ``delta``.
    """
    k, M = p.k, p.M
    f00 = p.M0
    out = []

    def leq(name, lhs, rhs):
        out.append((name, float(lhs), float(rhs), bool(lhs <= rhs * (1 + CERT_SLACK))))

    kappa_d = (M * x_star * math.exp(x_star) + p.mj(1) * delta * math.exp(x_star)) / x_star
    leq("eps0", p.d + eps[0] * kappa_d + f00 * delta / (math.e * x_star), eps[0])
    t01 = t_nu((0, 1), eps, p, x_star)
    bound_t = M * math.exp(x_star) * eps[1] + p.mj(1) * math.exp(x_star) * eps[0] + f00
    bound_r = M * s_nu((0, 1), x_star) * eps[1] + t01 * delta / x_star
    leq("eps1", bound_t + bound_r, eps[1])
    for j in range(2, k + 1):
        total = M * s_nu((0, j), x_star) * eps[j] + t_nu((0, j), eps, p, x_star) * delta / (j * x_star)
        for a in range(1, j + 1):
            weight = math.factorial(j) / (math.factorial(a) * math.factorial(j - a))
            total += weight * (M * s_nu((a, j - a), x_star) * eps[j]
                               + t_nu((a - 1, j - a), eps, p, x_star))
        leq(f"eps{j}", total, eps[j])
    total = (M * s_nu((0, k + 1), x_star) * eps[k + 1]
             + t_0k1_constant(eps, p, x_star) * delta / ((k + 1) * x_star)
             + t_nu((0, k), eps, p, x_star))
    for a in range(1, k + 1):
        weight = math.factorial(k) / (math.factorial(a) * math.factorial(k - a))
        total += weight * (M * s_nu((a, k - a + 1), x_star) * eps[k + 1]
                           + t_nu((a, k - a), eps, p, x_star)
                           + t_nu((a - 1, k - a + 1), eps, p, x_star))
    leq(f"eps{k + 1}", total, eps[k + 1])
    return out


# ---------------------------------------------------------------------------
# the report


@dataclass
class AdmissibilityReport:
    hypothesis: str
    x0: Optional[float] = None
    h_max: Optional[float] = None
    x1: Optional[float] = None
    x2: Optional[float] = None
    ceiling: Optional[float] = None
    h_ceiling: Optional[float] = None
    x_star: Optional[float] = None
    run_delay: Optional[float] = None
    lambda_: Optional[float] = None
    kappa: Optional[float] = None
    exp_condition: Optional[float] = None
    delta: Optional[float] = None
    delta_beta: Optional[float] = None
    delta_eps: Optional[float] = None
    beta: Optional[list] = None
    eps: Optional[list] = None
    eps_deltas: Optional[list] = None
    positivity: Optional[dict] = None
    feasible: bool = False
    reasons: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    params: Optional[dict] = None

    @property
    def lam(self):
        return self.lambda_

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            out[key] = _clean(getattr(self, f.name))
        out["reason_messages"] = [REASON_MESSAGES.get(c, c) for c in self.reasons]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)


def _clean(value):
    if isinstance(value, float) or isinstance(value, np.floating):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def check_hypotheses(p: HypothesisParams, x_star="auto", run_delay=None, beta_policy=None):
    """Evaluate the hypotheses and, when they hold, every constant schedule.

    Parameters
    ----------
    p : HypothesisParams
    x_star : float or "auto"
        Exponent ``x*``; ``"auto"`` picks the midpoint of ``(x1(r0), ceiling)``.
    run_delay : float, optional
        Delay used to report ``lambda = x*/r``.  Defaults to the admissible
        bound ``delta``, the worst case for ``lambda``.
    beta_policy : callable, optional
        Override for beta_2..beta_{k+1}; see :func:`beta_schedule`.
    """
    rep = AdmissibilityReport(hypothesis=p.hypothesis, params=dataclasses.asdict(p))
    rep.notes.append("M0 is taken as supplied; it must bound |F(t,0)| e^{-lambda|t|} "
                     "for the worst-case lambda = x*/delta")
    codes = p.validate()
    if codes:
        rep.reasons = codes
        return rep
    M, M1, k = p.M, p.mj(1), p.k
    rep.x0 = critical_point(M)
    rep.h_max = float(h_eval(rep.x0, M))
    try:
        rep.x1, rep.x2 = root_interval(M, M1, p.r0)
    except InfeasibleError:
        rep.reasons.append("NO_ROOTS")
    rep.ceiling = ceiling_value(M, k, p.hypothesis)
    rep.h_ceiling = float(h_eval(rep.ceiling, M))
    if not (M1 * p.r0 < rep.h_ceiling):
        rep.reasons.append("M1R0_GE_H_CEILING")
    if x_star == "auto":
        if rep.reasons:
            return rep
        x_star = 0.5 * (rep.x1 + rep.ceiling)
    x_star = float(x_star)
    rep.x_star = x_star
    if x_star > 0:
        rep.kappa = kappa_value(M, M1, p.r0, x_star)
    if rep.x1 is None or not (rep.x1 < x_star < rep.ceiling):
        rep.reasons.append("XSTAR_OUT_OF_INTERVAL")
    if rep.kappa is None or not rep.kappa < 1:
        rep.reasons.append("KAPPA_GE_1")
    scale = 2.0 * 3.0**k if p.hypothesis == "H2" else 1.0
    rep.exp_condition = scale * M * math.exp((k + 1) * x_star)
    if not rep.exp_condition < 1:
        rep.reasons.append("EXP_CONDITION")
    if p.hypothesis == "H2" and p.d <= 1:
        rep.notes.append("d <= 1: the chart on |xi| >= d with weight |xi|^1 is not covered")
    if rep.reasons:
        return rep

    betas, delta_beta = beta_schedule(p, x_star, policy=beta_policy)
    rep.beta = betas
    rep.delta_beta = delta_beta
    rep.delta = delta_beta
    if p.hypothesis == "H2":
        try:
            eps, deltas, delta_eps, factors = epsilon_schedule(p, x_star)
        except InfeasibleError as exc:
            rep.reasons.append(exc.code)
            return rep
        rep.eps = eps
        rep.eps_deltas = deltas
        rep.delta_eps = delta_eps
        rep.positivity = factors
        rep.delta = min(delta_beta, delta_eps)
    if run_delay is None:
        run_delay = rep.delta
    if not (0 < run_delay <= p.r0):
        rep.reasons.append("RUN_DELAY_INVALID")
        return rep
    rep.run_delay = float(run_delay)
    rep.lambda_ = x_star / run_delay
    rep.feasible = True
    return rep


def report_from_dict(data: dict) -> AdmissibilityReport:
    kwargs = {}
    names = {f.name for f in dataclasses.fields(AdmissibilityReport)}
    for key, val in data.items():
        name = "lambda_" if key == "lambda" else key
        if name in names:
            kwargs[name] = val
    return AdmissibilityReport(**kwargs)
