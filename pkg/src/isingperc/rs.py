"""Replica-symmetric fixed point, free energies, Onsager terms, AT scalar.

The fixed point couples two scalar maps,

    q = qbar(psi) = E tanh(sqrt(psi) Z)^2,
    psi = alpha * rbar(q),   rbar(q) = E F_q(sqrt(q) Z)^2,

and is found as the root of gbar(q) = qbar^{-1}(q)/alpha - rbar(q) on
[0, q_max], with qbar^{-1} obtained by inner bisection (qbar is strictly
increasing).  Activations with E[xi U(xi)] = 0 sit on the annealed branch
where (q, psi) = (0, 0) solves the system exactly and the RS free energy
reduces to the annealed one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import activation as act
from .errors import MultipleRootsError, NoBracketingRootError
from .quadrature import QuadratureRule, expect_g, gauss_hermite

Q_MAX_DEFAULT = 1.0 / 25.0
SYMMETRY_EPS = 1e-10


@dataclass(frozen=True)
class RsSolution:
    """Solved fixed point with all derived scalars."""

    alpha: float
    q: float
    psi: float
    rs_value: float
    annealed_value: float
    beta: float
    beta_acute: float
    at_value: float
    converged: bool
    residual: float
    branch: str = "rs"  # "rs" or "annealed"
    bracket: Optional[Tuple[float, float]] = None


def _rule(rule: Optional[QuadratureRule]) -> QuadratureRule:
    return rule if rule is not None else gauss_hermite()


def qbar(psi: float, rule: Optional[QuadratureRule] = None) -> float:
    """E tanh(sqrt(psi) Z)^2; strictly increasing in psi, qbar(0) = 0."""
    if psi < 0:
        raise ValueError(f"psi must be >= 0, got {psi}")
    if psi == 0.0:
        return 0.0
    r = _rule(rule)
    s = math.sqrt(psi)
    return expect_g(lambda z: np.tanh(s * z) ** 2, r)


def qbar_inv(q: float, rule: Optional[QuadratureRule] = None,
             tol: float = 1e-14) -> float:
    """Inverse of qbar by bisection (qbar' is within [max(0,1-4 psi), 1])."""
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    if q == 0.0:
        return 0.0
    r = _rule(rule)
    lo = q  # qbar(psi) <= psi
    hi = max(2.0 * q, 1e-6)
    while qbar(hi, r) < q:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"qbar_inv bracket search failed for q={q}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if qbar(mid, r) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def rbar(spec: act.ActivationSpec, q: float,
         rule: Optional[QuadratureRule] = None) -> float:
    """E F_q(sqrt(q) Z)^2 (the fixed-point bracket without the alpha factor)."""
    if not 0.0 <= q < 1.0:
        raise ValueError(f"q must be in [0, 1), got {q}")
    r = _rule(rule)
    f = act.F(spec, q, math.sqrt(q) * r.nodes, rule=r)
    return float(np.dot(r.weights, np.square(f)))


def annealed(spec: act.ActivationSpec, alpha: float,
             rule: Optional[QuadratureRule] = None) -> float:
    """log 2 + alpha log E U(xi)."""
    return math.log(2.0) + alpha * float(act.log_mass(spec, 0.0, 1.0,
                                                      rule=_rule(rule)))


def _log2cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def rs_free_energy(spec: act.ActivationSpec, alpha: float, q: float,
                   psi: float, rule: Optional[QuadratureRule] = None) -> float:
    """-psi(1-q)/2 + E[log 2cosh(sqrt(psi) Z)] + alpha E[L_q(sqrt(q) Z)]."""
    r = _rule(rule)
    sp = math.sqrt(psi)
    sq = math.sqrt(q)
    t1 = expect_g(lambda z: _log2cosh(sp * z), r)
    t2 = float(np.dot(r.weights, act.L(spec, q, sq * r.nodes, rule=r)))
    return -0.5 * psi * (1.0 - q) + t1 + alpha * t2


def onsager(spec: act.ActivationSpec, alpha: float, q: float, psi: float,
            rule: Optional[QuadratureRule] = None) -> Tuple[float, float]:
    """(beta, beta_acute) = (alpha E F_q'(sqrt(q) Z), E tanh'(sqrt(psi) Z)).

    beta_acute must equal 1 - q up to quadrature noise; a violation signals
    a defective fixed point and raises.
    """
    r = _rule(rule)
    fp = act.F_prime(spec, q, math.sqrt(q) * r.nodes, rule=r)
    beta = alpha * float(np.dot(r.weights, fp))
    beta_acute = 1.0 - qbar(psi, r)
    if abs(beta_acute - (1.0 - q)) > 1e-8:
        raise ArithmeticError(
            f"Onsager identity violated: E tanh' = {beta_acute!r} but "
            f"1 - q = {1.0 - q!r}; fixed point or quadrature is defective")
    return beta, beta_acute


def at_condition(spec: act.ActivationSpec, alpha: float, q: float, psi: float,
                 rule: Optional[QuadratureRule] = None) -> float:
    """AT scalar alpha E[F_q'(sqrt(q)Z)^2] E[tanh'(sqrt(psi)Z)^2] (<= 1
    predicts state-evolution convergence)."""
    r = _rule(rule)
    fp = act.F_prime(spec, q, math.sqrt(q) * r.nodes, rule=r)
    e1 = float(np.dot(r.weights, np.square(fp)))
    sp = math.sqrt(psi)
    e2 = expect_g(lambda z: (1.0 - np.tanh(sp * z) ** 2) ** 2, r)
    return alpha * e1 * e2


def _finish_solution(spec, alpha, q, psi, converged, residual, branch,
                     rule, bracket=None) -> RsSolution:
    beta, beta_acute = onsager(spec, alpha, q, psi, rule=rule)
    return RsSolution(
        alpha=alpha, q=q, psi=psi,
        rs_value=rs_free_energy(spec, alpha, q, psi, rule=rule),
        annealed_value=annealed(spec, alpha, rule=rule),
        beta=beta, beta_acute=beta_acute,
        at_value=at_condition(spec, alpha, q, psi, rule=rule),
        converged=converged, residual=residual, branch=branch,
        bracket=bracket)


def solve_fixed_point(spec: act.ActivationSpec, alpha: float,
                      q_max: float = Q_MAX_DEFAULT,
                      tol: float = 1e-12,
                      scan_points: int = 64,
                      rule: Optional[QuadratureRule] = None) -> RsSolution:
    """Solve the (q, psi) fixed point for the given load alpha.

    Scans gbar(q) = qbar^{-1}(q)/alpha - rbar(q) on (0, q_max] for sign
    changes, then bisects.  Exactly one sign change is required; zero
    raises NoBracketingRootError, more than one raises MultipleRootsError
    with all brackets.  q_max beyond the default uniqueness interval is
    allowed but warned about.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    r = _rule(rule)
    if q_max > Q_MAX_DEFAULT + 1e-15:
        warnings.warn(
            f"q_max={q_max:g} exceeds the uniqueness interval "
            f"[0, {Q_MAX_DEFAULT:g}]; roots beyond it are unvetted",
            stacklevel=2)

    if abs(act.mean_score(spec, rule=r)) < SYMMETRY_EPS:
        # symmetric / annealed branch: (0, 0) solves the system exactly
        return _finish_solution(spec, alpha, 0.0, 0.0, True, 0.0,
                                "annealed", r)

    def gbar(q: float) -> float:
        return qbar_inv(q, r) / alpha - rbar(spec, q, r)

    qs = np.linspace(0.0, q_max, scan_points + 1)
    vals = np.array([gbar(float(qq)) for qq in qs])
    signs = np.sign(vals)
    brackets = [(float(qs[i]), float(qs[i + 1]))
                for i in range(len(qs) - 1)
                if signs[i] != signs[i + 1] and signs[i + 1] != 0]
    brackets += [(float(qs[i]), float(qs[i]))
                 for i in range(1, len(qs)) if signs[i] == 0]
    if len(brackets) == 0:
        raise NoBracketingRootError(
            f"no sign change of the fixed-point function on [0, {q_max:g}] "
            f"at alpha={alpha:g} (endpoint values {vals[0]:.3e}, "
            f"{vals[-1]:.3e}); alpha may be too large for q_max")
    if len(brackets) > 1:
        raise MultipleRootsError(
            f"multiple roots detected on [0, {q_max:g}] at alpha={alpha:g}",
            brackets)

    lo, hi = brackets[0]
    glo = gbar(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = gbar(mid)
        if gm == 0.0:
            lo = hi = mid
            break
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= tol:
            break
    q = 0.5 * (lo + hi)
    psi = qbar_inv(q, r)
    residual = max(abs(q - qbar(psi, r)),
                   abs(psi - alpha * rbar(spec, q, r)))
    return _finish_solution(spec, alpha, q, psi, True, residual, "rs", r,
                            bracket=(lo, hi))


@dataclass(frozen=True)
class EtaSweepRow:
    eta: float
    q: float = math.nan
    psi: float = math.nan
    rs_value: float = math.nan
    error: str = ""


def rs_eta_sweep(spec: act.ActivationSpec, alpha: float, eta_list,
                 q_max: float = Q_MAX_DEFAULT,
                 rule: Optional[QuadratureRule] = None) -> List[EtaSweepRow]:
    """Solve the fixed point for U_eta over a monotone eta grid.

    Per-row failures are recorded in the row and the sweep continues.
    """
    rows = []
    for eta in eta_list:
        try:
            s = act.smooth(spec, float(eta)) if eta > 0 else spec
            sol = solve_fixed_point(s, alpha, q_max=q_max, rule=rule)
            rows.append(EtaSweepRow(eta=float(eta), q=sol.q, psi=sol.psi,
                                    rs_value=sol.rs_value))
        except Exception as exc:  # recorded, sweep continues
            rows.append(EtaSweepRow(eta=float(eta), error=str(exc)))
    return rows


RS_CSV_COLUMNS = ("alpha,q,psi,rs,annealed,beta,beta_acute,at,"
                  "converged,residual")


def solution_csv_row(sol: RsSolution) -> str:
    """One CSV row in the documented column order, 17 significant digits."""
    f = "{:.17g}".format
    return ",".join([
        f(sol.alpha), f(sol.q), f(sol.psi), f(sol.rs_value),
        f(sol.annealed_value), f(sol.beta), f(sol.beta_acute),
        f(sol.at_value), str(int(sol.converged)), f(sol.residual)])
