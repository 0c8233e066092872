"""State-evolution recursions and the Gamma/Lambda coefficient matrices.

The recursions track two correlation sequences,

    rho_{s+1} = rho(mu_s) = (1/q)  E[ tanh(sqrt(psi) Z_mu) tanh(sqrt(psi) Z) ]
    mu_{s+1}  = mu(rho_s) = (a/psi) E[ F_q(sqrt(q) Z_rho) F_q(sqrt(q) Z) ]

with (Z, Z_r) a standard Gaussian pair of correlation r, realized as
Z_r = r xi + sqrt(1-r^2) xi' on the tensor-product rule.  The derived
increments lambda_s, gamma_s accumulate into Gamma_s, Lambda_s and fill the
lower-triangular matrices whose rows are (gamma_1 .. gamma_{s-1},
sqrt(1 - Gamma_{s-1})); by construction (Lambda Lambda^T)_{r,s} =
rho_{min(r,s)} off the unit diagonal, and likewise for Gamma with mu.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import activation as act
from .errors import DegenerateFixedPointError, StateEvolutionDegeneracyError
from .quadrature import QuadratureRule, gauss_hermite
from .rs import RsSolution

CLAMP_SLACK = 1e-9


@dataclass(frozen=True)
class SeTrace:
    """State-evolution sequences (1-indexed as stored: entry 0 is s=1)."""

    rho: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    gam: np.ndarray
    Gamma_s: np.ndarray
    Lambda_s: np.ndarray
    Gamma_mat: np.ndarray  # (t-1) x (t-1)
    Lambda_mat: np.ndarray  # t x t
    t: int


def _rule(rule: Optional[QuadratureRule]) -> QuadratureRule:
    return rule if rule is not None else gauss_hermite()


def _correlated_pair(nodes: np.ndarray, r: float):
    """(Z, Z_r) on the tensor grid with correlation r."""
    z1 = nodes[:, None]
    z2 = nodes[None, :]
    zr = r * z1 + math.sqrt(max(0.0, 1.0 - r * r)) * z2
    return z1, zr


def _clamp_corr(value: float, name: str) -> float:
    if abs(value) <= 1.0:
        return value
    if abs(value) - 1.0 <= CLAMP_SLACK:
        warnings.warn(f"{name}={value!r} clamped to +-1 (quadrature noise)",
                      stacklevel=3)
        return math.copysign(1.0, value)
    raise StateEvolutionDegeneracyError(
        f"{name}={value!r} exceeds 1 beyond quadrature noise")


def se_init(spec: act.ActivationSpec, sol: RsSolution,
            rule: Optional[QuadratureRule] = None) -> Tuple[float, float]:
    """(rho_1, mu_1): rho_1 = 0 exactly; mu_1 = sqrt(alpha/psi) E F(sqrt(q)Z)."""
    if sol.q <= 0.0 or sol.psi <= 0.0:
        raise DegenerateFixedPointError(
            f"state evolution needs q, psi > 0; got q={sol.q}, psi={sol.psi} "
            "(annealed branch)")
    r = _rule(rule)
    f = act.F(spec, sol.q, math.sqrt(sol.q) * r.nodes, rule=r)
    mu1 = math.sqrt(sol.alpha / sol.psi) * float(np.dot(r.weights, f))
    return 0.0, _clamp_corr(mu1, "mu_1")


def se_step(spec: act.ActivationSpec, sol: RsSolution,
            mu_prev: float, rho_prev: float,
            rule: Optional[QuadratureRule] = None) -> Tuple[float, float]:
    """(rho(mu_prev), mu(rho_prev)) by 2-D tensor quadrature."""
    if abs(mu_prev) > 1.0 or abs(rho_prev) > 1.0:
        raise ValueError(
            f"correlations must lie in [-1, 1]; got mu={mu_prev}, "
            f"rho={rho_prev}")
    r = _rule(rule)
    q, psi = sol.q, sol.psi
    sp, sq = math.sqrt(psi), math.sqrt(q)

    z1, zmu = _correlated_pair(r.nodes, mu_prev)
    th = np.tanh(sp * z1) * np.tanh(sp * zmu)
    rho_next = float(r.weights @ th @ r.weights) / q

    z1, zrho = _correlated_pair(r.nodes, rho_prev)
    f1 = act.F(spec, q, sq * np.broadcast_to(z1, zrho.shape), rule=r)
    f2 = act.F(spec, q, sq * zrho, rule=r)
    mu_next = (sol.alpha / psi) * float(r.weights @ (f1 * f2) @ r.weights)

    return _clamp_corr(rho_next, "rho"), _clamp_corr(mu_next, "mu")


def se_run(spec: act.ActivationSpec, sol: RsSolution, t_max: int = 200,
           eps_conv: float = 1e-8,
           rule: Optional[QuadratureRule] = None) -> SeTrace:
    """Run the recursion up to t_max steps (early stop once both cumulative
    sums are within eps_conv of 1; pass eps_conv=0 to force all steps)."""
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    r = _rule(rule)
    rho1, mu1 = se_init(spec, sol, rule=r)
    rho = [rho1]
    mu = [mu1]
    lam = [rho1]
    gam = [mu1]
    Lambda_s = [lam[0] ** 2]
    Gamma_s = [gam[0] ** 2]
    for s in range(2, t_max + 1):
        rn, mn = se_step(spec, sol, mu[-1], rho[-1], rule=r)
        rho.append(rn)
        mu.append(mn)
        Lp, Gp = Lambda_s[-1], Gamma_s[-1]
        if Lp >= 1.0 or Gp >= 1.0:
            raise StateEvolutionDegeneracyError(
                f"state-evolution degeneracy at step {s}: "
                f"Lambda={Lp!r}, Gamma={Gp!r}")
        lam.append((rn - Lp) / math.sqrt(1.0 - Lp))
        gam.append((mn - Gp) / math.sqrt(1.0 - Gp))
        Lambda_s.append(min(Lp + lam[-1] ** 2, 1.0 - 1e-300))
        Gamma_s.append(min(Gp + gam[-1] ** 2, 1.0 - 1e-300))
        if eps_conv > 0 and 1.0 - Gamma_s[-1] < eps_conv \
                and 1.0 - Lambda_s[-1] < eps_conv:
            break
    t = len(rho)
    lam_a = np.array(lam)
    gam_a = np.array(gam)
    Lam_a = np.array(Lambda_s)
    Gam_a = np.array(Gamma_s)
    Lambda_mat, Gamma_mat = _matrices_from_sequences(lam_a, gam_a, Lam_a,
                                                     Gam_a, t)
    return SeTrace(rho=np.array(rho), mu=np.array(mu), lam=lam_a, gam=gam_a,
                   Gamma_s=Gam_a, Lambda_s=Lam_a, Gamma_mat=Gamma_mat,
                   Lambda_mat=Lambda_mat, t=t)


def _matrices_from_sequences(lam: np.ndarray, gam: np.ndarray,
                             Lambda_s: np.ndarray, Gamma_s: np.ndarray,
                             t: int):
    Lambda_mat = np.zeros((t, t))
    for s in range(1, t + 1):
        Lambda_mat[s - 1, :s - 1] = lam[:s - 1]
        prev = Lambda_s[s - 2] if s >= 2 else 0.0
        Lambda_mat[s - 1, s - 1] = math.sqrt(max(0.0, 1.0 - prev))
    tg = max(t - 1, 1)
    Gamma_mat = np.zeros((tg, tg))
    for s in range(1, tg + 1):
        Gamma_mat[s - 1, :s - 1] = gam[:s - 1]
        prev = Gamma_s[s - 2] if s >= 2 else 0.0
        Gamma_mat[s - 1, s - 1] = math.sqrt(max(0.0, 1.0 - prev))
    return Lambda_mat, Gamma_mat


SE_CSV_COLUMNS = "step,rho,mu,lambda,gamma,Gamma_cum,Lambda_cum"


def trace_csv_rows(trace: SeTrace):
    """CSV rows in the documented column order, 17 significant digits."""
    f = "{:.17g}".format
    rows = []
    for i in range(trace.t):
        rows.append(",".join([
            str(i + 1), f(trace.rho[i]), f(trace.mu[i]), f(trace.lam[i]),
            f(trace.gam[i]), f(trace.Gamma_s[i]), f(trace.Lambda_s[i])]))
    return rows
