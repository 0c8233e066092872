"""Overlap parameters, the Psi and A2 variational functionals with analytic
derivatives, the tilted product measure Q, and the conditional first-moment
estimate.

A configuration J in {-1,+1}^N is located relative to an AMP trace through

    pi(J)    = r-stack J / sqrt(N)      (coordinates on the m-frame)
    varpi(J) = y-stack J / N            (overlaps with the whitened H-rows)

with pi_hat solving pi = Lambda_N^T pi_hat.  The reference point
(pi_star, varpi_star) is built from the theoretical Lambda/Gamma rows so
that the field X(pi_star, varpi_star) equals h^(t+1) exactly.  The scalar
functional

    Psi(pi, varpi) = |w|^2 / (2 c(pi)^2) - (varpi_star, varpi)/(1-q)
                     + (1/N) sum_a L_{|pi|^2}(X_a),
    w = (1 - eps_bar) varpi + eps_bar varpi_star,
    c(pi) = sqrt(1 - |pi|^2),
    X = x-stack^T pi + sqrt(N) eps_bar c-stack^T (varpi - varpi_star),

is the per-configuration exponent of the conditional first moment; its
gradient and Hessian are assembled from the tilted-moment ingredients
(A, B, a, b) of the activation module.  The pair functional

    A2(lambda | zeta) = psi (1-q) / (2 (1-lambda^2))
        + (1/N) sum_a L_{q + lambda^2 (1-q)}(h^(t+1)_a + sqrt(1-q) lambda zeta_a)

has derivative sqrt(1-q) (n^(t+1), zeta) / N at lambda = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from . import activation as act
from .amp import AmpTrace
from .errors import (CapViolationError, DegenerateConfigurationError,
                     NumericalError, VanishingMassError)
from .quadrature import QuadratureRule, gauss_hermite
from .rs import RsSolution


def default_eps_bar(spec: act.ActivationSpec, alpha: float,
                    c1: Optional[float] = None,
                    rule: Optional[QuadratureRule] = None) -> float:
    """e^5 c1 sqrt(alpha) with the empirical constant unless one is given."""
    if c1 is None:
        c1 = act.estimate_constants(spec, rule=rule).c1_empirical
    return math.exp(5.0) * c1 * math.sqrt(alpha)


def neighborhood_radius(spec: act.ActivationSpec, alpha: float,
                        c1: Optional[float] = None,
                        rule: Optional[QuadratureRule] = None) -> float:
    """16 c1 sqrt(alpha) with the empirical constant unless one is given."""
    if c1 is None:
        c1 = act.estimate_constants(spec, rule=rule).c1_empirical
    return 16.0 * c1 * math.sqrt(alpha)


@dataclass(frozen=True)
class OverlapParams:
    pi: np.ndarray
    varpi: np.ndarray
    pi_hat: np.ndarray
    delta: np.ndarray
    pi_star: np.ndarray
    varpi_star: np.ndarray
    eps_bar: float
    lambda_pair: Optional[float] = None


def star_point(trace: AmpTrace) -> Tuple[np.ndarray, np.ndarray]:
    """(pi_star, varpi_star) from the theoretical Lambda/Gamma rows."""
    sol, se, t = trace.sol, trace.se, trace.t
    pi_star = math.sqrt(sol.q) * trace.se.Lambda_mat[t - 1, :t]
    varpi_star = (1.0 - sol.q) * math.sqrt(sol.psi) \
        * se.Gamma_mat[t - 2, :t - 1]
    return pi_star, varpi_star


def _residual_direction(J: np.ndarray, trace: AmpTrace) -> np.ndarray:
    """J'' / |J''|: J with its m-frame span projected out, normalized."""
    Jpp = J - trace.r_frame.T @ (trace.r_frame @ J)
    norm = float(np.linalg.norm(Jpp))
    if norm < 1e-10 * math.sqrt(trace.N):
        raise DegenerateConfigurationError(
            f"degenerate configuration: |J''| = {norm:.3e} "
            "(J lies in the span of the m-iterates)")
    return Jpp / norm


def overlap_params(J: np.ndarray, trace: AmpTrace, sol: RsSolution,
                   eps_bar: float) -> OverlapParams:
    if trace.t < 2:
        raise ValueError(f"trace must have t >= 2, got t={trace.t}")
    sqN = math.sqrt(trace.N)
    pi = trace.r_frame @ J / sqN
    varpi = trace.y @ J / trace.N
    pi_hat = solve_triangular(trace.Lambda_N.T, pi, lower=False)
    v = _residual_direction(J, trace)
    rhs = trace.H_stack @ v / (sqN * math.sqrt(sol.psi))
    GG = trace.Gamma_N @ trace.Gamma_N.T
    delta = np.linalg.solve(GG, rhs)
    pi_star, varpi_star = star_point(trace)
    return OverlapParams(pi=pi, varpi=varpi, pi_hat=pi_hat, delta=delta,
                         pi_star=pi_star, varpi_star=varpi_star,
                         eps_bar=eps_bar)


def pair_lambda(J: np.ndarray, K: np.ndarray,
                trace: AmpTrace) -> Tuple[float, Optional[np.ndarray]]:
    """(lambda(J,K), w): the overlap of the residual directions and the
    unit vector along K'' orthogonal to J''/|J''|."""
    v = _residual_direction(J, trace)
    vK = _residual_direction(K, trace)
    lam = float(np.clip(v @ vK, -1.0, 1.0))
    w_raw = vK - (vK @ v) * v
    norm = float(np.linalg.norm(w_raw))
    if norm < 1e-12:
        # collinear pair (lambda = +-1): w is undefined
        return lam, None
    return lam, w_raw / norm


def _field_and_scale(pi: np.ndarray, varpi: np.ndarray, trace: AmpTrace,
                     eps_bar: float):
    qpi = float(pi @ pi)
    if qpi >= 1.0:
        raise NumericalError(f"|pi|^2 = {qpi!r} >= 1; Psi is undefined")
    c = math.sqrt(1.0 - qpi)
    _, varpi_star = star_point(trace)
    X = trace.x.T @ pi
    if eps_bar != 0.0:
        X = X + math.sqrt(trace.N) * eps_bar \
            * (trace.c_frame.T @ (varpi - varpi_star))
    return X, c, qpi, varpi_star


def psi_functional(pi: np.ndarray, varpi: np.ndarray, trace: AmpTrace,
                   sol: RsSolution, eps_bar: float,
                   rule: Optional[QuadratureRule] = None) -> float:
    r = rule if rule is not None else gauss_hermite()
    X, c, qpi, varpi_star = _field_and_scale(pi, varpi, trace, eps_bar)
    w = (1.0 - eps_bar) * varpi + eps_bar * varpi_star
    quad = float(w @ w) / (2.0 * c * c) \
        - float(varpi_star @ varpi) / (1.0 - sol.q)
    try:
        lvals = act.L(trace.spec, q=qpi, x=X, rule=r)
    except VanishingMassError as exc:
        raise VanishingMassError(
            "Psi = -inf: vanishing tilted mass at some coordinate",
            exc.denominator) from exc
    return quad + float(np.sum(lvals)) / trace.N


def psi_gradient(pi: np.ndarray, varpi: np.ndarray, trace: AmpTrace,
                 sol: RsSolution, eps_bar: float,
                 rule: Optional[QuadratureRule] = None
                 ) -> Tuple[np.ndarray, np.ndarray]:
    r = rule if rule is not None else gauss_hermite()
    X, c, qpi, varpi_star = _field_and_scale(pi, varpi, trace, eps_bar)
    w = (1.0 - eps_bar) * varpi + eps_bar * varpi_star
    F = np.asarray(act.F(trace.spec, qpi, X, rule=r))
    _, _, a_c, _ = act.hess_ingredients(trace.spec, X, c, rule=r)
    N = trace.N
    grad_pi = (float(w @ w) / c ** 4) * pi \
        + (trace.x @ F - (pi / c) * float(np.sum(a_c))) / N
    grad_varpi = (1.0 - eps_bar) * w / (c * c) \
        - varpi_star / (1.0 - sol.q) \
        + eps_bar * (trace.c_frame @ F) / math.sqrt(N)
    return grad_pi, grad_varpi


def psi_hessian(pi: np.ndarray, varpi: np.ndarray, trace: AmpTrace,
                sol: RsSolution, eps_bar: float,
                rule: Optional[QuadratureRule] = None) -> np.ndarray:
    r = rule if rule is not None else gauss_hermite()
    X, c, qpi, varpi_star = _field_and_scale(pi, varpi, trace, eps_bar)
    w = (1.0 - eps_bar) * varpi + eps_bar * varpi_star
    A, B, a_c, b_c = act.hess_ingredients(trace.spec, X, c, rule=r)
    A = np.asarray(A)
    B = np.asarray(B)
    t, N = trace.t, trace.N
    x = trace.x      # t x M
    cf = trace.c_frame  # (t-1) x M
    eye = np.eye(t)
    w2 = float(w @ w)
    grad_c = -pi / c
    hess_c = -(eye / c + np.outer(pi, pi) / c ** 3)
    sum_a = float(np.sum(a_c))
    sum_b = float(np.sum(b_c))

    P_pp = w2 * (eye / c ** 4 + 4.0 * np.outer(pi, pi) / c ** 6)
    P_pv = 2.0 * (1.0 - eps_bar) * np.outer(pi, w) / c ** 4
    P_vv = (1.0 - eps_bar) ** 2 * np.eye(t - 1) / (c * c)

    xB = x @ B
    L_pp = ((x * A) @ x.T + np.outer(grad_c, xB) + np.outer(xB, grad_c)
            + sum_a * hess_c + sum_b * np.outer(grad_c, grad_c)) / N
    L_pv = (eps_bar / math.sqrt(N)) * ((x * A) @ cf.T
                                       + np.outer(grad_c, cf @ B))
    L_vv = eps_bar ** 2 * (cf * A) @ cf.T

    H = np.zeros((2 * t - 1, 2 * t - 1))
    H[:t, :t] = P_pp + L_pp
    H[:t, t:] = P_pv + L_pv
    H[t:, :t] = (P_pv + L_pv).T
    H[t:, t:] = P_vv + L_vv
    return H


def psi_star_value(trace: AmpTrace, sol: RsSolution,
                   rule: Optional[QuadratureRule] = None) -> float:
    """Psi at (pi_star, varpi_star): the finite-N version of
    -psi (1-q)/2 + alpha E L_q(sqrt(q) Z)."""
    pi_star, varpi_star = star_point(trace)
    return psi_functional(pi_star, varpi_star, trace, sol, eps_bar=0.0,
                          rule=rule)


# ---------------------------------------------------------------------------
# Pair functional


def a2_functional(lam: float, zeta: np.ndarray, trace: AmpTrace,
                  sol: RsSolution, l_cap: float,
                  rule: Optional[QuadratureRule] = None) -> float:
    if not abs(lam) < 1.0:
        raise ValueError(f"lambda must satisfy |lambda| < 1, got {lam}")
    ms = float(zeta @ zeta) / trace.M
    if ms > l_cap:
        raise CapViolationError(
            f"|zeta|^2/M = {ms!r} exceeds the cap L_cap = {l_cap!r}")
    r = rule if rule is not None else gauss_hermite()
    q, psi = sol.q, sol.psi
    q_lam = q + lam * lam * (1.0 - q)
    h_next = trace.h_stack[-1]
    xvals = h_next + math.sqrt(1.0 - q) * lam * zeta
    lvals = act.L(trace.spec, q_lam, xvals, rule=r)
    return psi * (1.0 - q) / (2.0 * (1.0 - lam * lam)) \
        + float(np.sum(lvals)) / trace.N


def a2_derivative0(zeta: np.ndarray, trace: AmpTrace, sol: RsSolution,
                   l_cap: float) -> float:
    ms = float(zeta @ zeta) / trace.M
    if ms > l_cap:
        raise CapViolationError(
            f"|zeta|^2/M = {ms!r} exceeds the cap L_cap = {l_cap!r}")
    n_next = trace.n_stack[-1]
    return math.sqrt(1.0 - sol.q) * float(n_next @ zeta) / trace.N


def admissible_zeta(trace: AmpTrace, l_cap: float, seed: int = 0,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Standard Gaussian in R^M with the c-frame components projected out,
    rescaled onto the cap boundary if |zeta|^2/M exceeds l_cap."""
    if rng is None:
        rng = np.random.default_rng(seed)
    zeta = rng.standard_normal(trace.M)
    zeta -= trace.c_frame.T @ (trace.c_frame @ zeta)
    ms = float(zeta @ zeta) / trace.M
    if ms > l_cap:
        zeta *= math.sqrt(l_cap / ms)
    return zeta


# ---------------------------------------------------------------------------
# Q-measure and the conditional first moment


def q_measure_sample(trace: AmpTrace, n_samples: int,
                     seed: int = 0) -> np.ndarray:
    """(n_samples, N) array of +-1 rows with independent coordinates,
    P(J_i = +1) = (1 + tanh(H^(t)_i)) / 2."""
    H_t = trace.H_stack[-1]
    p_plus = 0.5 * (1.0 + np.tanh(H_t))
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, trace.N))
    return np.where(u < p_plus[None, :], 1.0, -1.0)


def _log2cosh(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def conditional_first_moment_estimate(trace: AmpTrace, sol: RsSolution,
                                      n_samples: int, eps_bar: float,
                                      seed: int = 0,
                                      batch: int = 2048,
                                      rule: Optional[QuadratureRule] = None
                                      ) -> float:
    """Per-spin log of the conditional first moment:

        (1/N) [ sum_i log 2cosh(H^(t)_i) + log E_Q exp(N Psi(pi(J), varpi(J))) ]

    estimated over n_samples Q-draws in the log domain.  Comparable with the
    replica-symmetric free energy."""
    r = rule if rule is not None else gauss_hermite()
    N = trace.N
    H_t = trace.H_stack[-1]
    base = float(np.sum(_log2cosh(H_t))) / N
    rng = np.random.default_rng(seed)
    p_plus = 0.5 * (1.0 + np.tanh(H_t))
    # streaming log-sum-exp over batches
    lse_max = -math.inf
    lse_acc = 0.0
    n_finite = 0
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        u = rng.random((b, N))
        Jb = np.where(u < p_plus[None, :], 1.0, -1.0)
        for j in range(b):
            pi = trace.r_frame @ Jb[j] / math.sqrt(N)
            varpi = trace.y @ Jb[j] / N
            try:
                val = N * psi_functional(pi, varpi, trace, sol, eps_bar,
                                         rule=r)
            except (VanishingMassError, NumericalError):
                continue
            n_finite += 1
            if val > lse_max:
                lse_acc = lse_acc * math.exp(lse_max - val) + 1.0
                lse_max = val
            else:
                lse_acc += math.exp(val - lse_max)
        done += b
    if n_finite == 0:
        raise NumericalError("first-moment estimate degenerate: "
                             "all Q-samples gave Psi = -inf")
    log_mean = lse_max + math.log(lse_acc) - math.log(n_samples)
    return base + log_mean / N
