"""AMP simulation, Gram-Schmidt frames, conditioning and local-CLT checks.

The two-line iteration on sampled disorder G (M x N, i.i.d. standard
Gaussian) is

    H^{(s+1)} = G^T n^{(s)} / sqrt(N) - beta  m^{(s-1)},   m = tanh(H),
    h^{(s+1)} = G   m^{(s)} / sqrt(N) - beta' n^{(s-1)},   n = F_q(h),

started from m^{(0)} = 0, n^{(0)} = 0, m^{(1)} = sqrt(q) 1,
n^{(1)} = sqrt(psi/alpha) 1, with the Onsager coefficients taken from the
solved fixed point.  Modified Gram-Schmidt (with one reorthogonalization
pass) of the m- and n-iterates yields orthonormal frames r, c and the
empirical coefficient matrices Lambda_N, Gamma_N; whitening against the
theoretical Gamma/Lambda gives the coordinates x, y in which the iterates
look like i.i.d. Gaussian vectors.

Also here: the rank-one Gaussian conditioning formula, the recursive
projection/resampling identity behind it, and the local-CLT covariance
Sigma with its Monte Carlo verification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from . import activation as act
from .errors import CollinearityError, NumericalError, VanishingMassError
from .quadrature import QuadratureRule, gauss_hermite
from .rs import RsSolution
from .sevol import SeTrace, se_run

SAMPLER_ID = "numpy.random.default_rng(PCG64).standard_normal"
PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class AmpTrace:
    """One seeded AMP run with all derived geometry.

    Stack layouts (rows):
        m_stack: m^(1) .. m^(t)          (t x N)
        n_stack: n^(1) .. n^(t+1)        ((t+1) x M)
        H_stack: H^(2) .. H^(t)          ((t-1) x N)
        h_stack: h^(2) .. h^(t+1)        (t x M)
        r_frame: orthonormalized m-iterates   (t x N)
        c_frame: orthonormalized n^(1..t-1)   ((t-1) x M)
        x: whitened h-stack              (t x M)
        y: whitened H-stack              ((t-1) x N)
    """

    G: np.ndarray
    m_stack: np.ndarray
    n_stack: np.ndarray
    H_stack: np.ndarray
    h_stack: np.ndarray
    r_frame: np.ndarray
    c_frame: np.ndarray
    Lambda_N: np.ndarray
    Gamma_N: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int
    N: int
    M: int
    t: int
    spec: act.ActivationSpec
    sol: RsSolution
    se: SeTrace
    sampler: str = SAMPLER_ID


def gram_schmidt(rows: np.ndarray, pivot_tol: float) -> Tuple[np.ndarray,
                                                              np.ndarray]:
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Returns (frame, coeffs) with rows = coeffs @ frame, coeffs lower
    triangular with positive diagonal.  Raises CollinearityError when a
    pivot falls below pivot_tol.
    """
    k, _ = rows.shape
    frame = np.zeros_like(rows, dtype=float)
    coeffs = np.zeros((k, k))
    for s in range(k):
        v = rows[s].astype(float).copy()
        for _ in range(2):  # MGS + one reorthogonalization
            for j in range(s):
                c = float(np.dot(v, frame[j]))
                coeffs[s, j] += c
                v -= c * frame[j]
        pivot = float(np.linalg.norm(v))
        if pivot < pivot_tol:
            raise CollinearityError(
                f"iterate collinearity at step {s + 1}: "
                f"pivot {pivot:.3e} < {pivot_tol:.3e}")
        coeffs[s, s] = pivot
        frame[s] = v / pivot
    return frame, coeffs


def amp_run(spec: act.ActivationSpec, sol: RsSolution, N: int,
            t_max: int = 6, seed: int = 0,
            rule: Optional[QuadratureRule] = None,
            se: Optional[SeTrace] = None) -> AmpTrace:
    """Run t_max AMP steps at size N with seeded disorder."""
    if N < 16:
        raise ValueError(f"N must be >= 16, got {N}")
    if t_max < 2:
        raise ValueError(f"t_max must be >= 2, got {t_max}")
    if not sol.converged or sol.q <= 0 or sol.psi <= 0:
        raise NumericalError(
            "amp_run needs a converged fixed point with q, psi > 0")
    r = rule if rule is not None else gauss_hermite()
    M = int(round(sol.alpha * N))
    if M < 1:
        raise ValueError(f"alpha N rounds to M={M}; need M >= 1")
    q, psi, alpha = sol.q, sol.psi, sol.alpha
    beta, beta_acute = sol.beta, sol.beta_acute
    t = t_max
    if se is None:
        se = se_run(spec, sol, t_max=t, eps_conv=0.0, rule=r)
    if se.t < t:
        raise ValueError(f"state-evolution trace has t={se.t} < {t}")

    rng = np.random.default_rng(seed)
    G = rng.standard_normal((M, N))
    sqN = math.sqrt(N)

    m = [np.zeros(N), math.sqrt(q) * np.ones(N)]          # m^(0), m^(1)
    n = [np.zeros(M), math.sqrt(psi / alpha) * np.ones(M)]  # n^(0), n^(1)
    H: List[np.ndarray] = []  # H^(2) ..
    h: List[np.ndarray] = []  # h^(2) ..
    for s in range(1, t + 1):
        h_next = G @ m[s] / sqN - beta_acute * n[s - 1]
        h.append(h_next)
        n.append(np.asarray(act.F(spec, q, h_next, rule=r)))
        if s <= t - 1:
            H_next = G.T @ n[s] / sqN - beta * m[s - 1]
            H.append(H_next)
            m.append(np.tanh(H_next))

    m_stack = np.vstack(m[1:t + 1])
    n_stack = np.vstack(n[1:t + 2])
    H_stack = np.vstack(H)
    h_stack = np.vstack(h)

    r_frame, m_coef = gram_schmidt(m_stack, PIVOT_TOL * sqN)
    Lambda_N = m_coef / math.sqrt(N * q)
    c_frame, n_coef = gram_schmidt(n_stack[:t - 1], PIVOT_TOL * math.sqrt(M))
    Gamma_N = n_coef / math.sqrt(N * psi)

    Lam = se.Lambda_mat[:t, :t]
    Gam = se.Gamma_mat[:t - 1, :t - 1]
    x = solve_triangular(Lam, h_stack, lower=True) / math.sqrt(q)
    y = solve_triangular(Gam, H_stack, lower=True) / math.sqrt(psi)

    return AmpTrace(G=G, m_stack=m_stack, n_stack=n_stack, H_stack=H_stack,
                    h_stack=h_stack, r_frame=r_frame, c_frame=c_frame,
                    Lambda_N=Lambda_N, Gamma_N=Gamma_N, x=x, y=y, seed=seed,
                    N=N, M=M, t=t, spec=spec, sol=sol, se=se)


@dataclass(frozen=True)
class CheckRow:
    quantity: str
    predicted: float
    empirical: float

    @property
    def abs_dev(self) -> float:
        return abs(self.predicted - self.empirical)


def se_check(trace: AmpTrace, se: Optional[SeTrace] = None,
             sol: Optional[RsSolution] = None) -> List[CheckRow]:
    """Empirical-vs-predicted report for the state-evolution geometry."""
    se = se or trace.se
    sol = sol or trace.sol
    t, N, M = trace.t, trace.N, trace.M
    q, psi = sol.q, sol.psi
    rows: List[CheckRow] = []

    mm = trace.m_stack @ trace.m_stack.T / (N * q)
    for a in range(t):
        for b in range(a, t):
            pred = 1.0 if a == b else float(se.rho[min(a, b)])
            rows.append(CheckRow(f"m_overlap[{a + 1}:{b + 1}]", pred,
                                 float(mm[a, b])))
    nn = trace.n_stack[:t] @ trace.n_stack[:t].T / (N * psi)
    for a in range(t):
        for b in range(a, t):
            pred = 1.0 if a == b else float(se.mu[min(a, b)])
            rows.append(CheckRow(f"n_overlap[{a + 1}:{b + 1}]", pred,
                                 float(nn[a, b])))

    # y[t-1] m[t]^T / (N sqrt(q)) vs (0 | sqrt(psi/q)(1-q) Gamma^T)
    ym = trace.y @ trace.m_stack.T / (N * math.sqrt(q))
    coef = math.sqrt(psi / q) * (1.0 - q)
    tgt = np.zeros((t - 1, t))
    tgt[:, 1:] = coef * se.Gamma_mat[:t - 1, :t - 1].T
    for a in range(t - 1):
        for b in range(t):
            rows.append(CheckRow(f"y_dot_m[{a + 1}:{b + 1}]",
                                 float(tgt[a, b]), float(ym[a, b])))

    xx = trace.x @ trace.x.T / M
    for a in range(t):
        for b in range(a, t):
            rows.append(CheckRow(f"x_cov[{a + 1}:{b + 1}]",
                                 1.0 if a == b else 0.0, float(xx[a, b])))
    yy = trace.y @ trace.y.T / N
    for a in range(t - 1):
        for b in range(a, t - 1):
            rows.append(CheckRow(f"y_cov[{a + 1}:{b + 1}]",
                                 1.0 if a == b else 0.0, float(yy[a, b])))
    return rows


def check_csv_rows(report: List[CheckRow]) -> List[str]:
    f = "{:.17g}".format
    return [f"{r.quantity},{f(r.predicted)},{f(r.empirical)},{f(r.abs_dev)}"
            for r in report]


def condition_project(G: np.ndarray, r: np.ndarray,
                      c: np.ndarray) -> np.ndarray:
    """Conditional mean of G given (Gr, G^T c) for unit vectors r, c:

        (Gr) r^T + c (G^T c)^T - (c^T G r) c r^T.
    """
    nr = float(np.linalg.norm(r))
    nc = float(np.linalg.norm(c))
    if abs(nr - 1.0) > 1e-10 or abs(nc - 1.0) > 1e-10:
        raise ValueError(
            f"condition_project needs unit vectors; got |r|={nr!r}, "
            f"|c|={nc!r}")
    Gr = G @ r
    Gc = G.T @ c
    return (np.outer(Gr, r) + np.outer(c, Gc)
            - float(c @ Gr) * np.outer(c, r))


@dataclass(frozen=True)
class ResampleReport:
    max_r_annihilation: float
    max_c_annihilation: float
    second_moments: np.ndarray  # per test direction
    first_moments: np.ndarray
    n_samples: int
    tolerance: float

    @property
    def passed(self) -> bool:
        tol = self.tolerance
        return (self.max_r_annihilation <= 1e-8
                and self.max_c_annihilation <= 1e-8
                and bool(np.all(np.abs(self.second_moments - 1.0) <= tol)))


def _residual_map(Gb: np.ndarray, r_frame: np.ndarray,
                  c_frame: np.ndarray) -> np.ndarray:
    """G - sum_s Gamma^(s) applied batchwise via the recursive formula."""
    out = Gb.astype(float).copy()
    t = r_frame.shape[0]
    for s in range(t):
        rs = r_frame[s]
        cs = c_frame[s] if s < c_frame.shape[0] else None
        Gr = out @ rs                                        # (B, M)
        if cs is None:
            out -= Gr[:, :, None] * rs[None, None, :]
            continue
        Gc = np.einsum("m,bmn->bn", cs, out)                 # (B, N)
        crG = np.einsum("bm,m->b", Gr, cs)                   # (B,)
        out -= (Gr[:, :, None] * rs[None, None, :]
                + cs[None, :, None] * Gc[:, None, :]
                - crG[:, None, None]
                * (np.outer(cs, rs))[None, :, :])
    return out


def resample_check(trace: AmpTrace, n_samples: int = 100_000,
                   seed: int = 1, n_directions: int = 8,
                   batch: int = 4096) -> ResampleReport:
    """Verify the conditioning residual annihilates the frames and acts as
    a standard Gaussian on directions orthogonal to the conditioned span."""
    r_frame = trace.r_frame
    # extended c-frame: orthonormalize n^(1..t) (one more than the trace's)
    c_frame, _ = gram_schmidt(trace.n_stack[:trace.t],
                              PIVOT_TOL * math.sqrt(trace.M))
    resid = _residual_map(trace.G[None], r_frame, c_frame)[0]
    max_r = max(float(np.abs(resid @ r).max()) for r in r_frame)
    max_c = max(float(np.abs(resid.T @ c).max()) for c in c_frame)

    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_directions, trace.M, trace.N))
    dirs = _residual_map(dirs, r_frame, c_frame)
    dirs /= np.linalg.norm(dirs.reshape(n_directions, -1),
                           axis=1)[:, None, None]

    sq_sum = np.zeros(n_directions)
    first_sum = np.zeros(n_directions)
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        Gb = rng.standard_normal((b, trace.M, trace.N))
        Pb = _residual_map(Gb, r_frame, c_frame)
        v = np.einsum("bmn,kmn->bk", Pb, dirs)
        sq_sum += np.sum(v * v, axis=0)
        first_sum += np.sum(v, axis=0)
        done += b
    return ResampleReport(
        max_r_annihilation=max_r, max_c_annihilation=max_c,
        second_moments=sq_sum / n_samples, first_moments=first_sum / n_samples,
        n_samples=n_samples, tolerance=5.0 / math.sqrt(n_samples))


@dataclass(frozen=True)
class ConditionalMeanReport:
    mean_formula: np.ndarray
    mean_empirical: np.ndarray
    stderr: np.ndarray
    max_abs_z: float
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.max_abs_z <= 4.0


def conditional_resample(G0: np.ndarray, r: np.ndarray, c: np.ndarray,
                         xbar: np.ndarray, ybar: np.ndarray) -> np.ndarray:
    """Turn fresh Gaussians G0 (batched (B, M, N)) into samples conditioned
    on G r = xbar and G^T c = ybar, by swapping the rank-one statistics:

        G_cond = Gamma(r, c, xbar, ybar) + G0 - Gamma(r, c, G0 r, G0^T c).
    """
    def gamma(Gr, Gc):
        crG = Gr @ c
        return (Gr[..., :, None] * r[None, None, :]
                + c[None, :, None] * Gc[..., None, :]
                - crG[..., None, None] * np.outer(c, r)[None, :, :])

    target = gamma(np.broadcast_to(xbar, G0.shape[:-2] + xbar.shape),
                   np.broadcast_to(ybar, G0.shape[:-2] + ybar.shape))
    Gr0 = G0 @ r
    Gc0 = np.einsum("m,bmn->bn", c, G0)
    return target + G0 - gamma(Gr0, Gc0)


def conditional_mean_check(M: int, N: int, n_samples: int = 100_000,
                           seed: int = 3,
                           batch: int = 2048) -> ConditionalMeanReport:
    """Monte Carlo check that the conditional mean of G given (Gr, G^T c)
    matches the closed rank-one formula entrywise within sampling error."""
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(N)
    r /= np.linalg.norm(r)
    c = rng.standard_normal(M)
    c /= np.linalg.norm(c)
    xbar = rng.standard_normal(M)
    ybar = rng.standard_normal(N)
    # consistency of the two observed statistics: c^T(Gr) = (G^T c)^T r
    ybar += (xbar @ c - ybar @ r) * r
    formula = (np.outer(xbar, r) + np.outer(c, ybar)
               - float(c @ xbar) * np.outer(c, r))

    s1 = np.zeros((M, N))
    s2 = np.zeros((M, N))
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        Gb = conditional_resample(rng.standard_normal((b, M, N)), r, c,
                                  xbar, ybar)
        s1 += Gb.sum(axis=0)
        s2 += np.square(Gb).sum(axis=0)
        done += b
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean ** 2, 1e-30)
    stderr = np.sqrt(var / n_samples)
    z = np.abs(mean - formula) / stderr
    return ConditionalMeanReport(mean_formula=formula, mean_empirical=mean,
                                 stderr=stderr, max_abs_z=float(z.max()),
                                 n_samples=n_samples)


# ---------------------------------------------------------------------------
# Local-CLT covariance


def _pi_coordinates(trace: AmpTrace, J: np.ndarray):
    """(pi, pi_hat, c(pi)) of a configuration against the trace frames."""
    sqN = math.sqrt(trace.N)
    pi = trace.r_frame @ J / sqN
    pi_hat = solve_triangular(trace.Lambda_N.T, pi, lower=False)
    norm2 = float(pi @ pi)
    if norm2 >= 1.0:
        raise NumericalError(
            f"configuration has |pi|^2={norm2!r} >= 1; X is undefined")
    return pi, pi_hat, math.sqrt(1.0 - norm2)


def field_X(trace: AmpTrace, J: np.ndarray,
            tau: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """The M-vector X_{J,tau} entering the local CLT, and the scale c(pi)."""
    sol = trace.sol
    pi, pi_hat, cpi = _pi_coordinates(trace, J)
    sq = math.sqrt(sol.q)
    X = trace.h_stack.T @ pi_hat / sq
    X += (1.0 - sol.q) * (trace.n_stack[:trace.t - 1].T @ pi_hat[1:]) / sq
    if tau is not None:
        X += math.sqrt(trace.N) * cpi * (trace.c_frame.T @ tau)
    return X, cpi


def sigma_cov(trace: AmpTrace, J: np.ndarray,
              tau: Optional[np.ndarray] = None,
              rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """Sigma = (1/N) sum_a Var(zeta_a) n_a n_a^T over the first t-1 n-iterates,
    with zeta_a tilted by U at (X_a, c(pi))."""
    pi = trace.r_frame @ J / math.sqrt(trace.N)
    if float(np.linalg.norm(pi)) > 0.8:
        raise NumericalError(
            f"|pi(J)|={float(np.linalg.norm(pi))!r} > 4/5; "
            "sigma_cov requires a typical configuration")
    X, cpi = field_X(trace, J, tau)
    r = rule if rule is not None else gauss_hermite()
    mass = act.raw_moments(trace.spec, X, cpi, 0, rule=r)[0]
    ok = mass >= act.mass_floor(trace.spec)
    n_skip = int(np.sum(~ok))
    if n_skip > 0.01 * trace.M:
        raise VanishingMassError(
            f"sigma_cov: {n_skip}/{trace.M} coordinates have vanishing "
            "tilted mass", float(mass.min()))
    mom = act.tilted_moments(trace.spec, X[ok], cpi, 2, rule=r)
    var = mom[2] - np.square(mom[1])
    nsub = trace.n_stack[:trace.t - 1][:, ok]
    return (nsub * var) @ nsub.T / trace.N


def _inverse_cdf_table(spec: act.ActivationSpec, x: float, c: float,
                       n_grid: int = 4096):
    """Tabulated CDF of the tilted density U(x + c z) phi(z) on [-10, 10]."""
    z = np.linspace(-10.0, 10.0, n_grid)
    dens = np.atleast_1d(act.eval_U(spec, x + c * z)) * \
        np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5
                                           * np.diff(z))])
    total = cdf[-1]
    if total <= 0:
        raise VanishingMassError(
            f"inverse-CDF table: zero mass at x={x:.6g}, c={c:.6g}", 0.0)
    return z, cdf / total


@dataclass(frozen=True)
class CltReport:
    sigma: np.ndarray
    cov_empirical: np.ndarray
    max_abs_dev: float
    n_samples: int
    skipped: int


def clt_cov_check(trace: AmpTrace, J: np.ndarray,
                  tau: Optional[np.ndarray] = None,
                  n_samples: int = 100_000, seed: int = 2,
                  rule: Optional[QuadratureRule] = None) -> CltReport:
    """Sample the independent zeta_a by inverse CDF and compare the
    empirical covariance of W = n[t-1](zeta - E zeta)/sqrt(N) with Sigma."""
    r = rule if rule is not None else gauss_hermite()
    sigma = sigma_cov(trace, J, tau, rule=r)
    X, cpi = field_X(trace, J, tau)
    mass = act.raw_moments(trace.spec, X, cpi, 0, rule=r)[0]
    ok = mass >= act.mass_floor(trace.spec)
    Xok = X[ok]
    mean = act.tilted_moments(trace.spec, Xok, cpi, 1, rule=r)[1]

    # bucket X_a to 1e-3 so equal coordinates share one CDF table
    keys = np.round(Xok / 1e-3).astype(np.int64)
    rng = np.random.default_rng(seed)
    Mok = Xok.size
    zeta = np.empty((n_samples, Mok))
    for key in np.unique(keys):
        idx = np.where(keys == key)[0]
        zg, cdf = _inverse_cdf_table(trace.spec, float(key) * 1e-3, cpi)
        u = rng.random((n_samples, idx.size))
        zeta[:, idx] = np.interp(u, cdf, zg)
    W = (zeta - mean) @ trace.n_stack[:trace.t - 1][:, ok].T \
        / math.sqrt(trace.N)
    cov = W.T @ W / n_samples - np.outer(W.mean(0), W.mean(0))
    return CltReport(sigma=sigma, cov_empirical=cov,
                     max_abs_dev=float(np.abs(cov - sigma).max()),
                     n_samples=n_samples, skipped=int(np.sum(~ok)))
