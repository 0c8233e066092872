"""Activation functions U and their derived Gaussian functionals.

An activation is a measurable map U: R -> [0,1].  Everything downstream
(free energies, AMP nonlinearities, Hessian ingredients) is an expectation
of U against a shifted/scaled Gaussian, or a moment of the tilted measure

    mu_{x,c}(dz)  proportional to  U(x + c z) phi(z) dz.

Derivatives of U are never taken pointwise.  Every functional that formally
involves U' or U'' is rewritten, via Gaussian integration by parts, as a
ratio of tilted moments E_{x,c}(Z^p) with p <= 4.  This keeps indicator
activations (halfspace, band) first-class citizens: their tilted moments
have exact truncated-normal closed forms, and the same code path then
covers smooth activations through quadrature.

Key identities (c = sqrt(1-q), m_p = E_{x,c}(Z^p)):

    L_q(x)   = log E_xi U(x + c xi)
    F_q(x)   = d/dx L_q(x)            = m_1 / c
    F_q'(x)  = (m_2 - m_1^2 - 1) / c^2
    A_c(x)   = F' at overlap 1 - c^2  = (Var(Z) - 1) / c^2
    B_c(x)   = d/dc d/dx log-mass     = (m_3 - m_1 m_2 - 2 m_1) / c^2
    a_c(x)   = d/dc log-mass          = (m_2 - 1) / c
    b_c(x)   = d^2/dc^2-type term     = (m_4 - m_2^2 - 3 m_2 + 1) / c^2
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import VanishingMassError
from .quadrature import QuadratureRule, gauss_hermite

# Denominator floors.  The closed-form (truncated normal) path is accurate
# down to the smallest positive double; quadrature cannot resolve masses
# below its own discretization error.
EPS_DEN_CLOSED = 1e-300
EPS_DEN_QUAD = 1e-14

_SQRT_2PI = math.sqrt(2.0 * math.pi)

_KINDS = ("halfspace", "band", "gauss_bump", "clipped_exp", "tabulated")


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


@dataclass(frozen=True)
class ActivationSpec:
    """An activation U with the metadata needed by the numerical engine.

    Fields
    ------
    kind : one of halfspace, band, gauss_bump, clipped_exp, tabulated
    params : kind-specific parameter tuple
        halfspace: (kappa,); band: (a, b); gauss_bump: (center, sigma);
        clipped_exp: (rate,) for U(x) = min(1, exp(rate * x)).
    eta : smoothing width; eta > 0 replaces U by U_eta(x) = E U(x + eta xi)
    delta_prime : lower-bound constant on the support interval
    support_interval : closed interval on which U > delta_prime
    closed_form : whether Gaussian masses/moments have exact formulas
    table_x, table_v : data grid for the tabulated kind (strictly increasing
        x, values in [0,1], linear interpolation, clamp outside with warning)
    """

    kind: str
    params: Tuple[float, ...] = ()
    eta: float = 0.0
    delta_prime: float = 0.5
    support_interval: Tuple[float, float] = (-1.0, 1.0)
    closed_form: bool = False
    table_x: Optional[np.ndarray] = field(default=None, repr=False)
    table_v: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.eta < 0:
            raise ValueError(f"smoothing width must be >= 0, got {self.eta}")

    def describe(self) -> str:
        p = ",".join(f"{v:g}" for v in self.params)
        tail = f";eta={self.eta:g}" if self.eta > 0 else ""
        return f"{self.kind}({p}){tail}"


def halfspace(kappa: float = 0.0, eta: float = 0.0) -> ActivationSpec:
    """U(x) = 1{x >= kappa}."""
    return ActivationSpec(
        kind="halfspace", params=(float(kappa),), eta=float(eta),
        delta_prime=0.5, support_interval=(kappa, kappa + 6.0),
        closed_form=True)


def band(a: float, b: float, eta: float = 0.0) -> ActivationSpec:
    """U(x) = 1{a <= x <= b}."""
    if not a < b:
        raise ValueError(f"band requires a < b, got ({a}, {b})")
    return ActivationSpec(
        kind="band", params=(float(a), float(b)), eta=float(eta),
        delta_prime=0.5, support_interval=(a, b), closed_form=True)


def gauss_bump(center: float = 0.0, sigma: float = 1.0,
               eta: float = 0.0) -> ActivationSpec:
    """U(x) = exp(-(x-center)^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError(f"gauss_bump sigma must be > 0, got {sigma}")
    return ActivationSpec(
        kind="gauss_bump", params=(float(center), float(sigma)),
        eta=float(eta), delta_prime=0.5 * math.exp(-0.5),
        support_interval=(center - sigma, center + sigma), closed_form=True)


def clipped_exp(rate: float = 1.0, eta: float = 0.0) -> ActivationSpec:
    """U(x) = min(1, exp(rate * x)) for rate > 0 (continuous, kinked at 0)."""
    if rate <= 0:
        raise ValueError(f"clipped_exp rate must be > 0, got {rate}")
    return ActivationSpec(
        kind="clipped_exp", params=(float(rate),), eta=float(eta),
        delta_prime=0.5 * math.exp(-rate), support_interval=(-1.0, 1.0),
        closed_form=False)


def tabulated(table_x, table_v, eta: float = 0.0) -> ActivationSpec:
    """Piecewise-linear activation from a data grid."""
    x = np.asarray(table_x, dtype=float)
    v = np.asarray(table_v, dtype=float)
    if x.ndim != 1 or x.shape != v.shape or x.size < 2:
        raise ValueError("tabulated grid needs matching 1-D arrays, length >= 2")
    if not np.all(np.diff(x) > 0):
        raise ValueError("tabulated grid x values must be strictly increasing")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("tabulated values must lie in [0, 1]")
    vmax = float(v.max())
    if vmax <= 0:
        raise ValueError("tabulated activation is identically zero")
    x = x.copy(); v = v.copy()
    x.setflags(write=False); v.setflags(write=False)
    imax = int(np.argmax(v))
    return ActivationSpec(
        kind="tabulated", params=(), eta=float(eta),
        delta_prime=0.5 * vmax, support_interval=(x[imax], x[imax]),
        closed_form=False, table_x=x, table_v=v)


def tabulated_from_file(path: str, eta: float = 0.0) -> ActivationSpec:
    """Load a two-column (whitespace- or comma-separated) activation table."""
    text = Path(path).read_text()
    delimiter = "," if "," in text.split("\n", 1)[0] else None
    data = np.loadtxt(path, dtype=float, delimiter=delimiter)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (x, value)")
    return tabulated(data[:, 0], data[:, 1], eta=eta)


def smooth(spec: ActivationSpec, eta: float) -> ActivationSpec:
    """Return the spec for U_eta(x) = E U(x + eta xi).

    Smoothing widths compose in quadrature: smoothing an already-smoothed
    spec yields total width sqrt(eta_old^2 + eta_new^2).
    """
    if eta < 0:
        raise ValueError(f"smoothing width must be >= 0, got {eta}")
    total = math.hypot(spec.eta, eta)
    return replace(spec, eta=total)


# ---------------------------------------------------------------------------
# Pointwise evaluation


def _eval_base(spec: ActivationSpec, x: np.ndarray) -> np.ndarray:
    """U(x) without smoothing."""
    if spec.kind == "halfspace":
        (kappa,) = spec.params
        return (x >= kappa).astype(float)
    if spec.kind == "band":
        a, b = spec.params
        return ((x >= a) & (x <= b)).astype(float)
    if spec.kind == "gauss_bump":
        m, s = spec.params
        return np.exp(-0.5 * np.square((x - m) / s))
    if spec.kind == "clipped_exp":
        (rate,) = spec.params
        return np.exp(rate * np.minimum(x, 0.0))
    # tabulated
    lo, hi = spec.table_x[0], spec.table_x[-1]
    xa = np.asarray(x, dtype=float)
    if np.any(xa < lo) or np.any(xa > hi):
        warnings.warn(
            f"tabulated activation evaluated outside [{lo:g}, {hi:g}]; "
            "clamping to nearest grid value", stacklevel=3)
    return np.interp(xa, spec.table_x, spec.table_v)


def eval_U(spec: ActivationSpec, x, rule: Optional[QuadratureRule] = None):
    """Evaluate U(x) (or U_eta(x) when the spec carries a smoothing width).

    Accepts scalars or arrays; returns the same shape, values in [0, 1].
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    eta = spec.eta
    if eta == 0.0:
        out = _eval_base(spec, xa)
    elif spec.kind == "halfspace":
        (kappa,) = spec.params
        out = ndtr((xa - kappa) / eta)
    elif spec.kind == "band":
        a, b = spec.params
        out = ndtr((b - xa) / eta) - ndtr((a - xa) / eta)
    elif spec.kind == "gauss_bump":
        m, s = spec.params
        s2 = s * s + eta * eta
        out = s / math.sqrt(s2) * np.exp(-0.5 * np.square(xa - m) / s2)
    elif spec.kind == "clipped_exp":
        (rate,) = spec.params
        # E[exp(rate(x+eta xi)); x+eta xi < 0] + P(x+eta xi >= 0)
        out = (np.exp(rate * xa + 0.5 * rate * rate * eta * eta
                      + log_ndtr(-xa / eta - rate * eta))
               + ndtr(xa / eta))
    else:  # tabulated: inner quadrature against the smoothing kernel
        r = rule or _default_rule()
        base = replace(spec, eta=0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals = _eval_base(base, xa[..., None] + eta * r.nodes)
        out = vals @ r.weights
    out = np.clip(out, 0.0, 1.0)
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


_DEFAULT_RULE: Optional[QuadratureRule] = None


def _default_rule() -> QuadratureRule:
    global _DEFAULT_RULE
    if _DEFAULT_RULE is None:
        _DEFAULT_RULE = gauss_hermite()
    return _DEFAULT_RULE


# ---------------------------------------------------------------------------
# Truncated-normal helpers (closed-form path for indicator activations)


def _interval_in_xi(spec: ActivationSpec, x: np.ndarray, c: float):
    """Indicator support {a <= x + c xi <= b} as xi-space endpoints."""
    if spec.kind == "halfspace":
        (kappa,) = spec.params
        lo = (kappa - x) / c
        hi = np.full_like(lo, np.inf)
    else:
        a, b = spec.params
        lo = (a - x) / c
        hi = (b - x) / c
    return lo, hi


def _pow_phi(z: np.ndarray, p: int) -> np.ndarray:
    """z^p phi(z) with the convention that it vanishes at +-inf."""
    out = np.zeros_like(z)
    finite = np.isfinite(z)
    zf = z[finite]
    out[finite] = zf**p * _phi(zf) if p > 0 else _phi(zf)
    return out


def trunc_moments(lo: np.ndarray, hi: np.ndarray, pmax: int) -> np.ndarray:
    """I_p = integral_lo^hi z^p phi(z) dz for p = 0..pmax, vectorized.

    Recursion: I_p = (p-1) I_{p-2} + lo^{p-1} phi(lo) - hi^{p-1} phi(hi).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty((pmax + 1,) + lo.shape)
    phi_lo = _pow_phi(lo, 0)
    phi_hi = _pow_phi(hi, 0)
    ndtr_lo = np.where(np.isfinite(lo), ndtr(lo), (lo > 0).astype(float))
    ndtr_hi = np.where(np.isfinite(hi), ndtr(hi), (hi > 0).astype(float))
    # complementary form on far-right intervals, where Phi(hi) - Phi(lo)
    # would cancel to zero in double precision
    ndtr_mlo = np.where(np.isfinite(lo), ndtr(-lo), (lo < 0).astype(float))
    ndtr_mhi = np.where(np.isfinite(hi), ndtr(-hi), (hi < 0).astype(float))
    with np.errstate(invalid="ignore"):
        right = lo + hi > 0
    out[0] = np.where(right, ndtr_mlo - ndtr_mhi, ndtr_hi - ndtr_lo)
    if pmax >= 1:
        out[1] = phi_lo - phi_hi
    for p in range(2, pmax + 1):
        out[p] = (p - 1) * out[p - 2] + _pow_phi(lo, p - 1) - _pow_phi(hi, p - 1)
    return out


def trunc_abs_moments(lo: np.ndarray, hi: np.ndarray, pmax: int) -> np.ndarray:
    """J_p = integral_lo^hi |z|^p phi(z) dz for p = 0..pmax, vectorized."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # split at zero; clamp both endpoints so empty halves integrate to zero
    neg = trunc_moments(np.minimum(lo, 0.0), np.minimum(hi, 0.0), pmax)
    pos = trunc_moments(np.maximum(lo, 0.0), np.maximum(hi, 0.0), pmax)
    signs = np.array([(-1.0)**p for p in range(pmax + 1)])
    return signs[(...,) + (None,) * lo.ndim] * neg + pos


def _log_diff_ndtr(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """log(Phi(hi) - Phi(lo)) computed stably in both tails."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty_like(lo)
    # reflect so that the interval midpoint is <= 0, then use log_ndtr
    flip = lo + hi > 0
    a = np.where(flip, -hi, lo)
    b = np.where(flip, -lo, hi)
    # now Phi(b) - Phi(a) with b "closer to the bulk": log-diff-exp
    la = log_ndtr(a)
    lb = log_ndtr(b)
    with np.errstate(divide="ignore"):
        out = lb + np.log1p(-np.exp(np.minimum(la - lb, 0.0)))
    return out


# ---------------------------------------------------------------------------
# Masses and tilted moments


def _effective(spec: ActivationSpec, c: float) -> Tuple[ActivationSpec, float]:
    """Fold the smoothing width into the Gaussian scale where exact.

    For E_xi U_eta(x + c xi) with U an indicator or gauss_bump, the
    convolution merges into an effective scale sqrt(c^2 + eta^2) on the
    unsmoothed activation.  Valid for masses (p = 0) only.
    """
    if spec.eta > 0 and spec.kind in ("halfspace", "band", "gauss_bump"):
        return replace(spec, eta=0.0), math.hypot(c, spec.eta)
    return spec, c


def log_mass(spec: ActivationSpec, x, c: float,
             rule: Optional[QuadratureRule] = None) -> np.ndarray:
    """log E_xi U(x + c xi), elementwise over x, computed stably."""
    if c <= 0:
        raise ValueError(f"scale c must be > 0, got {c}")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    base, ceff = _effective(spec, c)
    if base.kind in ("halfspace", "band") and base.eta == 0.0:
        lo, hi = _interval_in_xi(base, xa, ceff)
        if base.kind == "halfspace":
            out = log_ndtr(-lo)
        else:
            out = _log_diff_ndtr(lo, hi)
    elif base.kind == "gauss_bump" and base.eta == 0.0:
        m, s = base.params
        s2 = s * s + ceff * ceff
        out = math.log(s) - 0.5 * math.log(s2) - 0.5 * np.square(xa - m) / s2
    else:
        raw = _raw_moments_generic(spec, xa, c, 0, rule)[0]
        with np.errstate(divide="ignore"):
            out = np.log(np.maximum(raw, 0.0))
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


def _raw_moments_generic(spec: ActivationSpec, xa: np.ndarray, c: float,
                         pmax: int, rule: Optional[QuadratureRule],
                         absolute: bool = False) -> np.ndarray:
    """N_p = E[xi^p U(x + c xi)] for p = 0..pmax on the quadrature path."""
    kinked = (spec.kind in ("tabulated", "clipped_exp", "halfspace", "band")
              and spec.eta == 0.0)
    if kinked:
        flat = xa.ravel()
        out = np.empty((pmax + 1, flat.size))
        gl_nodes, gl_weights = _leggauss_cached()
        for i, xi0 in enumerate(flat):
            # split at the activation's kinks (and at 0 for |z|^p) so the
            # composite rule never steps blindly over a discontinuity
            pts = [-10.0, 10.0, 0.0]
            pts += [(k - xi0) / c for k in _kink_locations(spec)]
            pts = sorted(p for p in pts if -10.0 <= p <= 10.0)
            if pts[0] != -10.0:
                pts.insert(0, -10.0)
            if pts[-1] != 10.0:
                pts.append(10.0)
            # composite Gauss-Legendre: subdivide each smooth piece into
            # panels of length <= 1, all nodes evaluated in one vector call
            mids = []
            halfs = []
            for lo_z, hi_z in zip(pts[:-1], pts[1:]):
                if hi_z <= lo_z:
                    continue
                n_sub = max(1, int(math.ceil(hi_z - lo_z)))
                edges = np.linspace(lo_z, hi_z, n_sub + 1)
                mids.append(0.5 * (edges[1:] + edges[:-1]))
                halfs.append(np.full(n_sub, 0.5 * (edges[1] - edges[0])))
            mid = np.concatenate(mids)
            half = np.concatenate(halfs)
            z = mid[:, None] + half[:, None] * gl_nodes[None, :]
            w = half[:, None] * gl_weights[None, :]
            u = np.atleast_2d(np.asarray(eval_U(spec, xi0 + c * z),
                                         dtype=float))
            base_w = w * u * _phi(z)
            zp = np.abs(z) if absolute else z
            zpow = np.ones_like(z)
            for p in range(pmax + 1):
                out[p, i] = float(np.sum(base_w * zpow))
                zpow = zpow * zp
        return out.reshape((pmax + 1,) + xa.shape)
    r = rule or _default_rule()
    u = eval_U(spec, xa[..., None] + c * r.nodes, rule=r)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    zp = np.abs(r.nodes) if absolute else r.nodes
    out = np.empty((pmax + 1,) + xa.shape)
    wz = r.weights.copy()
    for p in range(pmax + 1):
        out[p] = u @ wz
        wz = wz * zp
    return out


_LEGGAUSS_CACHE: Optional[tuple] = None


def _leggauss_cached(order: int = 24):
    global _LEGGAUSS_CACHE
    if _LEGGAUSS_CACHE is None or _LEGGAUSS_CACHE[0].size != order:
        _LEGGAUSS_CACHE = np.polynomial.legendre.leggauss(order)
    return _LEGGAUSS_CACHE


def _kink_locations(spec: ActivationSpec):
    """x-space points where the unsmoothed activation is not smooth."""
    if spec.kind == "halfspace":
        return [spec.params[0]]
    if spec.kind == "band":
        return list(spec.params)
    if spec.kind == "clipped_exp":
        return [0.0]
    if spec.kind == "tabulated":
        return list(spec.table_x)
    return []


def raw_moments(spec: ActivationSpec, x, c: float, pmax: int,
                rule: Optional[QuadratureRule] = None,
                absolute: bool = False) -> np.ndarray:
    """Unnormalized moments N_p = E[xi^p U(x + c xi)], p = 0..pmax.

    Shape (pmax + 1,) + shape(x).  Uses truncated-normal closed forms for
    unsmoothed indicators, quadrature otherwise.  With ``absolute`` the
    integrand is |xi|^p.
    """
    if c <= 0:
        raise ValueError(f"scale c must be > 0, got {c}")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if spec.kind in ("halfspace", "band") and spec.eta == 0.0:
        lo, hi = _interval_in_xi(spec, xa, c)
        mom = trunc_abs_moments(lo, hi, pmax) if absolute \
            else trunc_moments(lo, hi, pmax)
    else:
        mom = _raw_moments_generic(spec, xa, c, pmax, rule, absolute=absolute)
    return mom.reshape((pmax + 1,) + np.shape(np.asarray(x)))


def mass_floor(spec: ActivationSpec) -> float:
    """Denominator floor for the spec's computation path."""
    if spec.kind in ("halfspace", "band") and spec.eta == 0.0:
        return EPS_DEN_CLOSED
    return EPS_DEN_QUAD


def tilted_moments(spec: ActivationSpec, x, c: float, pmax: int,
                   rule: Optional[QuadratureRule] = None,
                   absolute: bool = False) -> np.ndarray:
    """m_p = E_{x,c}(Z^p) = N_p / N_0 for p = 0..pmax, elementwise over x."""
    mom = raw_moments(spec, x, c, pmax, rule=rule, absolute=absolute)
    if absolute:
        den = raw_moments(spec, x, c, 0, rule=rule)[0]
    else:
        den = mom[0]
    floor = mass_floor(spec)
    den_arr = np.atleast_1d(np.asarray(den, dtype=float))
    if np.any(den_arr < floor):
        raise VanishingMassError(
            f"vanishing tilted mass for {spec.describe()} at "
            f"x={np.atleast_1d(x)[np.argmin(den_arr)]:.6g}, c={c:.6g}",
            float(den_arr.min()))
    return mom / den


def tilted_moment(spec: ActivationSpec, x: float, c: float, p: int,
                  rule: Optional[QuadratureRule] = None) -> float:
    """E_{x,c}(Z^p) at a single point."""
    if p < 0:
        raise ValueError(f"moment order must be >= 0, got {p}")
    return float(np.asarray(tilted_moments(spec, x, c, p, rule=rule))[p])


# ---------------------------------------------------------------------------
# Derived functionals


def mean_score(spec: ActivationSpec,
               rule: Optional[QuadratureRule] = None) -> float:
    """E_xi[xi U(xi)]; nonzero iff the model leaves the annealed branch."""
    return float(np.asarray(raw_moments(spec, 0.0, 1.0, 1, rule=rule))[1])


def L(spec: ActivationSpec, q: float, x,
      rule: Optional[QuadratureRule] = None):
    """L_q(x) = log E_xi U(x + sqrt(1-q) xi).

    Raises VanishingMassError (the "L undefined" signal) when the mass is
    below the path's floor.
    """
    c = math.sqrt(1.0 - q)
    out = log_mass(spec, x, c, rule=rule)
    floor_log = math.log(mass_floor(spec))
    bad = np.atleast_1d(np.asarray(out)) < floor_log
    if np.any(bad):
        raise VanishingMassError(
            f"L undefined (-inf) for {spec.describe()} at q={q:.6g}",
            math.exp(float(np.min(np.atleast_1d(out)))))
    return out


def F(spec: ActivationSpec, q: float, x,
      rule: Optional[QuadratureRule] = None):
    """F_q(x) = (L_q)'(x) = E_{x,c}(Z) / c with c = sqrt(1-q)."""
    c = math.sqrt(1.0 - q)
    m = tilted_moments(spec, x, c, 1, rule=rule)
    out = m[1] / c
    return float(out) if np.ndim(x) == 0 else out


def F_prime(spec: ActivationSpec, q: float, x,
            rule: Optional[QuadratureRule] = None):
    """(F_q)'(x) = (Var_{x,c}(Z) - 1) / c^2 with c = sqrt(1-q)."""
    c = math.sqrt(1.0 - q)
    m = tilted_moments(spec, x, c, 2, rule=rule)
    out = (m[2] - np.square(m[1]) - 1.0) / (c * c)
    return float(out) if np.ndim(x) == 0 else out


def hess_ingredients(spec: ActivationSpec, x, c: float,
                     rule: Optional[QuadratureRule] = None):
    """The four log-mass derivative functionals (A, B, a, b) at (x, c).

    A = d2/dx2, B = d2/dxdc, a = d/dc, b = d2/dc2 of log E U(x + c xi),
    all expressed through tilted moments m_p = E_{x,c}(Z^p), p <= 4.
    """
    if not 0.0 < c <= 1.0:
        raise ValueError(f"hess_ingredients requires c in (0, 1], got {c}")
    m = tilted_moments(spec, x, c, 4, rule=rule)
    c2 = c * c
    A = (m[2] - np.square(m[1]) - 1.0) / c2
    B = (m[3] - m[1] * m[2] - 2.0 * m[1]) / c2
    a = (m[2] - 1.0) / c
    b = (m[4] - np.square(m[2]) - 3.0 * m[2] + 1.0) / c2
    if np.ndim(x) == 0:
        return float(A), float(B), float(a), float(b)
    return A, B, a, b


def validate(spec: ActivationSpec, n_grid: int = 201) -> None:
    """Check the Assumption-1 invariants on a sampled grid; raise on failure."""
    lo, hi = spec.support_interval
    grid = np.linspace(lo, hi, n_grid)
    vals = np.atleast_1d(eval_U(spec, grid))
    if np.any(vals < 0.0) or np.any(vals > 1.0):
        raise ValueError(f"{spec.describe()}: values outside [0,1]")
    if spec.delta_prime <= 0:
        raise ValueError(f"{spec.describe()}: delta_prime must be > 0")
    if np.any(vals <= spec.delta_prime):
        raise ValueError(
            f"{spec.describe()}: U <= delta_prime={spec.delta_prime:g} "
            f"inside the declared support interval")


# ---------------------------------------------------------------------------
# Empirical and proof-mode constants


@dataclass(frozen=True)
class GridConfig:
    """Grids over which the activation constants are maximized."""

    x: np.ndarray = field(
        default_factory=lambda: np.arange(-6.0, 6.0 + 1e-9, 0.5))
    c_k2: np.ndarray = field(
        default_factory=lambda: np.arange(0.5, 2.0 + 1e-9, 0.1))
    c_k2_prime: np.ndarray = field(
        default_factory=lambda: np.linspace(0.4, 7.0 / 3.0, 20))
    pmax: int = 8


@dataclass(frozen=True)
class ConstantsReport:
    """Empirical (grid-sup) and proof-mode constants for an activation."""

    c1_empirical: float
    k2_empirical: float
    k2_prime_empirical: float
    c1_proof: float
    cbar1: float
    alpha_threshold: float
    alpha_prime_threshold: float
    mode: str
    skipped_grid_points: int = 0


def _grid_sups(spec: ActivationSpec, xs, cs, pmax, rule):
    """Return (c1 sup, 2 Var sup, skipped count) over the (x, c) grid."""
    c1_sup = -math.inf
    var_sup = -math.inf
    skipped = 0
    floor = mass_floor(spec)
    for c in cs:
        mass = raw_moments(spec, xs, float(c), 0, rule=rule)[0]
        ok = mass >= floor
        skipped += int(np.sum(~ok))
        if not np.any(ok):
            continue
        x_ok = xs[ok]
        mabs = tilted_moments(spec, x_ok, float(c), pmax, rule=rule,
                              absolute=True)
        msgn = tilted_moments(spec, x_ok, float(c), 2, rule=rule)
        ratio = 1.82 * np.abs(x_ok) / c
        for p in range(pmax + 1):
            c1_sup = max(c1_sup, float(np.max(mabs[p] - ratio**p)))
        var = msgn[2] - np.square(msgn[1])
        var_sup = max(var_sup, 2.0 * float(np.max(var)))
    return c1_sup, var_sup, skipped


def estimate_constants(spec: ActivationSpec,
                       grid: Optional[GridConfig] = None,
                       mode: str = "empirical",
                       c0: float = 5.0,
                       c1_const: float = 1.0,
                       rule: Optional[QuadratureRule] = None) -> ConstantsReport:
    """Measure the activation constants C1, K2, (K2)', cbar1 and thresholds.

    Empirical mode takes sups over the configured finite grid (p <= 8; the
    huge proof-device exponents are deliberately not used).  Proof mode
    evaluates the literal proof formulas, which overflow for most
    activations and are then reported as inf.  c0 and c1_const are the
    unpinned absolute constants, exposed as parameters.
    """
    if mode not in ("empirical", "proof"):
        raise ValueError(f"mode must be 'empirical' or 'proof', got {mode!r}")
    g = grid or GridConfig()
    xs = np.asarray(g.x, dtype=float)

    c1_sup, k2_sup, skip_a = _grid_sups(spec, xs, g.c_k2, g.pmax, rule)
    _, k2p_sup, skip_b = _grid_sups(spec, xs, g.c_k2_prime, g.pmax, rule)
    c1_emp = max(10.0, c1_sup)
    k2_emp = max(1.0, k2_sup)
    k2p_emp = max(1.0, k2p_sup, k2_emp)

    floor = mass_floor(spec)
    inv_masses = []
    for c in g.c_k2_prime:
        m0 = float(raw_moments(spec, 0.0, float(c), 0, rule=rule)[0])
        if m0 >= floor:
            inv_masses.append(1.0 / m0)
    cbar1 = max(2.0, max(inv_masses) if inv_masses else 2.0)

    # proof-mode C1: (4 K0)^200 + c0 cbar1 with K0 = sqrt(8 log cbar1)
    k0 = math.sqrt(8.0 * math.log(cbar1))
    log_pow = 200.0 * math.log(4.0 * k0) if k0 > 0 else -math.inf
    c1_proof = math.inf if log_pow > 708.0 else math.exp(log_pow) + c0 * cbar1

    c1_used = c1_proof if mode == "proof" else c1_emp
    k2_used = k2_emp
    k2p_used = k2p_emp

    def _threshold(log_e: float, c1v: float, k2v: float) -> float:
        if not math.isfinite(c1v):
            return 0.0
        log_den = log_e + math.log(c1_const) + 6.0 * math.log(c1v) \
            + 4.0 * math.log(k2v)
        return math.exp(-log_den) if log_den < 708.0 else 0.0

    return ConstantsReport(
        c1_empirical=c1_emp,
        k2_empirical=k2_emp,
        k2_prime_empirical=k2p_emp,
        c1_proof=c1_proof,
        cbar1=cbar1,
        alpha_threshold=_threshold(10.0, c1_used, k2_used),
        alpha_prime_threshold=_threshold(16.0, c1_used, k2p_used),
        mode=mode,
        skipped_grid_points=skip_a + skip_b)
