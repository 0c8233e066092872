"""Gaussian expectation engine (1-D and 2-D).

All statistical functionals in this library are expectations against the
standard normal density phi(z).  Gauss-Hermite quadrature in the physicists'
normalization integrates against exp(-x^2); the change of variables z = sqrt(2) x
turns it into a rule for the standard normal measure:

    E f(xi) = integral f(z) phi(z) dz ~= sum_i w_i f(z_i),
    z_i = sqrt(2) * x_i,   w_i = w_i^GH / sqrt(pi),   sum_i w_i = 1.

Two-dimensional expectations use the tensor product of the 1-D rule; nothing
in this library integrates in more than two Gaussian dimensions.

An adaptive Simpson integrator is also provided for activations that are
continuous but not smooth (tabulated piecewise-linear data), where a fixed
Hermite rule converges slowly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import NonFiniteIntegrandError

DEFAULT_ORDER = 201


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for expectations against the standard normal law.

    Invariants: weights sum to 1 (renormalized at construction), nodes are
    symmetric about 0, and moments through degree 2*order - 1 are exact.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def gauss_hermite(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Build the probabilists' Gauss-Hermite rule of the given node count."""
    if order < 2:
        raise ValueError(f"quadrature order must be >= 2, got {order}")
    x, w = hermgauss(order)
    nodes = np.sqrt(2.0) * x
    weights = w / np.sqrt(np.pi)
    # renormalize so the rule integrates 1 exactly (hermgauss is close already)
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.asarray(values)
        idx = np.argwhere(~np.isfinite(bad))
        raise NonFiniteIntegrandError(
            f"non-finite integrand at node index {tuple(idx[0])}"
        )


def expect_g(f, rule: QuadratureRule) -> float:
    """E f(xi) for a standard gaussian xi.

    ``f`` must accept a 1-D numpy array of nodes and return values of the
    same shape.
    """
    values = np.asarray(f(rule.nodes), dtype=float)
    _check_finite(values)
    return float(np.dot(rule.weights, values))


def expect_g2(f, rule: QuadratureRule) -> float:
    """E f(xi, xi') for i.i.d. standard gaussians, by the tensor-product rule.

    ``f`` must accept two broadcastable arrays.
    """
    z1 = rule.nodes[:, None]
    z2 = rule.nodes[None, :]
    values = np.asarray(f(z1, z2), dtype=float)
    _check_finite(values)
    return float(rule.weights @ values @ rule.weights)


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 40) -> float:
    """Composite adaptive Simpson integration of ``f`` on [a, b].

    Iterative interval-stack implementation; ``f`` is called on scalars.
    Used for continuous-but-kinked integrands (tabulated activations).
    """
    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        flm, frm = f(0.5 * (lo + mid)), f(0.5 * (mid + hi))
        left = simpson(lo, mid, flo, flm, fmid)
        right = simpson(mid, hi, fmid, frm, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            total += left + right + (left + right - whole) / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2.0, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2.0, depth + 1))
    if not np.isfinite(total):
        raise NonFiniteIntegrandError("non-finite adaptive-Simpson integral")
    return total
