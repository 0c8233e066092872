"""Acceptance suite: one criterion per test, one PASS/FAIL line each."""
import math
import os
import time

import numpy as np
from scipy.special import ndtr

from isingperc import activation as act
from isingperc import amp
from isingperc import enumeration as enu
from isingperc import moments
from isingperc import rs
from isingperc import sevol
from isingperc.quadrature import expect_g

EPS_BAR = 0.3  # documented test-scale reweighting (the formula default
               # e^5 c1 sqrt(alpha) is far outside the desk-scale regime)


def _criterion(num: int, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"CRITERION {num}: {status}{suffix}")
    assert ok, f"criterion {num} failed{suffix}"


def test_criterion_01_quadrature_exactness(rule, halfspace_spec):
    t0 = time.perf_counter()
    gauss_moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0]
    ok = all(abs(expect_g(lambda z, p=p: z**p, rule) - gauss_moments[p])
             <= 1e-10 for p in range(9))
    worst = 0.0
    xs = np.linspace(-3.0, 3.0, 10)
    for c in np.linspace(0.3, 1.0, 10):
        closed = np.asarray(act.raw_moments(halfspace_spec, xs, float(c), 2,
                                            rule=rule))
        generic = np.asarray(act._raw_moments_generic(halfspace_spec, xs,
                                                      float(c), 2, rule))
        worst = max(worst, float(np.abs(closed - generic).max()))
    elapsed = time.perf_counter() - t0
    ok = ok and worst <= 1e-8 and elapsed < 1.0
    _criterion(1, ok, f"grid dev {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_fixed_point_identities(rule, halfspace_spec):
    t0 = time.perf_counter()
    ok = True
    for alpha in (0.001, 0.005, 0.01, 0.05):
        sol = rs.solve_fixed_point(halfspace_spec, alpha, rule=rule)
        ok &= sol.residual <= 1e-10
        ok &= abs(sol.beta_acute - (1.0 - sol.q)) <= 1e-8
        ok &= sol.q / alpha >= 1.0 / (4.0 * math.pi) - 1e-6
        # exactly one sign change on the scan grid
        qs = np.linspace(0.0, rs.Q_MAX_DEFAULT, 65)
        vals = [rs.qbar_inv(float(q), rule) / alpha
                - rs.rbar(halfspace_spec, float(q), rule) for q in qs]
        signs = np.sign(vals)
        changes = int(np.sum(signs[:-1] != signs[1:]))
        ok &= changes == 1
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < 5.0
    _criterion(2, bool(ok), f"{elapsed:.2f}s")


def test_criterion_03_symmetric_reduction(rule):
    sol = rs.solve_fixed_point(act.band(-1.0, 1.0), 0.1, rule=rule)
    closed = math.log(2.0) + 0.1 * math.log(2.0 * float(ndtr(1.0)) - 1.0)
    ok = sol.q == 0.0 and sol.psi == 0.0 \
        and abs(sol.rs_value - closed) <= 1e-9
    _criterion(3, ok, f"RS {sol.rs_value:.10f} vs closed {closed:.10f}")


def test_criterion_04_state_evolution(halfspace_spec, sol001, rule, se6):
    se50 = sevol.se_run(halfspace_spec, sol001, t_max=50, eps_conv=0.0,
                        rule=rule)
    ok = bool(np.all(np.abs(se50.rho) <= 1.0)
              and np.all(np.abs(se50.mu) <= 1.0)
              and np.all(se50.Gamma_s >= 0.0) and np.all(se50.Gamma_s < 1.0)
              and np.all(se50.Lambda_s >= 0.0)
              and np.all(se50.Lambda_s < 1.0))
    se_conv = sevol.se_run(halfspace_spec, sol001, t_max=500, eps_conv=1e-6,
                           rule=rule)
    ok &= se_conv.t <= 500 and 1.0 - se_conv.Gamma_s[-1] <= 1e-6
    gram = se6.Lambda_mat @ se6.Lambda_mat.T
    dev = 0.0
    for a in range(se6.t):
        for b in range(se6.t):
            ref = 1.0 if a == b else se6.rho[min(a, b)]
            dev = max(dev, abs(float(gram[a, b]) - ref))
    ok &= dev <= 1e-10
    _criterion(4, bool(ok), f"converged at t={se_conv.t}, gram dev {dev:.1e}")


def test_criterion_05_amp_vs_state_evolution(halfspace_spec, sol001, rule,
                                             se6):
    t0 = time.perf_counter()
    ok = True
    worst = {"m_diag": 0.0, "n_overlap": 0.0, "Lambda": 0.0}
    for seed in range(5):
        tr = amp.amp_run(halfspace_spec, sol001, N=4000, t_max=6, seed=seed,
                         rule=rule, se=se6)
        mm = tr.m_stack @ tr.m_stack.T / (tr.N * sol001.q)
        worst["m_diag"] = max(worst["m_diag"],
                              float(np.abs(np.diag(mm) - 1.0).max()))
        nn = tr.n_stack[:tr.t] @ tr.n_stack[:tr.t].T / (tr.N * sol001.psi)
        tgt = np.empty_like(nn)
        for a in range(tr.t):
            for b in range(tr.t):
                tgt[a, b] = 1.0 if a == b else se6.mu[min(a, b)]
        worst["n_overlap"] = max(worst["n_overlap"],
                                 float(np.abs(nn - tgt).max()))
        worst["Lambda"] = max(worst["Lambda"], float(np.abs(
            tr.Lambda_N - se6.Lambda_mat[:tr.t, :tr.t]).max()))
    elapsed = time.perf_counter() - t0
    ok = worst["m_diag"] <= 0.05 and worst["n_overlap"] <= 0.08 \
        and worst["Lambda"] <= 0.08 and elapsed < 120.0
    _criterion(5, ok, f"m {worst['m_diag']:.3f}, n {worst['n_overlap']:.3f},"
               f" Lambda {worst['Lambda']:.3f}, {elapsed:.1f}s")


def test_criterion_06_conditioning_and_resampling(trace4000):
    c_frame, _ = amp.gram_schmidt(trace4000.n_stack[:trace4000.t],
                                  amp.PIVOT_TOL * math.sqrt(trace4000.M))
    resid = amp._residual_map(trace4000.G[None], trace4000.r_frame,
                              c_frame)[0]
    max_r = max(float(np.abs(resid @ r).max()) for r in trace4000.r_frame)
    max_c = max(float(np.abs(resid.T @ c).max()) for c in c_frame)
    rep = amp.conditional_mean_check(6, 10, n_samples=100_000, seed=3)
    ok = max_r <= 1e-8 and max_c <= 1e-8 and rep.passed
    _criterion(6, ok, f"annihilation {max(max_r, max_c):.1e}, "
               f"max |z| {rep.max_abs_z:.2f}")


def test_criterion_07_psi_calculus(trace4000, sol001, rule):
    rng = np.random.default_rng(0)
    h = 1e-6
    worst_grad = 0.0
    points = []
    for k in range(20):
        J = rng.choice([-1.0, 1.0], size=trace4000.N)
        op = moments.overlap_params(J, trace4000, sol001, EPS_BAR)
        points.append(op)
        gp, gv = moments.psi_gradient(op.pi, op.varpi, trace4000, sol001,
                                      EPS_BAR, rule=rule)
        g = np.concatenate([gp, gv])
        fd = np.empty_like(g)
        t = trace4000.t
        for j in range(g.size):
            dp = np.zeros(t)
            dv = np.zeros(t - 1)
            (dp if j < t else dv)[j if j < t else j - t] = h
            fp = moments.psi_functional(op.pi + dp, op.varpi + dv,
                                        trace4000, sol001, EPS_BAR,
                                        rule=rule)
            fm = moments.psi_functional(op.pi - dp, op.varpi - dv,
                                        trace4000, sol001, EPS_BAR,
                                        rule=rule)
            fd[j] = (fp - fm) / (2.0 * h)
        rel = float(np.abs(g - fd).max()) / max(1e-3,
                                                float(np.abs(g).max()))
        worst_grad = max(worst_grad, rel)
    worst_hess = 0.0
    hh = 1e-6
    for op in points[:3]:
        H = moments.psi_hessian(op.pi, op.varpi, trace4000, sol001,
                                EPS_BAR, rule=rule)
        t = trace4000.t
        for j in range(2 * t - 1):
            dp = np.zeros(t)
            dv = np.zeros(t - 1)
            (dp if j < t else dv)[j if j < t else j - t] = hh
            gp1, gv1 = moments.psi_gradient(op.pi + dp, op.varpi + dv,
                                            trace4000, sol001, EPS_BAR,
                                            rule=rule)
            gp0, gv0 = moments.psi_gradient(op.pi - dp, op.varpi - dv,
                                            trace4000, sol001, EPS_BAR,
                                            rule=rule)
            col = (np.concatenate([gp1, gv1])
                   - np.concatenate([gp0, gv0])) / (2.0 * hh)
            worst_hess = max(worst_hess, float(np.abs(H[:, j] - col).max()))
    pi_star, varpi_star = moments.star_point(trace4000)
    gp_s, gv_s = moments.psi_gradient(pi_star, varpi_star, trace4000,
                                      sol001, EPS_BAR, rule=rule)
    se = trace4000.se
    t = trace4000.t
    pred = EPS_BAR * math.sqrt(sol001.psi) \
        * (se.gam[t - 2] - math.sqrt(1.0 - se.Gamma_s[t - 3]))
    star_pi_ok = float(np.abs(gp_s).max()) <= 0.05
    star_varpi_dev = abs(float(gv_s[-1]) - pred)
    ok = worst_grad <= 1e-5 and worst_hess <= 1e-4 \
        and star_pi_ok and star_varpi_dev <= 0.05
    _criterion(7, ok, f"grad rel {worst_grad:.1e}, hess {worst_hess:.1e}, "
               f"star varpi dev {star_varpi_dev:.1e}")


def test_criterion_08_pair_functional_calculus(trace4000, sol001, rule):
    c1 = act.estimate_constants(trace4000.spec, rule=rule).c1_empirical
    l_cap = 5.0 * c1 * c1
    zeta = moments.admissible_zeta(trace4000, l_cap, seed=0)
    d0 = moments.a2_derivative0(zeta, trace4000, sol001, l_cap)
    h = 1e-6
    fd = (moments.a2_functional(h, zeta, trace4000, sol001, l_cap, rule=rule)
          - moments.a2_functional(-h, zeta, trace4000, sol001, l_cap,
                                  rule=rule)) / (2.0 * h)
    bound = 0.05 * sol001.alpha * math.sqrt(l_cap)
    ok = abs(d0 - fd) <= 1e-6 and abs(d0) <= bound
    _criterion(8, ok, f"fd dev {abs(d0 - fd):.1e}, "
               f"|d0| {abs(d0):.2e} <= {bound:.3f}")


def test_criterion_09_local_clt_covariance(trace2000, rule):
    rng = np.random.default_rng(9)
    J = rng.choice([-1.0, 1.0], size=trace2000.N)
    rep = amp.clt_cov_check(trace2000, J, n_samples=100_000, seed=2,
                            rule=rule)
    ok = rep.max_abs_dev <= 0.05
    _criterion(9, ok, f"max dev {rep.max_abs_dev:.2e}")


def test_criterion_10_enumeration_oracle_equivalence():
    rng = np.random.default_rng(10)
    specs = [act.halfspace(0.0), act.band(-1.0, 1.0),
             act.gauss_bump(0.0, 1.0), act.clipped_exp(1.5)]
    ok = True
    for trial in range(50):
        spec = specs[trial % len(specs)]
        N = int(rng.integers(6, 15))
        M = int(rng.integers(1, 4))
        G = rng.standard_normal((M, N))
        fast = enu.enumerate_logZ(spec, G)
        ref = enu.naive_logZ(spec, G)
        if spec.kind in ("halfspace", "band"):
            ok &= fast.count_feasible == ref.count_feasible
        if ref.logZ == -math.inf:
            ok &= fast.logZ == -math.inf
        else:
            ok &= abs(fast.logZ - ref.logZ) <= 1e-10
    _criterion(10, bool(ok), "50 instances, N <= 14")


def test_criterion_11_free_energy_convergence(halfspace_spec, sol01_wide,
                                              rule):
    t0 = time.perf_counter()
    rows = enu.free_energy_experiment(halfspace_spec, 0.1, [12, 16, 20],
                                      samples_per_N=200, seed=0,
                                      sol=sol01_wide)
    devs = [r.deviation for r in rows]
    band_rows = enu.free_energy_experiment(act.band(-1.0, 1.0), 0.1, [20],
                                           samples_per_N=200, seed=0)
    elapsed = time.perf_counter() - t0
    decreasing = devs[0] > devs[1] > devs[2]
    final_ok = devs[2] <= 0.03
    band_ok = band_rows[0].deviation <= 0.02
    ok = decreasing and final_ok and band_ok and elapsed < 600.0
    # NOTE: strict monotonicity fails deterministically at this scale: the
    # N=12 point benefits from M = round(0.1*12) = 1 and the J -> -J
    # symmetry, so its deviation undershoots the N=16 one (a ~4-sigma
    # systematic rounding artifact, stable across seeds)
    _criterion(11, ok, "devs " + ", ".join(f"{d:.4f}" for d in devs)
               + f"; band dev {band_rows[0].deviation:.4f}; {elapsed:.0f}s")


def test_criterion_12_first_moment_estimate(trace4000, sol001, rule):
    ests = [moments.conditional_first_moment_estimate(
        trace4000, sol001, n_samples=100_000, eps_bar=EPS_BAR, seed=s,
        rule=rule) for s in range(3)]
    devs = [abs(e - sol001.rs_value) for e in ests]
    spread = float(np.std(ests))
    ok = max(devs) <= 0.02 and spread <= 0.01
    _criterion(12, ok, f"max dev {max(devs):.2e}, seed std {spread:.2e}")


def test_criterion_13_smoothing(halfspace_spec, rule):
    k2_prime = act.estimate_constants(halfspace_spec,
                                      rule=rule).k2_prime_empirical
    ok = True
    for eta in (0.1, 0.5, 1.0):
        k2_eta = act.estimate_constants(act.smooth(halfspace_spec, eta),
                                        rule=rule).k2_empirical
        ok &= k2_eta <= 4.0 * k2_prime
    rows = rs.rs_eta_sweep(halfspace_spec, 0.05, [0.0, 0.02, 0.05],
                           rule=rule)
    base = rows[0].rs_value
    gap = max(abs(r.rs_value - base) for r in rows[1:])
    ok &= gap <= 0.01
    _criterion(13, bool(ok), f"RS smoothing gap {gap:.2e}")


def test_criterion_14_enumeration_performance():
    rng = np.random.default_rng(14)
    G = rng.standard_normal((3, 24))
    spec = act.halfspace(0.0)
    t0 = time.perf_counter()
    single = enu.enumerate_logZ(spec, G, threads=1)
    t_single = time.perf_counter() - t0
    ok = t_single <= 60.0
    detail = f"single-thread {t_single:.2f}s"
    cpus = os.cpu_count() or 1
    if cpus >= 4:
        t0 = time.perf_counter()
        multi = enu.enumerate_logZ(spec, G, threads=4)
        t_multi = time.perf_counter() - t0
        ok &= multi.count_feasible == single.count_feasible
        ok &= t_single / t_multi >= 3.0
        detail += f", 4-thread speedup {t_single / t_multi:.2f}x"
    else:
        detail += f", scaling subcheck skipped: only {cpus} CPU(s)"
    _criterion(14, ok, detail)
