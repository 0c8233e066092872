import numpy as np
import pytest

from isingperc import sevol
from isingperc.errors import (DegenerateFixedPointError,
                              StateEvolutionDegeneracyError)

# frozen values from an independent oracle (halfspace(0), alpha = 0.01, t = 6)
MU1 = 0.9979730405375281
RHO_HALF = 0.49999000423693424   # rho map evaluated at correlation 0.5
MU_HALF = 0.9979747140851924     # mu map evaluated at correlation 0.5
RHO = [0.0, 0.9979729327971663, 0.9959499750312074, 0.9999917872427806,
       0.9999835911475156, 0.9999999667257264]
MU = [0.9979730405375281, 0.9959501896397193, 0.9999917876805091,
      0.9999835920221858, 0.9999999667273883, 0.9999999335222713]
LAMBDA_CUM_6 = 0.9999999335189272
GAMMA_CUM_6 = 0.9999999335222479


def test_init_and_step_frozen(halfspace_spec, sol001, rule):
    rho1, mu1 = sevol.se_init(halfspace_spec, sol001, rule=rule)
    assert rho1 == 0.0
    assert abs(mu1 - MU1) < 1e-9
    rho_next, mu_next = sevol.se_step(halfspace_spec, sol001, 0.5, 0.5,
                                      rule=rule)
    assert abs(rho_next - RHO_HALF) < 1e-9
    assert abs(mu_next - MU_HALF) < 1e-9


def test_se_trace_frozen(se6):
    assert se6.t == 6
    assert np.allclose(se6.rho, RHO, atol=1e-8)
    assert np.allclose(se6.mu, MU, atol=1e-8)
    assert abs(se6.Lambda_s[-1] - LAMBDA_CUM_6) < 1e-8
    assert abs(se6.Gamma_s[-1] - GAMMA_CUM_6) < 1e-8


def test_increments_consistent_with_cumsums(se6):
    assert np.allclose(np.cumsum(se6.lam**2), se6.Lambda_s, atol=1e-12)
    assert np.allclose(np.cumsum(se6.gam**2), se6.Gamma_s, atol=1e-12)


def test_matrix_shapes(se6):
    t = se6.t
    assert se6.Lambda_mat.shape == (t, t)
    assert se6.Gamma_mat.shape == (t - 1, t - 1)
    assert np.allclose(se6.Lambda_mat, np.tril(se6.Lambda_mat))
    assert np.allclose(se6.Gamma_mat, np.tril(se6.Gamma_mat))
    assert np.all(np.diag(se6.Lambda_mat) > 0)
    assert np.all(np.diag(se6.Gamma_mat) > 0)


def test_gram_structure(se6):
    # rows of Lambda are unit vectors whose Gram matrix has
    # rho_{min(a,b)} off the diagonal; likewise Gamma with mu
    t = se6.t
    gram = se6.Lambda_mat @ se6.Lambda_mat.T
    for a in range(t):
        for b in range(t):
            ref = 1.0 if a == b else se6.rho[min(a, b)]
            assert abs(gram[a, b] - ref) < 1e-12
    gram2 = se6.Gamma_mat @ se6.Gamma_mat.T
    for a in range(t - 1):
        for b in range(t - 1):
            ref = 1.0 if a == b else se6.mu[min(a, b)]
            assert abs(gram2[a, b] - ref) < 1e-12


def test_convergence_bounds_long_run(halfspace_spec, sol001, rule):
    se = sevol.se_run(halfspace_spec, sol001, t_max=50, eps_conv=1e-10,
                      rule=rule)
    assert se.t <= 50
    assert np.all(np.abs(se.rho) <= 1.0)
    assert np.all(np.abs(se.mu) <= 1.0)
    assert se.mu[-1] > 1.0 - 1e-8
    assert se.Lambda_s[-1] > 1.0 - 1e-10
    assert se.Gamma_s[-1] > 1.0 - 1e-10


def test_diagonal_convergence_by_t6(se6):
    assert 1.0 - se6.Lambda_s[-1] <= 1e-6
    assert 1.0 - se6.Gamma_s[-1] <= 1e-6


def test_degenerate_correlation_raises():
    with pytest.raises(StateEvolutionDegeneracyError):
        sevol._clamp_corr(1.0 + 1e-6, "mu")
    with pytest.warns(UserWarning):
        assert sevol._clamp_corr(1.0 + 1e-13, "mu") == 1.0


def test_annealed_branch_rejected(halfspace_spec, sol001):
    import dataclasses
    sol0 = dataclasses.replace(sol001, q=0.0, psi=0.0)
    with pytest.raises(DegenerateFixedPointError):
        sevol.se_init(halfspace_spec, sol0)


def test_csv_rows(se6):
    rows = sevol.trace_csv_rows(se6)
    assert len(rows) == se6.t
    header_cols = sevol.SE_CSV_COLUMNS.split(",")
    for i, row in enumerate(rows):
        parts = row.split(",")
        assert len(parts) == len(header_cols)
        assert int(parts[0]) == i + 1
        assert float(parts[2]) == se6.mu[i]
