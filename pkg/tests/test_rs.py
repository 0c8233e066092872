import math

import numpy as np
import pytest

from isingperc import activation as act
from isingperc import rs
from isingperc.errors import NoBracketingRootError

# frozen values from an independent trapezoid/damped-Picard oracle
QBAR_1 = 0.39429449039784115
QBAR_001 = 0.009805468755532409
RBAR_HALF_001 = 0.6489563011360482
FIXED_POINTS = {
    # alpha: (q, psi, rs)
    0.001: (0.0006365833980452124, 0.0006373944774736997,
            0.6924539320209859),
    0.005: (0.0031822052078846978, 0.003202533668340164,
            0.6896789069616027),
    0.01: (0.0063627005084182925, 0.006444276020443769,
           0.6862055391682877),
    0.05: (0.03175805538814334, 0.03385403839265917, 0.6582316939964266),
}
BETA_001 = -0.006403273022132156
AT_001 = 0.004051549745206312
BAND_RS = 0.6549756659297327  # log 2 + 0.1 log(2 Phi(1) - 1)


def test_qbar_frozen(rule):
    assert abs(rs.qbar(1.0, rule) - QBAR_1) < 1e-12
    assert abs(rs.qbar(0.01, rule) - QBAR_001) < 1e-12
    assert rs.qbar(0.0, rule) == 0.0


def test_qbar_monotone_and_inverse(rule):
    vals = [rs.qbar(p, rule) for p in (0.01, 0.1, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    for q in (0.005, 0.05, 0.3):
        psi = rs.qbar_inv(q, rule)
        assert abs(rs.qbar(psi, rule) - q) < 1e-12


def test_rbar_frozen(halfspace_spec, rule):
    assert abs(rs.rbar(halfspace_spec, 0.01, rule) - RBAR_HALF_001) < 1e-10


@pytest.mark.parametrize("alpha", sorted(FIXED_POINTS))
def test_fixed_points_frozen(halfspace_spec, rule, alpha):
    sol = rs.solve_fixed_point(halfspace_spec, alpha, rule=rule)
    q, psi, rs_val = FIXED_POINTS[alpha]
    assert abs(sol.q - q) < 1e-9
    assert abs(sol.psi - psi) < 1e-9
    assert abs(sol.rs_value - rs_val) < 1e-9
    assert sol.converged
    assert sol.residual <= 1e-10
    assert sol.branch == "rs"


def test_derived_scalars_frozen(sol001):
    assert abs(sol001.beta - BETA_001) < 1e-9
    assert abs(sol001.at_value - AT_001) < 1e-9
    assert abs(sol001.beta_acute - (1.0 - sol001.q)) < 1e-10


def test_annealed_halfspace(halfspace_spec, rule):
    # E U = P(xi >= 0) = 1/2
    val = rs.annealed(halfspace_spec, 0.01, rule)
    assert abs(val - (math.log(2.0) + 0.01 * math.log(0.5))) < 1e-12


def test_symmetric_band_branch(rule):
    sol = rs.solve_fixed_point(act.band(-1.0, 1.0), 0.1, rule=rule)
    assert sol.q == 0.0 and sol.psi == 0.0
    assert sol.branch == "annealed"
    assert abs(sol.rs_value - BAND_RS) < 1e-12
    assert abs(sol.rs_value - sol.annealed_value) < 1e-14


def test_no_bracketing_root_at_large_alpha(halfspace_spec, rule):
    with pytest.raises(NoBracketingRootError):
        rs.solve_fixed_point(halfspace_spec, 0.1, rule=rule)


def test_q_max_override_warns_and_solves(halfspace_spec, rule):
    with pytest.warns(UserWarning):
        sol = rs.solve_fixed_point(halfspace_spec, 0.1, q_max=0.25,
                                   rule=rule)
    assert abs(sol.q - 0.06343493838605885) < 1e-9
    assert abs(sol.rs_value - 0.6227792105879218) < 1e-9


def test_alpha_must_be_positive(halfspace_spec):
    with pytest.raises(ValueError):
        rs.solve_fixed_point(halfspace_spec, -0.5)


def test_rs_free_energy_independent_recomputation(halfspace_spec, sol001,
                                                  rule):
    # straight re-evaluation from scipy pieces, independent of the module
    from scipy.special import log_ndtr
    q, psi = sol001.q, sol001.psi
    z = rule.nodes
    w = rule.weights
    t1 = float(w @ (np.abs(math.sqrt(psi) * z)
                    + np.log1p(np.exp(-2 * np.abs(math.sqrt(psi) * z)))))
    t2 = float(w @ log_ndtr(math.sqrt(q) * z / math.sqrt(1 - q)))
    ref = -0.5 * psi * (1 - q) + t1 + 0.01 * t2
    assert abs(sol001.rs_value - ref) < 1e-14


def test_eta_sweep_rows(halfspace_spec, rule):
    rows = rs.rs_eta_sweep(halfspace_spec, 0.05, [0.0, 0.02, 0.05],
                           rule=rule)
    assert len(rows) == 3
    assert all(r.error == "" for r in rows)
    base = rows[0].rs_value
    for r in rows[1:]:
        assert abs(r.rs_value - base) < 0.01


def test_csv_row_roundtrip(sol001):
    row = rs.solution_csv_row(sol001)
    parts = row.split(",")
    assert len(parts) == len(rs.RS_CSV_COLUMNS.split(","))
    assert float(parts[1]) == sol001.q  # 17 significant digits round-trip
