import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from test_dynamics import ce_parts
from horizon_ii.dynamics import ControlAffineSystem, ImmersionData, TargetSystem, check_equilibrium_consistency
from horizon_ii.feedform import build_immersion
from horizon_ii.linstab import (
    LinearizationData,
    LinearizationError,
    check_hyperbolic,
    decompose,
    e_coordinate,
    fit_decay_rate,
    linearize_all,
)
from horizon_ii.maps import ExprMap


def worked_ld(ffs):
    target, imm = build_immersion(ffs)
    return linearize_all(ffs.system(), target, imm)


def test_worked_linearization(ffs):
    ld = worked_ld(ffs)
    np.testing.assert_array_equal(ld.S, [[-1.0]])
    np.testing.assert_array_equal(np.abs(ld.Pi), [[1.0], [0.0]])
    np.testing.assert_array_equal(ld.A, -np.eye(2))
    np.testing.assert_array_equal(ld.R0, [[0.0, 1.0]])
    assert ld.orthogonality_residual <= 1e-10


def test_counterexample_linearization():
    sys, target, imm = ce_parts(corrected=True)
    ld = linearize_all(sys, target, imm)
    np.testing.assert_array_equal(ld.A, -np.eye(2))
    np.testing.assert_array_equal(ld.S, [[-1.0]])
    np.testing.assert_array_equal(ld.Pi, [[1.0], [0.0]])


def test_linear_plant_matches_hand_assembly():
    A0 = [["1", "2"], ["0", "-1"]]
    B = [["0"], ["1"]]
    K = ["-3*x1 - 4*x2"]
    f = [f"({A0[i][0]})*x1 + ({A0[i][1]})*x2" for i in range(2)]
    sys = ControlAffineSystem.from_strings(f, B)
    target = TargetSystem.from_strings(["-xi1"])
    imm = ImmersionData(
        ExprMap(["xi1", "-xi1"], ("xi1",)), ExprMap(["0"], ("x1", "x2")), ExprMap(["x2 + x1"], ("x1", "x2")),
        ExprMap(K, ("x1", "x2")), np.eye(1),
    )
    ld = linearize_all(sys, target, imm)
    np.testing.assert_allclose(ld.A, np.array([[1.0, 2.0], [0.0, -1.0]]) + np.array([[0.0], [1.0]]) @ np.array([[-3.0, -4.0]]))


def test_e_coordinate_examples(ffs):
    ld = worked_ld(ffs)
    assert e_coordinate(ld, [0.0, 1.0])[0] == pytest.approx(1.0)
    assert e_coordinate(ld, ld.Pi[:, 0] * 3.0)[0] == pytest.approx(0.0, abs=1e-15)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3))
def test_reconstruction_on_random_orthogonal_pair(v):
    # Pi spans a line, R0 its orthogonal complement in R^3 (two rows)
    Pi = np.array([[1.0], [2.0], [-1.0]])
    R0 = np.array([[2.0, -1.0, 0.0], [1.0, 0.0, 1.0]])
    ld = LinearizationData(-np.eye(1), Pi, -np.eye(3), R0, np.eye(2))
    xi, e = decompose(ld, v)
    np.testing.assert_allclose(Pi @ xi + R0.T @ e, v, atol=1e-10)


def test_rank_failure_raises():
    with pytest.raises(LinearizationError):
        LinearizationData(-np.eye(1), [[1.0], [0.0]], -np.eye(2), [[0.0, 0.0]], np.eye(1))


def test_check_hyperbolic_worked(ffs):
    res = check_hyperbolic(worked_ld(ffs), contraction_passed=True)
    assert res.passed
    assert res.details["abscissa_A"] == pytest.approx(-1.0)
    assert res.details["eig_A"] == [[-1.0, 0.0], [-1.0, 0.0]]
    assert res.details["claim_applicable"]


def test_hurwitz_A_paired_with_failed_equilibrium():
    sys, target, imm = ce_parts(corrected=False)
    eq = check_equilibrium_consistency(sys, target, imm)
    res = check_hyperbolic(linearize_all(sys, target, imm), True, eq)
    assert res.passed and res.details["equilibrium_passed"] is False


def test_zero_eigenvalue_in_S_is_not_applicable():
    ld = LinearizationData([[0.0]], [[1.0], [0.0]], [[0.0, 0.0], [0.0, -1.0]], [[0.0, 1.0]], np.eye(1))
    res = check_hyperbolic(ld, True)
    assert not res.details["S_hyperbolic"] and not res.details["claim_applicable"]
    assert not res.passed


def test_fit_decay_rate_linear_and_floor():
    t = np.linspace(0, 10, 101)
    states = np.stack([3 * np.exp(-2 * t), np.zeros_like(t)], axis=1)
    assert fit_decay_rate(t, states, [0, 0]) == pytest.approx(-2.0, rel=1e-12)
    assert math.isnan(fit_decay_rate(t, np.zeros((101, 2)), [0, 0]))


def test_fitted_rate_in_report():
    from horizon_ii import scenarios
    from horizon_ii.runner import run

    good = run(scenarios.load("worked-example").config, ["hyperbolicity"]).report["hyperbolicity"]
    assert good.details["fitted_closed_loop_rate"] == pytest.approx(-1.0, abs=0.05)
    bad = run(scenarios.load("counterexample").config, ["hyperbolicity"]).report["hyperbolicity"]
    assert abs(bad.details["fitted_closed_loop_rate"]) < 1e-3  # settles away from x*
