import numpy as np
import pytest

from conftest import WORKED_BETA, worked_example
from horizon_ii.contraction import check_decay_matrix_inequality
from horizon_ii.feedform import FeedbackFormSystem, M_map, Q_map, build_M, build_Q, build_immersion, check_feedback_form, check_prop3
from horizon_ii.iandi import SampleSet, default_samples
from horizon_ii.linalg import jacobi_eigh


def test_system_shape(ffs):
    sys = ffs.system()
    assert (sys.n, sys.m) == (2, 1)
    np.testing.assert_array_equal(sys.g.value([0.3, 0.1]), [[0.0], [1.0]])


def test_validation():
    with pytest.raises(ValueError):
        FeedbackFormSystem(1, ["x1", "x2"], "0", "0", 1.0)
    with pytest.raises(ValueError):
        FeedbackFormSystem(1, ["x1"], "0", "0", 0.0)
    with pytest.raises(ValueError):
        FeedbackFormSystem(1, ["x1"], "x2", "0", 1.0)  # pi2 may only use x1


def test_build_immersion_worked(ffs):
    target, imm = build_immersion(ffs)
    for x in ([0.5, -0.2], [-1.3, 2.0]):
        assert imm.phi.value(x)[0] == pytest.approx(x[1] + x[0] ** 2)
    for xi in (-1.0, 0.4):
        assert target.alpha.value([xi])[0] == pytest.approx(-xi - xi**5)
        np.testing.assert_allclose(imm.pi.value([xi]), [xi, -xi * xi])
    assert imm.rho == 2.0
    np.testing.assert_array_equal(imm.P, [[1.0]])


def test_build_immersion_zero_virtual_control():
    ffs = FeedbackFormSystem(1, ["-x1 + theta + x2"], "0", "-x2", 1.0, {"theta": 0.0})
    target, imm = build_immersion(ffs)
    x = [0.7, -0.3]
    assert imm.phi.value(x)[0] == pytest.approx(-0.3)
    assert imm.c.value(x)[0] == 0.0
    assert target.alpha.value([0.7])[0] == pytest.approx(-0.7)


def test_build_M_examples(ffs):
    np.testing.assert_allclose(build_M(ffs, [1.0]), [[4.0, 2.0], [2.0, 1.0]])
    np.testing.assert_allclose(build_M(ffs, [0.0]), [[0.0, 0.0], [0.0, 1.0]])
    for x1 in (-1.7, 0.3, 2.0):
        w = jacobi_eigh(build_M(ffs, [x1]))[0]
        np.testing.assert_allclose(w, [0.0, 1 + 4 * x1 * x1], atol=1e-12)


def test_M_equals_RtR(ffs, rng):
    _, imm = build_immersion(ffs)
    M = M_map(ffs)
    for x in rng.uniform(-2, 2, (25, 2)):
        R = np.asarray(imm.R.value(x), dtype=float)
        np.testing.assert_allclose(M.value(x), R.T @ R, rtol=1e-12, atol=1e-15)


def test_build_Q_examples(ffs):
    np.testing.assert_allclose(build_Q(ffs, [1.0, -1.0])[0], [-4.0, 1.0])
    np.testing.assert_allclose(build_Q(ffs, [1.0, 0.0])[1], [2.0, -3.0])
    const = FeedbackFormSystem(1, ["-x1"], "0", "3", 1.0)
    np.testing.assert_array_equal(build_Q(const, [0.4, 0.2])[1], [0.0, 0.0])


def _conditions(ffs):
    return check_feedback_form(
        ffs,
        default_samples(2),
        SampleSet.grid([(-2, 2)], 201),
        SampleSet.random([(-2, 2)] * 2, 50, 11),
        horizon=20.0,
    )


@pytest.mark.parametrize("lam, k", [(1.0, 2.0), (0.5, 2.0), (2.0, 4.0)])
def test_conditions_pass_for_parametric_beta(lam, k):
    rep = _conditions(worked_example(lam, k))
    assert rep.verdict == "pass", rep.summary()
    assert {r.name for r in rep.results} == {"target_gas", "decay_matrix", "beta_on_manifold", "closed_loop_gas"}


def test_wrong_sign_fails_decay_matrix():
    ffs = worked_example(beta=WORKED_BETA.replace("- k/2*x2", "+ k/2*x2"))
    res = check_decay_matrix_inequality(M_map(ffs), Q_map(ffs), ffs.k, ffs.closed_loop(), default_samples(2))
    assert not res.passed


def test_operation_alias():
    assert check_prop3 is check_feedback_form
