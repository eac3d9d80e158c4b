import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import WORKED_BETA, worked_example
from horizon_ii.contraction import (
    _state_form,
    Curve,
    FinslerLyapunov,
    RefinementError,
    V,
    V_dot,
    V_dot_fd,
    check_decay_matrix_inequality,
    check_decay_pointwise,
    check_length_decay,
    decay_matrix_lhs,
    horizontal_length,
    unit_directions,
    write_decay_csv,
)
from horizon_ii.feedform import M_map, Q_map, build_immersion
from horizon_ii.iandi import SampleSet, default_samples
from horizon_ii.maps import ConstMap, FuncMap


def fl_of(ffs):
    return FinslerLyapunov.from_immersion(build_immersion(ffs)[1])


def test_V_examples(ffs):
    fl = fl_of(ffs)
    assert V(fl, [1.0, 0.0], [1.0, -2.0]) == 0.0
    assert V(fl, [0.5, 0.3], [0.0, 0.0]) == 0.0
    assert V(fl, [0.0, 0.0], [0.0, 1.0]) == 1.0
    x, dx = np.array([0.7, -1.1]), np.array([0.4, 2.0])
    assert V(fl, x, dx) == pytest.approx((2 * x[0] * dx[0] + dx[1]) ** 2)


vecs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2)


@given(vecs, vecs, st.floats(-10, 10, allow_nan=False))
def test_V_homogeneous_and_nonnegative(x, dx, c):
    fl = fl_of(worked_example())
    v = V(fl, x, dx)
    assert v >= 0
    assert V(fl, x, c * np.asarray(dx)) == pytest.approx(c * c * v, rel=1e-12, abs=1e-300)


@given(vecs, st.floats(-3, 3, allow_nan=False))
def test_V_vanishes_on_null_space_of_R(x, c):
    fl = fl_of(worked_example())
    tangent = c * np.array([1.0, -2.0 * x[0]])  # tangent to the level sets of phi
    assert V(fl, x, tangent) <= 1e-24 * max(1.0, c * c * (1 + 4 * x[0] ** 2))


def test_V_dot_equality_case(ffs):
    fl = fl_of(ffs)
    field = ffs.closed_loop()
    v = V(fl, [1.0, 1.0], [1.0, 0.0])
    assert V_dot(fl, field, [1.0, 1.0], [1.0, 0.0]) == pytest.approx(-2.0 * v, rel=1e-13)
    assert V_dot(fl, field, [1.0, 1.0], [0.0, 0.0]) == 0.0


def test_V_dot_against_finite_differences(ffs, rng):
    fl, field = fl_of(ffs), ffs.closed_loop()
    for p in rng.uniform(-2, 2, (100, 4)):
        exact = V_dot(fl, field, p[:2], p[2:])
        fd = V_dot_fd(fl, field, p[:2], p[2:])
        assert exact == pytest.approx(fd, rel=1e-5, abs=1e-5 * max(1.0, V(fl, p[:2], p[2:])))


def test_unit_directions():
    d = unit_directions(2)
    assert d.shape == (16, 2)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    d3 = unit_directions(3, seed=4)
    assert d3.shape == (50, 3)
    np.testing.assert_array_equal(d3, unit_directions(3, seed=4))


def test_decay_pointwise_worked(ffs):
    res = check_decay_pointwise(fl_of(ffs), ffs.closed_loop(), default_samples(2))
    assert res.passed and res.worst_residual <= 1e-9
    assert res.details["n_directions"] == 16


def test_decay_pointwise_fails_when_gain_is_raised():
    # beta keeps its k = 2 coefficients while the required rate becomes 10
    ffs = worked_example(k=10.0, beta=WORKED_BETA.replace("k", "2"))
    res = check_decay_pointwise(fl_of(ffs), ffs.closed_loop(), default_samples(2))
    assert not res.passed
    x, d = np.array(res.worst_point[:2]), np.array(res.worst_point[2:])
    probe = V_dot(fl_of(ffs), ffs.closed_loop(), x, d) + 10.0 * V(fl_of(ffs), x, d)
    assert probe == pytest.approx(res.worst_residual, rel=1e-9)


def test_decay_pointwise_zero_rate_passes():
    ffs = worked_example()
    fl = FinslerLyapunov(fl_of(ffs).R, np.eye(1), 0.0)
    assert check_decay_pointwise(fl, ffs.closed_loop(), default_samples(2)).passed


def test_decay_pointwise_rejects_non_unit_directions(ffs):
    with pytest.raises(ValueError):
        check_decay_pointwise(fl_of(ffs), ffs.closed_loop(), default_samples(2), directions=np.array([[2.0, 0.0]]))


def test_refinement_finds_narrow_cones():
    # a perturbed controller makes the decay form indefinite with a thin positive cone
    ffs = worked_example(beta="0.9*x1^2 - 1.1*x2 - 2.3*lambda*x1^4*x2")
    fl, field = fl_of(ffs), ffs.closed_loop()
    x = SampleSet(np.array([[-2.0, 1.4]]), "probe")
    coarse = check_decay_pointwise(fl, field, x, refine=False)
    fine = check_decay_pointwise(fl, field, x)
    lam = check_decay_matrix_inequality(M_map(ffs), Q_map(ffs), 2.0, field, x).worst_residual
    assert fine.worst_residual >= coarse.worst_residual
    assert fine.worst_residual == pytest.approx(lam, rel=1e-8, abs=1e-10)


def test_decay_matrix_identity(ffs):
    res = check_decay_matrix_inequality(M_map(ffs), Q_map(ffs), 2.0, ffs.closed_loop(), default_samples(2))
    assert res.passed and res.details["max_abs_entry"] <= 1e-10


def test_decay_matrix_sign_flip_fails():
    ffs = worked_example(beta=WORKED_BETA.replace("- 2*lambda", "+ 2*lambda"))
    res = check_decay_matrix_inequality(M_map(ffs), Q_map(ffs), 2.0, ffs.closed_loop(), default_samples(2))
    assert not res.passed and res.worst_residual > 0


def test_decay_matrix_constant_case():
    field = FuncMap(lambda x: -x, 2, 2)
    M = ConstMap(np.eye(2), 2)
    Q = ConstMap(-np.eye(2), 2)
    np.testing.assert_allclose(decay_matrix_lhs(M, Q, 1.0, field, [0.3, 0.2]), -np.eye(2))
    assert check_decay_matrix_inequality(M, Q, 1.0, field, default_samples(2)).passed
    with pytest.raises(ValueError):
        decay_matrix_lhs(ConstMap([[1.0, 1.0], [0.0, 1.0]], 2), Q, 1.0, field, [0.0, 0.0])


def test_horizontal_length_examples(ffs):
    fl = fl_of(ffs)
    inside = Curve(lambda s: np.stack([s, -s * s], axis=1), tangent=lambda s: np.stack([np.ones_like(s), -2 * s], axis=1))
    assert horizontal_length(fl, inside) <= 1e-8
    assert horizontal_length(fl, Curve.segment([0, 0], [0, 1])) == pytest.approx(1.0, rel=1e-12)
    assert horizontal_length(fl, Curve.segment([0.3, 0.3], [0.3, 0.3])) == 0.0
    poly = Curve.from_nodes(np.stack([np.zeros(9), np.linspace(-1, 1, 9)], axis=1))
    assert horizontal_length(fl, poly) == pytest.approx(2.0, rel=1e-9)


def test_horizontal_length_refinement_error(ffs):
    wild = Curve(lambda s: np.stack([np.zeros_like(s), np.sin(4000 * s)], axis=1))
    with pytest.raises(RefinementError):
        horizontal_length(fl_of(ffs), wild, n_max=64)


def test_length_decay_worked(ffs):
    fl, field = fl_of(ffs), ffs.closed_loop()
    res, dc = check_length_decay(fl, field, Curve.segment([0.5, -1.0], [0.5, 1.0]), np.linspace(0, 5, 11))
    assert res.passed
    assert -1.05 <= dc.rate <= -0.95
    assert dc.ell[0] == pytest.approx(horizontal_length(fl, Curve.segment([0.5, -1.0], [0.5, 1.0])), rel=1e-9)
    assert np.all(np.diff(dc.ell) <= 0)
    inside = Curve(lambda s: np.stack([2 * s - 1, -(2 * s - 1) ** 2], axis=1), tangent=lambda s: np.stack([2 * np.ones_like(s), -4 * (2 * s - 1)], axis=1))
    res_in, dc_in = check_length_decay(fl, field, inside, [0.0, 1.0, 3.0, 5.0])
    assert res_in.passed and res_in.details["mode"] == "curve_in_manifold"
    assert np.max(dc_in.ell) <= 1e-6


def test_length_decay_t0_only(ffs):
    fl = fl_of(ffs)
    seg = Curve.segment([0.5, -1.0], [0.5, 1.0])
    _, dc = check_length_decay(fl, ffs.closed_loop(), seg, [0.0])
    assert dc.ell[0] == pytest.approx(horizontal_length(fl, seg), rel=1e-9)


def test_decay_csv(tmp_path, ffs):
    _, dc = check_length_decay(fl_of(ffs), ffs.closed_loop(), Curve.segment([0.5, -1.0], [0.5, 1.0]), [0, 1, 2])
    path = write_decay_csv(dc, tmp_path / "d.csv")
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["t", "ell", "log_ell", "bound"]
    ell = [float(r[1]) for r in rows[1:]]
    assert ell == sorted(ell, reverse=True)
    _, empty = check_length_decay(fl_of(ffs), ffs.closed_loop(), Curve.segment([0.5, -1.0], [0.5, 1.0]), [])
    path = write_decay_csv(empty, tmp_path / "e.csv")
    assert path.read_text() == "t,ell,log_ell,bound\n"


def test_state_form_matches_V_dot(ffs, rng):
    fl = FinslerLyapunov.from_immersion(build_immersion(ffs)[1])
    field = ffs.closed_loop()
    for x, d in zip(rng.uniform(-2, 2, (30, 2)), rng.standard_normal((30, 2))):
        want = V_dot(fl, field, x, d) + fl.rho_at(x) * V(fl, x, d)
        assert _state_form(fl, field, x)(d) == pytest.approx(want, rel=1e-12, abs=1e-12)
