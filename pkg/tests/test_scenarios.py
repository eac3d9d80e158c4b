import numpy as np
import pytest

from horizon_ii import scenarios
from horizon_ii.config import ConfigError, ConfigNotFound
from horizon_ii.dynamics import integrate
from horizon_ii.runner import build_problem, compare_expectations, run

SHIPPED = ["counterexample", "counterexample-corrected", "extended-system", "extended-system-offset", "worked-example"]


def test_available():
    assert scenarios.available() == SHIPPED


@pytest.fixture(scope="module")
def outputs():
    return {}


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_expectations_hold(name, outputs):
    sc = scenarios.load(name)
    out = run(sc.config)
    outputs[name] = out
    assert compare_expectations(out.report, sc.expectations) == []
    assert set(out.report.outcomes()) == set(sc.expectations["checks"])


def test_counterexample_flags_three_failures():
    sc = scenarios.scenario_counterexample()
    failing = {k for k, v in sc.expectations["checks"].items() if v == "fail"}
    assert failing == {"equilibrium", "beta_on_manifold", "closed_loop_gas"}
    assert sc.expectations["equilibrium"] == [1.0, 0.0]


def test_builders_override_parameters():
    sc = scenarios.scenario_worked_example(lam=0.5, k=4.0)
    assert sc.params == {"lambda": 0.5, "k": 4.0}
    assert scenarios.scenario_counterexample(theta=2.0, corrected=True).name == "counterexample-corrected"
    assert scenarios.scenario_counterexample(theta=-3.0).params["theta"] == -3.0
    ext = scenarios.scenario_extended_system(z0_offset=1.0)
    assert ext.config["simulation"]["z0_offset"] == 1.0 and ext.params["corrected"] == 1.0
    with pytest.raises(ValueError):
        scenarios.scenario_worked_example(lam=0.0)
    with pytest.raises(ValueError):
        scenarios.scenario_counterexample(theta=0.0)


def test_unknown_scenario_and_param():
    with pytest.raises(ConfigNotFound):
        scenarios.load("no-such-scenario")
    with pytest.raises(ConfigError) as err:
        scenarios.load("worked-example", mu=1.0)
    assert err.value.errors[0][0] == "$.params.mu"


def test_worked_example_closed_loop_from_listed_state():
    prob = build_problem(scenarios.scenario_worked_example().config)
    tr = integrate(prob.field, [1.5, 1.5], (0.0, 20.0), "rk45", 1e-10)
    assert not tr.diverged
    assert np.linalg.norm(tr.final) < 1e-3


@pytest.mark.parametrize("theta", [0.5, 2.0])
def test_counterexample_converges_to_shifted_point(theta):
    prob = build_problem(scenarios.scenario_counterexample(theta=theta).config)
    tr = integrate(prob.field, [-1.0, 2.0], (0.0, 20.0), "rk45", 1e-10)
    np.testing.assert_allclose(tr.final, [theta, 0.0], atol=1e-6)
