"""Agent and controller models, the LTI specialization and model config files."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netident.graphs import Graph
from netident.models import (PROBE_GRID, AgentModel, ControllerModel, DomainError,
                             LtiNetworkModel, ModelError, NetworkModel, cubic, cubic_slope,
                             lti_controller, lti_to_network, neural_agent, neural_network,
                             parse_model, random_taus, validate_agent, validate_controller)
from netident.simulation import run_to_convergence


class TestLti:
    def test_identity_relation(self):
        net = lti_to_network(LtiNetworkModel.uniform(2, 1, 1))
        y = np.array([0.3, -2.0])
        assert np.array_equal(net.k_inv(y), y)

    def test_integrators(self):
        m = LtiNetworkModel.uniform(2, 0, 1)
        net = lti_to_network(m)
        assert not m.a_nonzero and net.all_integrators
        assert np.array_equal(net.k_inv(np.array([5.0, -1.0])), [0.0, 0.0])

    def test_direct_evaluation(self):
        m = LtiNetworkModel((Fraction(1, 2), Fraction(1, 3)), {(1, 2): Fraction(1, 5)})
        net = lti_to_network(m)
        assert net.agents[0].k_inv(2.0, *net.agents[0].params) == pytest.approx(1.0)
        assert net.controllers[(1, 2)](5.0) == pytest.approx(1.0)

    def test_realization_dynamics(self):
        net = lti_to_network(LtiNetworkModel((Fraction(2), Fraction(0)), {(1, 2): 1}))
        x = np.array([1.5, 4.0])
        assert np.allclose(net.f(x), [-3.0, 0.0])
        assert np.array_equal(net.h(x), x)

    @pytest.mark.parametrize("a, b", [((-1, 1), {(1, 2): 1}), ((1, 1), {(1, 2): 0}),
                                      ((1, 1, 1), {(1, 2): 1})])
    def test_invalid(self, a, b):
        with pytest.raises(ModelError):
            LtiNetworkModel(a, b)

    def test_bounds_helpers(self):
        m = LtiNetworkModel((1, 2, 3), {(1, 2): Fraction(1, 4), (1, 3): Fraction(5, 6),
                                        (2, 3): 1})
        assert m.denominator_lcm() == 12
        assert m.max_row_weight() == 3 + Fraction(5, 6) + 1

    def test_random_is_seeded(self):
        a = LtiNetworkModel.random(4, np.random.default_rng(3))
        b = LtiNetworkModel.random(4, np.random.default_rng(3))
        assert a == b
        assert all(1 <= v.denominator <= 9 and 0 < v <= 9 for v in a.b.values())


class TestNeural:
    def test_relation_at_one(self):
        ag, _ = neural_agent(1.0, 0.1)
        assert ag.k_inv(np.tanh(1.0), *ag.params) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("tau", [0.5, 0.7, 1.0, 3.0])
    def test_odd(self, tau):
        ag, _ = neural_agent(tau, 0.1)
        assert ag.k_inv(0.0, *ag.params) == 0.0

    def test_domain(self):
        ag, _ = neural_agent(1.0, 0.1)
        with pytest.raises(DomainError):
            ag.k_inv(1.0, *ag.params)
        with pytest.raises(DomainError):
            ag.dk_inv(-1.0, *ag.params)

    def test_controller(self):
        _, c = neural_agent(0.5, 0.1)
        assert c(3.0) == pytest.approx(0.3)

    def test_invalid_parameters(self):
        with pytest.raises(ModelError):
            neural_agent(0.0, 0.1)
        with pytest.raises(ModelError):
            neural_agent(1.0, -0.1)

    def test_simulated_agent_matches_relation(self):
        # single agent tau=0.5 driven by u=2: steady output tanh(1) and k_inv(tanh 1) = 2
        net = neural_network([0.5])
        v = run_to_convergence(net, Graph(1), [-2.0], tol_rate=1e-10, tol_res=1e-10)
        assert v.y[0] == pytest.approx(math.tanh(1.0), abs=1e-9)
        assert net.k_inv(v.y)[0] == pytest.approx(2.0, abs=1e-8)

    @pytest.mark.parametrize("u", [-1.0, -0.1, 0.0, 0.1, 1.0])
    def test_consistency_by_simulation(self, u):
        tau = 0.8
        net = neural_network([tau])
        v = run_to_convergence(net, Graph(1), [-u], tol_rate=1e-10, tol_res=1e-9)
        assert abs(net.k_inv(v.y)[0] - u) < 1e-6

    def test_random_taus(self):
        t = random_taus(10, 4)
        assert np.array_equal(t, random_taus(10, 4))
        assert np.all((t >= 0.5) & (t <= 1.0))


class TestValidation:
    @pytest.mark.parametrize("model", [
        lti_to_network(LtiNetworkModel.uniform(3, 1, Fraction(1, 3))),
        lti_to_network(LtiNetworkModel.uniform(3, 0, 2)),
        neural_network([0.5, 0.75, 1.0]),
    ])
    def test_constructed_models_are_monotone(self, model):
        model.validate()
        for ag in model.agents:
            lo, hi = ag.domain
            grid = PROBE_GRID[(PROBE_GRID > lo) & (PROBE_GRID < hi)]
            slope = ag.dk_inv(grid, *ag.params)
            assert np.all(slope >= 0)
            if not ag.integrator:
                assert np.all(slope > 0)
        for c in model.controllers.values():
            assert np.all(c.dg(PROBE_GRID, *c.params) > 0)

    def test_non_monotone_agent_rejected(self):
        bad = AgentModel(lambda y: -y, lambda y: -1.0 + 0 * y, ())
        with pytest.raises(ModelError):
            validate_agent(bad)

    def test_inconsistent_dynamics_rejected(self):
        # relation y = u but dynamics settle at y = u/2
        bad = AgentModel(lambda y, a: a * y, lambda y, a: a + 0 * y, (1.0,),
                         f=lambda x, a: -2 * a * x, h=lambda x, *_: x)
        with pytest.raises(ModelError):
            validate_agent(bad)

    def test_non_increasing_controller_rejected(self):
        with pytest.raises(ModelError):
            validate_controller(ControllerModel(cubic, cubic_slope, (1.0, -1.0)))

    def test_controller_count(self):
        ag, c = neural_agent(1.0, 0.1)
        with pytest.raises(ModelError):
            NetworkModel((ag, ag, ag), {(1, 2): c})


class TestCoupling:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 63), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
    def test_flow_matches_incidence_formula(self, key, y):
        g = Graph.from_key(4, key)
        m = LtiNetworkModel.random(4, np.random.default_rng(key))
        net = lti_to_network(m)
        E = np.array([[0.0] * g.m for _ in range(4)])
        for k, (i, j) in enumerate(g.edges):
            E[i - 1, k], E[j - 1, k] = 1, -1
        b = np.array([float(m.b[e]) for e in g.edges])
        y = np.array(y)
        assert np.allclose(net.coupling(g).flow(y), E @ (b * (E.T @ y)))

    def test_nonlinear_flow(self):
        ag, _ = neural_agent(1.0, 0.1)
        sinh = ControllerModel(np.sinh, np.cosh, (), spec="sinh")
        lin = lti_controller(1)
        net = NetworkModel((ag, ag, ag), {(1, 2): sinh, (1, 3): lin, (2, 3): lin})
        g = Graph(3, ((1, 2), (2, 3)))
        y = np.array([0.5, -0.2, 0.1])
        expected = [math.sinh(0.7), -math.sinh(0.7) - 0.3, 0.3]
        assert np.allclose(net.coupling(g).flow(y), expected)
        J = net.coupling(g).jacobian(y)
        eps = 1e-7
        num = np.column_stack([(net.coupling(g).flow(y + eps * e) -
                                net.coupling(g).flow(y - eps * e)) / (2 * eps)
                               for e in np.eye(3)])
        assert np.allclose(J, num, atol=1e-6)


class TestConfig:
    def test_wildcards_and_overrides(self):
        text = """
        # three agents
        n=3
        agent *: lti a=1
        agent 2: lti a=1/2
        ctrl * *: lti b=2/3
        ctrl 3 1: lti b=5
        """
        net = parse_model(text)
        assert net.lti is not None
        assert net.lti.a == (1, Fraction(1, 2), 1)
        assert net.lti.b[(1, 3)] == 5 and net.lti.b[(1, 2)] == Fraction(2, 3)

    def test_neural_config(self):
        net = parse_model("n=2\nagent *: neural tau=0.5\nctrl * *: fn linear 0.1\n")
        assert net.lti is None and net.has_dynamics
        assert net.controllers[(1, 2)](1.0) == pytest.approx(0.1)

    def test_round_trip(self):
        for net in (lti_to_network(LtiNetworkModel.random(4, np.random.default_rng(1))),
                    neural_network(random_taus(4, 2))):
            again = parse_model(net.config_text())
            assert again.config_text() == net.config_text()
            assert again.fingerprint() == net.fingerprint()

    def test_fingerprint_distinguishes(self):
        assert (neural_network([0.5, 0.6]).fingerprint()
                != neural_network([0.5, 0.61]).fingerprint())

    @pytest.mark.parametrize("text", [
        "agent *: lti a=1\nctrl * *: lti b=1\n",
        "n=2\nagent 1: lti a=1\nctrl * *: lti b=1\n",
        "n=2\nagent *: lti a=1\n",
        "n=2\nagent *: quantum\nctrl * *: lti b=1\n",
        "n=2\nagent *: lti a=1\nctrl * *: fn nope 1\n",
        "n=2\nagent *: lti a=1\nctrl * *: fn cubic 1\n",
        "n=2\nagent *: lti a=1\nctrl 1 *: lti b=1\n",
        "n=2\nagent *: lti a=1\nctrl * *: fn cubic 1 -1\n",
        "n=2\nagent *: lti a=-1\nctrl * *: lti b=1\n",
        "n=2\nbogus line\n",
    ])
    def test_errors(self, text):
        with pytest.raises(ModelError):
            parse_model(text)
