import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpl.graph import Digraph
from cpl.integrate import StepSizeError
from cpl.reference import REFERENCE_AVERAGE, REFERENCE_X0, reference_scenario
from cpl.signals import Chirp, Constant, ExpDecay
from cpl.sim import (
    Scenario, ScenarioError, conservation_residual, consensus_error, read_csv, resolve_step, simulate, write_csv,
)


def unbalanced_triangle():
    return Digraph.from_edges(3, [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0), (1, 3, 2.0)])


class TestScenario:
    def test_rejects_bad_inputs(self, reference_graph):
        with pytest.raises(ScenarioError):
            Scenario(reference_graph, (1, 2), None, None)
        with pytest.raises(ScenarioError):
            Scenario(reference_graph, REFERENCE_X0, None, None, horizon=0.0)
        with pytest.raises(ScenarioError):
            Scenario(reference_graph, REFERENCE_X0, None, None, horizon=1.0, step=2.0)

    def test_unbalanced_needs_override(self):
        with pytest.raises(ScenarioError, match="balanced"):
            Scenario(unbalanced_triangle(), (1, 2, 3), None, None)
        Scenario(unbalanced_triangle(), (1, 2, 3), None, None, allow_unbalanced=True)

    def test_explicit_step_checked(self):
        s = reference_scenario(horizon=30.0, step=1e-3)
        with pytest.raises(StepSizeError):
            simulate(s)

    def test_auto_step_reduction(self):
        assert resolve_step(reference_scenario(horizon=30.0)) == 1e-4
        assert resolve_step(reference_scenario(horizon=60.0)) == 5e-5


class TestSimulate:
    def test_unperturbed_consensus(self):
        tr = simulate(reference_scenario(horizon=20.0, perturbed=False))
        assert np.abs(tr.x[-1] - REFERENCE_AVERAGE).max() <= 1e-3

    def test_perturbed_consensus(self, reference_observed):
        tr, _ = reference_observed
        assert np.abs(tr.x[-1] - REFERENCE_AVERAGE).max() <= 1e-2

    def test_single_agent(self):
        s = Scenario(Digraph(np.zeros((1, 1))), (2.5,), None, None, horizon=3.0)
        tr = simulate(s)
        assert np.all(tr.x == 2.5)

    def test_output_identity(self, reference, reference_observed):
        tr, _ = reference_observed
        g = np.column_stack([gi(tr.times) for gi in reference.g])
        assert np.abs(tr.y - (tr.x + g)).max() <= 1e-12

    def test_grid(self, reference_observed):
        tr, _ = reference_observed
        dt = np.diff(tr.times)
        assert np.all(dt > 0) and np.ptp(dt) <= 1e-9
        assert tr.times[-1] == 30.0 and len(tr.times) <= 100_001

    def test_equal_start_is_equilibrium(self, reference_graph):
        tr = simulate(Scenario(reference_graph, (0.7,) * 5, None, None, horizon=5.0))
        assert np.abs(tr.x - 0.7).max() <= 1e-13

    def test_step_halving_order(self):
        # short horizon so the transient, and with it the truncation error, is still visible
        finals = [simulate(reference_scenario(horizon=2.0, step=h, perturbed=False)).x[-1]
                  for h in (0.025, 0.0125, 0.00625)]
        ratio = np.abs(finals[0] - finals[1]).max() / np.abs(finals[1] - finals[2]).max()
        assert ratio >= 8.0


class TestConservation:
    def test_unperturbed(self):
        s = reference_scenario(horizon=10.0, perturbed=False)
        assert conservation_residual(simulate(s), s) <= 1e-9

    def test_reference(self, reference, reference_observed):
        assert conservation_residual(reference_observed[0], reference) <= 1e-6

    def test_unbalanced_breaks_identity(self):
        s = Scenario(unbalanced_triangle(), (1.0, 2.0, 6.0), None, None, horizon=10.0, allow_unbalanced=True)
        assert conservation_residual(simulate(s), s) >= 1e-2

    @settings(max_examples=8)
    @given(st.lists(st.floats(-3, 3), min_size=5, max_size=5), st.lists(st.floats(-2, 2), min_size=5, max_size=5),
           st.floats(0.5, 2.0))
    def test_random_signals(self, amps, consts, quad):
        from cpl.reference import five_agent_graph
        f = tuple(ExpDecay(a, 1.0) + Constant(c) for a, c in zip(amps, consts))
        g = tuple(Chirp(1.0, a, quad) for a in amps)
        s = Scenario(five_agent_graph(), REFERENCE_X0, f, g, horizon=5.0)
        assert conservation_residual(simulate(s), s) <= 1e-9


class TestConsensusError:
    def test_reference(self, reference_observed):
        assert consensus_error(reference_observed[0]).max() <= 1e-2

    def test_nonzero_beta_sum_shifts_limit(self, reference_graph):
        f = (ExpDecay(1.0, 1.0),) + (Constant(0.0),) * 4
        s = Scenario(reference_graph, REFERENCE_X0, f, None, horizon=30.0)
        tr = simulate(s)
        np.testing.assert_allclose(tr.x[-1], REFERENCE_AVERAGE + 1 / 5, atol=1e-2)
        assert consensus_error(tr).min() >= 0.1

    def test_zero_when_equal(self, reference_graph):
        tr = simulate(Scenario(reference_graph, (1.0,) * 5, None, None, horizon=2.0))
        assert consensus_error(tr).max() == 0.0


class TestCsv:
    def test_round_trip(self, tmp_path):
        s = reference_scenario(horizon=1.0)
        tr = simulate(s)
        path = tmp_path / "traj.csv"
        write_csv(tr, path, aux=["acc1"])
        header, data = read_csv(path)
        assert header == ["t"] + [f"x{i}" for i in range(1, 6)] + [f"y{i}" for i in range(1, 6)] + ["acc1"]
        np.testing.assert_array_equal(data[:, 1:6], tr.x)
        np.testing.assert_array_equal(data[:, 0], tr.times)
