import json

import numpy as np
import pytest

from sparsedyn.dictionary import DictionarySpec, enumerate_features
from sparsedyn.dynamics import SYSTEMS, generate_dataset
from sparsedyn.metrics import (
    DiscoveryResult,
    coeff_error,
    format_equations,
    simulate_discovered,
    write_xi_csv,
)
from sparsedyn.regression import CoefficientMatrix


class TestCoeffError:
    def test_hand_example(self):
        truth = np.array([[0.0, 1.0], [-0.1, 2.0], [2.0, 0.0]])
        est = np.array([[0.0, 1.0], [-0.108, 1.996], [2.0, 0.0]])
        e = coeff_error(truth, est)
        assert e[0] == pytest.approx(0.008)
        assert e[1] == pytest.approx(0.004)

    def test_zero_at_identity(self):
        xi = np.random.default_rng(0).normal(size=(6, 2))
        assert coeff_error(xi, xi) == [0.0, 0.0]

    def test_triangle_inequality(self):
        rng = np.random.default_rng(1)
        a, b, c = (rng.normal(size=(5, 3)) for _ in range(3))
        ab = np.array(coeff_error(a, b))
        bc = np.array(coeff_error(b, c))
        ac = np.array(coeff_error(a, c))
        assert np.all(ac <= ab + bc + 1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        assert coeff_error(a, b) == coeff_error(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            coeff_error(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_label_mismatch(self):
        with pytest.raises(ValueError):
            coeff_error(np.zeros((2, 1)), np.zeros((2, 1)),
                        labels_truth=["1", "x1"], labels_est=["x1", "1"])

    def test_missed_term_counts_its_magnitude(self):
        truth = np.array([[2.0], [-0.1]])
        est = np.array([[2.0], [0.0]])  # small term pruned away
        assert coeff_error(truth, est) == [pytest.approx(0.1)]


class TestSimulateDiscovered:
    def test_round_trips_generated_data(self):
        system = SYSTEMS["linear_oscillator"]
        spec = DictionarySpec(2, 2)
        xi = system.ground_truth_xi(spec)
        ds = generate_dataset(system, [(2.0, 0.0)], (0, 10), 100, 0.0, refine=1)
        traj = ds.trajectories[0]
        sim = simulate_discovered(xi, spec, traj.initial_condition, traj.times)
        assert not sim.diverged
        np.testing.assert_allclose(sim.states, traj.clean, atol=1e-12)

    def test_divergent_field_truncates(self):
        spec = DictionarySpec(1, 3)
        xi = np.array([[0.0], [0.0], [0.0], [5.0]])  # xdot = 5 x^3 blows up
        times = np.linspace(0, 10, 200)
        with np.errstate(over="ignore", invalid="ignore"):
            sim = simulate_discovered(xi, spec, np.array([2.0]), times)
        assert sim.diverged
        assert sim.times.size < times.size
        assert np.all(np.isfinite(sim.states))

    def test_nonfinite_coefficients_rejected(self):
        spec = DictionarySpec(1, 1)
        with pytest.raises(ValueError):
            simulate_discovered(np.array([[np.nan], [1.0]]), spec,
                                np.array([1.0]), [0.0, 1.0])


class TestFormatEquations:
    def test_linear_oscillator_layout(self):
        spec = DictionarySpec(2, 2)
        xi = SYSTEMS["linear_oscillator"].ground_truth_xi(spec)
        lines = format_equations(xi, enumerate_features(spec))
        assert lines == [
            "dx1/dt = -0.100*x1 + 2.000*x2",
            "dx2/dt = -2.000*x1 - 0.100*x2",
        ]

    def test_constant_term_prints_bare(self):
        lines = format_equations(np.array([[0.1], [-1.0]]), ["1", "x1"])
        assert lines == ["dx1/dt = 0.100 - 1.000*x1"]

    def test_all_zero_column(self):
        lines = format_equations(np.zeros((2, 1)), ["1", "x1"])
        assert lines == ["dx1/dt = 0"]

    def test_precision_option(self):
        lines = format_equations(np.array([[1.0 / 3.0]]), ["x1"], precision=5)
        assert lines == ["dx1/dt = 0.33333*x1"]


class TestDiscoveryResult:
    def _result(self):
        cm = CoefficientMatrix(np.array([[1.5], [0.0]]),
                               np.array([[True], [False]]))
        return DiscoveryResult(
            method="ineural", system="linear_oscillator", sigma=0.02, alpha=1.0,
            seed=7, coefficients=cm, labels=["1", "x1"],
            equations=["dx1/dt = 1.500"], errors=[0.01], runtime_s=1.25,
        )

    def test_json_schema(self, tmp_path):
        res = self._result()
        path = tmp_path / "res.json"
        res.save_json(path, coeff_csv_path="xi.csv")
        payload = json.loads(path.read_text())
        assert set(payload) == {
            "method", "system", "sigma", "alpha", "seed", "equations",
            "coeff_csv_path", "E", "runtime_s",
        }
        assert payload["method"] == "ineural"
        assert payload["E"] == [0.01]
        assert payload["coeff_csv_path"] == "xi.csv"

    def test_xi_csv_layout(self, tmp_path):
        res = self._result()
        path = tmp_path / "xi.csv"
        write_xi_csv(path, res.coefficients, res.labels)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature,x1,x1_active"
        assert lines[1] == "1,1.5,1"
        assert lines[2] == "x1,0.0,0"

    def test_xi_csv_byte_identical(self, tmp_path):
        res = self._result()
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_xi_csv(p1, res.coefficients, res.labels)
        write_xi_csv(p2, res.coefficients, res.labels)
        assert p1.read_bytes() == p2.read_bytes()
