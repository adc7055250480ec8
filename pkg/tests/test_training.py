import numpy as np
import pytest

from sparsedyn import autodiff as ad
from sparsedyn.dictionary import DictionarySpec, eval_features
from sparsedyn.dynamics import SYSTEMS, generate_dataset
from sparsedyn.training import (
    AdamState,
    LossWeights,
    TrainSchedule,
    TrainingTrace,
    adam_step,
    loss_deri,
    loss_mse,
    loss_rk4,
    method_name,
    rk4_residual_tape,
    train_ineural,
    trajectory_pairs,
)


class TestLossWeights:
    def test_defaults(self):
        w = LossWeights()
        assert (w.mu1, w.mu2, w.mu3) == (1.0, 0.1, 0.1)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(mu2=-0.1)

    def test_method_names(self):
        assert method_name(LossWeights()) == "ineural"
        assert method_name(LossWeights(mu2=0.0)) == "rk4_only"
        assert method_name(LossWeights(mu3=0.0)) == "deri_only"


class TestSchedule:
    def test_defaults(self):
        s = TrainSchedule()
        assert s.max_iter == 15000 and s.init_iter == 5000 and s.q == 2000
        assert s.tol == 0.05
        assert (s.lr_net, s.lr_xi) == (1e-4, 1e-3)
        assert (s.post_lr_net, s.post_lr_xi) == (5e-6, 1e-2)

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainSchedule(max_iter=100, init_iter=100)
        with pytest.raises(ValueError):
            TrainSchedule(q=0)


class TestAdam:
    def test_first_step_magnitude(self):
        # with a single uniform gradient the first bias-corrected step is
        # lr * g / (|g| + eps): just under lr in magnitude
        state = AdamState([(1,)])
        (p,) = state.step([np.zeros(1)], [np.array([2.5])], lr=1e-3)
        assert p[0] == pytest.approx(-9.99999996e-4, rel=1e-6)

    def test_scalar_quadratic_converges(self):
        p = np.array([5.0])
        state = AdamState([(1,)])
        for _ in range(2000):
            (p,) = state.step([p], [2 * p], lr=0.05)
        assert abs(p[0]) < 1e-3

    def test_step_counter_shared_across_params(self):
        state = AdamState([(1,), (2,)])
        params = [np.zeros(1), np.zeros(2)]
        grads = [np.ones(1), np.ones(2)]
        params, state = adam_step(params, grads, state, 1e-2)
        assert state.t == 1

    def test_reference_sequence(self):
        # two hand-checked steps with fixed gradients 1.0 then 0.9, lr = 0.1
        state = AdamState([(1,)])
        p = np.array([1.0])
        (p,) = state.step([p], [np.array([1.0])], 0.1)
        p1 = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8)
        assert p[0] == pytest.approx(p1, abs=1e-15)
        (p,) = state.step([p], [np.array([0.9])], 0.1)
        m = 0.9 * 0.1 + 0.1 * 0.9
        v = 0.999 * 0.001 + 0.001 * 0.9**2
        m_hat = m / (1 - 0.9**2)
        v_hat = v / (1 - 0.999**2)
        assert p[0] == pytest.approx(p1 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8),
                                     abs=1e-12)


class TestLossValues:
    def test_mse_hand_example(self):
        pred = np.array([[1.0, 0.0], [0.0, 1.0]])
        data = np.array([[0.0, 0.0], [0.0, 0.0]])
        assert loss_mse(pred, data) == pytest.approx(1.0)

    def test_mse_shape_mismatch(self):
        with pytest.raises(ValueError):
            loss_mse(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_deri_zero_at_truth(self):
        spec = DictionarySpec(2, 2)
        system = SYSTEMS["linear_oscillator"]
        rng = np.random.default_rng(0)
        states = rng.uniform(-1, 1, size=(20, 2))
        theta = eval_features(spec, states)
        xdot = np.array([system.rhs(x) for x in states])
        xi = system.ground_truth_xi(spec)
        assert loss_deri(xdot, theta, xi) == pytest.approx(0.0, abs=1e-24)
        assert loss_deri(xdot + 0.1, theta, xi) == pytest.approx(0.02, rel=1e-9)

    def test_rk4_loss_near_zero_on_simulated_data(self):
        spec = DictionarySpec(2, 2)
        system = SYSTEMS["linear_oscillator"]
        ds = generate_dataset(system, [(2.0, 0.0)], (0, 5), 100, 0.0, refine=1)
        xi = system.ground_truth_xi(spec)
        traj = ds.trajectories[0]
        h = np.diff(traj.times)
        # refine=1 means the data IS the RK4 orbit of the true field
        assert loss_rk4(traj.clean, xi, spec, h) == pytest.approx(0.0, abs=1e-20)

    def test_rk4_loss_rejects_bad_steps(self):
        spec = DictionarySpec(2, 2)
        with pytest.raises(ValueError):
            loss_rk4(np.zeros((3, 2)), np.zeros((6, 2)), spec, -0.1)


class TestTrajectoryPairs:
    def test_pairs_stay_within_trajectories(self):
        ds = generate_dataset(
            "linear_oscillator", [(2.0, 0.0), (1.0, -1.0)], (0, 10), 50, 0.0
        )
        pairs = trajectory_pairs(ds)
        assert pairs.idx_k.size == 98  # 49 per trajectory, none across the seam
        assert np.all(pairs.idx_k1 - pairs.idx_k == 1)
        assert (pairs.idx_k == 49).sum() == 0  # last row of traj 0 never a start
        np.testing.assert_allclose(pairs.h, 10.0 / 49.0, atol=1e-12)

    def test_time_scale_applied(self):
        ds = generate_dataset("linear_oscillator", [(2.0, 0.0)], (0, 10), 11, 0.0)
        a = trajectory_pairs(ds)
        b = trajectory_pairs(ds, time_scale=0.2)
        np.testing.assert_allclose(b.h, 0.2 * a.h, atol=1e-15)


def test_rk4_residual_tape_matches_numpy_loss():
    spec = DictionarySpec(2, 2)
    system = SYSTEMS["linear_oscillator"]
    ds = generate_dataset(system, [(2.0, 0.0), (0.5, 1.0)], (0, 5), 40, 0.02,
                          seed=2)
    rng = np.random.default_rng(3)
    xi = system.ground_truth_xi(spec) + 0.05 * rng.normal(size=(6, 2))
    pairs = trajectory_pairs(ds)
    tape = ad.Tape()
    loss = rk4_residual_tape(tape, spec, pairs, tape.leaf(xi))
    expected = np.mean(
        [
            loss_rk4(t.noisy, xi, spec, np.diff(t.times))
            for t in ds.trajectories
        ]
    )
    # both trajectories share N and h, so per-trajectory means average cleanly
    assert loss.item() == pytest.approx(expected, rel=1e-12)


def test_rk4_residual_tape_gradient_matches_finite_differences():
    spec = DictionarySpec(2, 2)
    ds = generate_dataset("linear_oscillator", [(2.0, 0.0)], (0, 5), 25, 0.01,
                          seed=4)
    pairs = trajectory_pairs(ds)
    rng = np.random.default_rng(5)
    xi = 0.1 * rng.normal(size=(6, 2))

    def value(m):
        tape = ad.Tape()
        return rk4_residual_tape(tape, spec, pairs, tape.leaf(m)).item()

    tape = ad.Tape()
    leaf = tape.leaf(xi)
    grads = tape.backward(rk4_residual_tape(tape, spec, pairs, leaf))
    h = 1e-6
    for i in range(6):
        for j in range(2):
            xp, xm = xi.copy(), xi.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd = (value(xp) - value(xm)) / (2 * h)
            np.testing.assert_allclose(grads[leaf][i, j], fd, rtol=1e-5,
                                       atol=1e-10)


class TestTrainIneural:
    @pytest.fixture(scope="class")
    @staticmethod
    def quick_result():
        ds = generate_dataset(
            "linear_oscillator", [(-2.0, 1.0), (1.5, -1.5)], (0, 10), 64, 0.0,
            seed=0,
        )
        spec = DictionarySpec(2, 2)
        schedule = TrainSchedule(max_iter=600, init_iter=300, q=150, tol=0.05)
        return train_ineural(ds, spec, schedule=schedule, seed=0,
                             hidden=(16, 16), trace_stride=10)

    def test_masked_entries_stay_zero(self, quick_result):
        cm = quick_result.coefficients
        assert np.all(cm.values[~cm.mask] == 0.0)

    def test_active_terms_monotone_nonincreasing(self, quick_result):
        active = quick_result.trace.active_terms
        assert all(a >= b for a, b in zip(active, active[1:]))

    def test_no_thresholding_before_init_iter(self, quick_result):
        for iteration, _ in quick_result.trace.threshold_events:
            assert iteration > 300 and iteration % 150 == 0

    def test_result_metadata(self, quick_result):
        assert quick_result.method == "ineural"
        assert quick_result.system == "linear_oscillator"
        assert len(quick_result.labels) == 6
        assert len(quick_result.equations) == 2
        assert quick_result.errors is not None and len(quick_result.errors) == 2
        assert quick_result.runtime_s > 0

    def test_deterministic_repeat(self):
        ds = generate_dataset("linear_oscillator", [(-2.0, 1.0)], (0, 10), 32,
                              0.02, seed=1)
        spec = DictionarySpec(2, 2)
        schedule = TrainSchedule(max_iter=50, init_iter=20, q=10, tol=0.05)
        kwargs = dict(schedule=schedule, seed=3, hidden=(8, 8))
        a = train_ineural(ds, spec, **kwargs)
        b = train_ineural(ds, spec, **kwargs)
        assert np.array_equal(a.coefficients.values, b.coefficients.values)
        assert a.trace.loss_total == b.trace.loss_total

    def test_single_trajectory_network_has_no_ic_channel(self):
        ds = generate_dataset("linear_oscillator", [(-2.0, 1.0)], (0, 10), 32,
                              0.0, seed=1)
        spec = DictionarySpec(2, 2)
        schedule = TrainSchedule(max_iter=5, init_iter=2, q=2, tol=0.05)
        res = train_ineural(ds, spec, schedule=schedule, hidden=(8,))
        assert res.network.input_dim == 1

    def test_multi_trajectory_network_conditioned_on_ic(self, quick_result):
        assert quick_result.network.input_dim == 3

    def test_rk4_only_mode_skips_derivative_loss(self):
        ds = generate_dataset("linear_oscillator", [(-2.0, 1.0)], (0, 10), 32,
                              0.0, seed=1)
        spec = DictionarySpec(2, 2)
        schedule = TrainSchedule(max_iter=5, init_iter=2, q=2, tol=0.05)
        res = train_ineural(ds, spec, weights=LossWeights(mu2=0.0),
                            schedule=schedule, hidden=(8,))
        assert res.method == "rk4_only"
        assert all(v == 0.0 for v in res.trace.loss_deri)


def test_trace_csv_round_trip(tmp_path):
    trace = TrainingTrace()
    trace.append(1, 0.5, 0.25, 0.125, 0.125, 12)
    trace.append(2, 0.4, 0.2, 0.1, 0.1, 12)
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,loss_total,loss_mse,loss_deri,loss_rk4,active_terms"
    assert lines[1] == "1,0.5,0.25,0.125,0.125,12"
