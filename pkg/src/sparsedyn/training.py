"""Joint training of the implicit representation and the sparse coefficients.

The total loss is a weighted sum of three terms: data misfit of the network
output (MSE), the sparse-regression residual between the network's exact time
derivative and the dictionary model, and an RK4 one-step prediction residual
of the dictionary model applied to the network output.  Setting the
derivative weight or the integration weight to zero recovers the two
single-ingredient baselines.

One training run is strictly sequential; the tape is rebuilt every step so a
shrinking sparsity mask simply changes the graph.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import dictionary as dct
from . import dynamics as dyn
from . import metrics
from .network import init_siren, predict_tape
from .regression import CoefficientMatrix, threshold


class TrainingDivergence(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class LossWeights:
    mu1: float = 1.0
    mu2: float = 0.1
    mu3: float = 0.1

    def __post_init__(self):
        if min(self.mu1, self.mu2, self.mu3) < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class TrainSchedule:
    max_iter: int = 15000
    init_iter: int = 5000
    q: int = 2000
    tol: float = 0.05
    lr_net: float = 1e-4
    lr_xi: float = 1e-3
    post_lr_net: float = 5e-6
    post_lr_xi: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.init_iter >= self.max_iter:
            raise ValueError("init_iter must be < max_iter")
        if self.q <= 0:
            raise ValueError("q must be > 0")


@dataclass
class TrainingTrace:
    iterations: list = field(default_factory=list)
    loss_total: list = field(default_factory=list)
    loss_mse: list = field(default_factory=list)
    loss_deri: list = field(default_factory=list)
    loss_rk4: list = field(default_factory=list)
    active_terms: list = field(default_factory=list)
    threshold_events: list = field(default_factory=list)  # (iteration, n_pruned)

    def append(self, iteration, total, mse, deri, rk4, active):
        self.iterations.append(iteration)
        self.loss_total.append(total)
        self.loss_mse.append(mse)
        self.loss_deri.append(deri)
        self.loss_rk4.append(rk4)
        self.active_terms.append(active)

    def log_threshold(self, iteration, n_pruned):
        self.threshold_events.append((iteration, n_pruned))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,loss_total,loss_mse,loss_deri,loss_rk4,active_terms\n")
            for row in zip(
                self.iterations,
                self.loss_total,
                self.loss_mse,
                self.loss_deri,
                self.loss_rk4,
                self.active_terms,
            ):
                fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                                  for v in row) + "\n")


class AdamState:
    """Bias-corrected first/second moment state for a list of arrays."""

    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            out.append(p - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(params, grads, state, lr):
    """One Adam update; returns (updated params, state)."""
    return state.step(params, grads, lr), state


def loss_mse(predictions, data):
    """Mean over samples of the squared residual norm."""
    predictions = np.asarray(predictions, dtype=np.float64)
    data = np.asarray(data, dtype=np.float64)
    if predictions.shape != data.shape:
        raise ValueError("prediction/data shape mismatch")
    return float(np.mean(np.sum((data - predictions) ** 2, axis=1)))


def loss_deri(dxdt, theta_matrix, xi):
    """Mean squared residual of dxdt - Theta @ Xi over all samples."""
    resid = np.asarray(dxdt) - np.asarray(theta_matrix) @ np.asarray(xi)
    return float(np.mean(np.sum(resid**2, axis=1)))


def loss_rk4(states, xi, spec, h):
    """Mean over consecutive pairs of the 1/h-scaled RK4 one-step residual.

    ``states`` is one trajectory (N, n); h may be scalar or per-step (N-1,).
    """
    states = np.asarray(states, dtype=np.float64)
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (states.shape[0] - 1,))
    if np.any(h <= 0):
        raise ValueError("step sizes must be > 0")

    def f(x):
        return dct.eval_features(spec, x) @ xi

    xk = states[:-1]
    hcol = h[:, None]
    a1 = f(xk)
    a2 = f(xk + 0.5 * hcol * a1)
    a3 = f(xk + 0.5 * hcol * a2)
    a4 = f(xk + hcol * a3)
    pred = xk + hcol / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    resid = (states[1:] - pred) / hcol
    return float(np.mean(np.sum(resid**2, axis=1)))


@dataclass
class TrajectoryPairs:
    """Consecutive-sample pairs within trajectories (never across them)."""

    idx_k: np.ndarray  # row indices into the stacked dataset
    idx_k1: np.ndarray
    h: np.ndarray  # (P, 1) step sizes
    x_k: np.ndarray  # raw noisy states at idx_k
    x_k1: np.ndarray


def trajectory_pairs(dataset, time_scale=None):
    """Pair bookkeeping for the stacked row layout of a dataset.

    ``time_scale`` rescales the step sizes (used when losses are computed in
    normalized time).
    """
    idx_k, idx_k1, hs = [], [], []
    offset = 0
    for traj in dataset.trajectories:
        n = traj.n_samples
        idx_k.append(np.arange(offset, offset + n - 1))
        idx_k1.append(np.arange(offset + 1, offset + n))
        hs.append(np.diff(traj.times))
        offset += n
    idx_k = np.concatenate(idx_k)
    idx_k1 = np.concatenate(idx_k1)
    h = np.concatenate(hs)[:, None]
    if time_scale is not None:
        h = h * time_scale
    _, noisy, _, _, _ = dataset.stacked()
    return TrajectoryPairs(idx_k, idx_k1, h, noisy[idx_k], noisy[idx_k1])


def rk4_residual_tape(tape, spec, pairs, xi, states=None, cache=None):
    """Tape expression for the mean squared 1/h-scaled RK4 one-step residual.

    With ``states`` given (a (N, n) tensor of network predictions), pairs are
    gathered from it; otherwise the raw data in ``pairs`` is used as
    constants and only Xi carries gradients.  The dictionary is evaluated at
    all four internal stages inside the tape.
    """
    h = tape.constant(pairs.h)
    half_h = tape.constant(pairs.h / 2.0)
    inv_h = tape.constant(1.0 / pairs.h)
    if states is not None:
        xk = ad.gather_rows(states, pairs.idx_k)
        xk1 = ad.gather_rows(states, pairs.idx_k1)
        a1 = ad.matmul(dct.eval_features_tape(spec, xk), xi)
    else:
        xk = tape.constant(pairs.x_k)
        xk1 = tape.constant(pairs.x_k1)
        if cache is not None and "theta_k" in cache:
            theta_k = cache["theta_k"]
        else:
            theta_k = dct.eval_features(spec, pairs.x_k)
            if cache is not None:
                cache["theta_k"] = theta_k
        a1 = ad.matmul(tape.constant(theta_k), xi)

    def f(x):
        return ad.matmul(dct.eval_features_tape(spec, x), xi)

    a2 = f(ad.add(xk, ad.mul(half_h, a1)))
    a3 = f(ad.add(xk, ad.mul(half_h, a2)))
    a4 = f(ad.add(xk, ad.mul(h, a3)))
    incr = ad.add(ad.add(a1, ad.scale(ad.add(a2, a3), 2.0)), a4)
    pred = ad.add(xk, ad.mul(ad.scale(h, 1.0 / 6.0), incr))
    resid = ad.mul(ad.sub(xk1, pred), inv_h)
    return ad.sum_squared_rows_mean(resid)


@dataclass
class LossContext:
    """Everything the per-iteration loss assembly needs besides parameters."""

    net: object
    spec: object
    weights: LossWeights
    pairs: TrajectoryPairs
    inputs: np.ndarray  # (N, input_dim) normalized network inputs
    target: np.ndarray  # data the MSE term fits, in loss coordinates
    out_scale: np.ndarray = None  # physical-coordinate affine map, or None
    out_offset: np.ndarray = None
    deriv_scale: np.ndarray = None


def assemble_losses(tape, ctx, param_leaves, xi_masked):
    """Build the weighted total loss on a tape; returns (total, parts).

    ``parts`` holds the unweighted (mse, deri, rk4) component values; the
    derivative and integration terms are skipped entirely when their weight
    is zero.
    """
    weights = ctx.weights
    need_tangent = weights.mu2 > 0
    inp = tape.constant(ctx.inputs)
    if need_tangent:
        xh, dxh = predict_tape(ctx.net, tape, param_leaves, inp, with_tangent=True)
    else:
        xh = predict_tape(ctx.net, tape, param_leaves, inp, with_tangent=False)
        dxh = None
    if ctx.out_scale is not None:
        xh = ad.add(ad.mul(xh, tape.constant(ctx.out_scale)),
                    tape.constant(ctx.out_offset))
        if dxh is not None:
            dxh = ad.mul(dxh, tape.constant(ctx.deriv_scale))

    l_mse = ad.sum_squared_rows_mean(ad.sub(tape.constant(ctx.target), xh))
    terms = [ad.scale(l_mse, weights.mu1)]
    l_deri_val = l_rk4_val = 0.0
    if weights.mu2 > 0:
        theta_hat = dct.eval_features_tape(ctx.spec, xh)
        l_deri = ad.sum_squared_rows_mean(ad.sub(dxh, ad.matmul(theta_hat, xi_masked)))
        l_deri_val = l_deri.item()
        terms.append(ad.scale(l_deri, weights.mu2))
    if weights.mu3 > 0:
        l_rk4 = rk4_residual_tape(tape, ctx.spec, ctx.pairs, xi_masked, states=xh)
        l_rk4_val = l_rk4.item()
        terms.append(ad.scale(l_rk4, weights.mu3))
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total, (l_mse.item(), l_deri_val, l_rk4_val)


def method_name(weights):
    if weights.mu2 == 0 and weights.mu3 > 0:
        return "rk4_only"
    if weights.mu3 == 0 and weights.mu2 > 0:
        return "deri_only"
    return "ineural"


def train_ineural(
    dataset,
    spec,
    weights=None,
    schedule=None,
    seed=0,
    hidden=(32, 32, 32),
    omega0=30.0,
    losses_in_physical=True,
    xi0=None,
    trace_stride=1,
):
    """Full joint training loop; returns a DiscoveryResult.

    No thresholding before ``schedule.init_iter``; afterwards, at every
    iteration that is a multiple of ``schedule.q`` (the first one strictly
    greater than init_iter), small coefficients are pruned, the optimizer
    state is rebuilt, and learning rates are reset to their post-threshold
    values.
    """
    weights = weights or LossWeights()
    schedule = schedule or TrainSchedule()
    if not dataset.trajectories:
        raise ValueError("dataset has no trajectories")
    t_start = time.perf_counter()
    record = dataset.record
    n = dataset.state_dim
    times, noisy, _, ics, _ = dataset.stacked()
    multi = dataset.n_trajectories > 1
    t_norm = record.normalize_time(times)
    inputs = t_norm[:, None]
    if multi:
        inputs = np.concatenate([inputs, record.normalize_states(ics)], axis=1)
    net = init_siren([inputs.shape[1], *hidden, n], omega0=omega0, seed=seed)
    params = net.parameters()

    if losses_in_physical:
        target = noisy
        out_scale = record.state_half_range[None, :]
        out_offset = (record.state_min + record.state_half_range)[None, :]
        deriv_scale = (record.state_half_range * record.time_scale)[None, :]
        pair_time_scale = None
    else:
        target = record.normalize_states(noisy)
        out_scale = out_offset = deriv_scale = None
        pair_time_scale = record.time_scale
    pairs = trajectory_pairs(dataset, time_scale=pair_time_scale)

    d = spec.feature_count
    xi = np.zeros((d, n)) if xi0 is None else np.asarray(xi0, dtype=np.float64).copy()
    mask = np.ones((d, n), dtype=bool)
    adam_net = AdamState([p.shape for p in params], schedule.beta1, schedule.beta2,
                         schedule.eps)
    adam_xi = AdamState([xi.shape], schedule.beta1, schedule.beta2, schedule.eps)
    lr_net, lr_xi = schedule.lr_net, schedule.lr_xi
    trace = TrainingTrace()
    ctx = LossContext(
        net=net, spec=spec, weights=weights, pairs=pairs, inputs=inputs,
        target=target, out_scale=out_scale, out_offset=out_offset,
        deriv_scale=deriv_scale,
    )

    for k in range(1, schedule.max_iter + 1):
        tape = ad.Tape()
        leaves = [tape.leaf(p) for p in params]
        xi_leaf = tape.leaf(xi)
        xi_m = ad.mul(xi_leaf, tape.constant(mask.astype(np.float64)))
        total, (mse_val, l_deri_val, l_rk4_val) = assemble_losses(
            tape, ctx, leaves, xi_m
        )

        total_val = total.item()
        if not np.isfinite(total_val):
            raise TrainingDivergence(f"loss became non-finite at iteration {k}", trace)
        if k % trace_stride == 0 or k == 1:
            trace.append(k, total_val, mse_val, l_deri_val, l_rk4_val,
                         int(mask.sum()))

        grads = tape.backward(total)
        params = adam_net.step(params, [grads[lv] for lv in leaves], lr_net)
        xi_grad = grads[xi_leaf] * mask
        (xi,) = adam_xi.step([xi], [xi_grad], lr_xi)
        xi *= mask

        if k > schedule.init_iter and k % schedule.q == 0:
            cm = threshold(CoefficientMatrix(xi, mask), schedule.tol)
            pruned = int(mask.sum() - cm.mask.sum())
            xi, mask = cm.values, cm.mask
            trace.log_threshold(k, pruned)
            adam_net = AdamState([p.shape for p in params], schedule.beta1,
                                 schedule.beta2, schedule.eps)
            adam_xi = AdamState([xi.shape], schedule.beta1, schedule.beta2,
                                schedule.eps)
            lr_net, lr_xi = schedule.post_lr_net, schedule.post_lr_xi

    net = net.with_parameters(params)
    runtime = time.perf_counter() - t_start
    coeffs = CoefficientMatrix(xi, mask)
    labels = dct.enumerate_features(spec)
    errors = None
    if dataset.system in dyn.SYSTEMS:
        truth = dyn.SYSTEMS[dataset.system].ground_truth_xi(spec, dataset.alpha)
        errors = metrics.coeff_error(truth, coeffs.values)
    return metrics.DiscoveryResult(
        method=method_name(weights),
        system=dataset.system,
        sigma=dataset.sigma,
        alpha=dataset.alpha,
        seed=seed,
        coefficients=coeffs,
        labels=labels,
        equations=metrics.format_equations(coeffs.values, labels),
        errors=errors,
        runtime_s=runtime,
        trace=trace,
        network=net,
    )
