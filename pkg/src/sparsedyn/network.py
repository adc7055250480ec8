"""Sinusoidal implicit representation of trajectories and its normalization.

The network maps normalized time (optionally augmented with a normalized
initial condition for multi-trajectory data) to the normalized state.  Hidden
layers use sine activations with pre-activations scaled by a frequency
omega0 (30 by default); hidden weight initialization divides by omega0 so
the scaled pre-activations stay near unit variance.  The final layer is
affine.

Time derivatives of the network output are exact: they are propagated
forward through the same affine/sine chain, either with dual numbers
(scalar inference) or as extra tape operations (training, so the derivative
itself stays differentiable w.r.t. the parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DualValue


@dataclass
class SirenNetwork:
    weights: list  # per-layer (fan_in, fan_out) float64 matrices
    biases: list  # per-layer (fan_out,) float64 vectors
    omega0: float
    input_dim: int
    output_dim: int

    @property
    def n_layers(self):
        return len(self.weights)

    def parameters(self):
        """Flat parameter list: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def with_parameters(self, params):
        weights = [np.asarray(params[2 * i]) for i in range(self.n_layers)]
        biases = [np.asarray(params[2 * i + 1]) for i in range(self.n_layers)]
        return SirenNetwork(weights, biases, self.omega0, self.input_dim, self.output_dim)

    def layer_frequency(self, layer):
        return self.omega0


def init_siren(dims, omega0=30.0, seed=0):
    """Initialize a SIREN-style network.

    First layer weights ~ U(-1/fan_in, 1/fan_in); subsequent layers
    ~ U(-sqrt(6/fan_in)/omega0, sqrt(6/fan_in)/omega0).  Deterministic for a
    fixed 64-bit seed (counter-based Philox stream).
    """
    dims = list(dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"invalid layer dims {dims}")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    weights, biases = [], []
    for layer in range(len(dims) - 1):
        fan_in, fan_out = dims[layer], dims[layer + 1]
        if layer == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return SirenNetwork(weights, biases, float(omega0), dims[0], dims[-1])


def _stack_inputs(net, t_norm, y0_norm):
    t_norm = np.atleast_1d(np.asarray(t_norm, dtype=np.float64))
    cols = [t_norm[:, None]]
    if net.input_dim > 1:
        if y0_norm is None:
            raise ValueError(
                f"network input_dim={net.input_dim} requires an initial-condition input"
            )
        y0 = np.asarray(y0_norm, dtype=np.float64)
        if y0.ndim == 1:
            y0 = np.broadcast_to(y0, (t_norm.size, y0.size))
        if y0.shape != (t_norm.size, net.input_dim - 1):
            raise ValueError(
                f"initial-condition input shape {y0.shape} != "
                f"({t_norm.size}, {net.input_dim - 1})"
            )
        cols.append(y0)
    elif y0_norm is not None:
        raise ValueError("network has no initial-condition input channel")
    return np.concatenate(cols, axis=1)


def predict(net, t_norm, y0_norm=None, with_derivative=False):
    """Evaluate the network at normalized times (batch).

    Returns x_hat_norm of shape (N, output_dim); with ``with_derivative``
    also returns the exact d(x_hat_norm)/d(t_norm).
    """
    x = _stack_inputs(net, t_norm, y0_norm)
    dx = np.zeros_like(x)
    dx[:, 0] = 1.0
    for layer in range(net.n_layers):
        w, b = net.weights[layer], net.biases[layer]
        pre = x @ w + b
        dpre = dx @ w
        if layer < net.n_layers - 1:
            freq = net.layer_frequency(layer)
            x = np.sin(freq * pre)
            dx = freq * np.cos(freq * pre) * dpre
        else:
            x, dx = pre, dpre
    if with_derivative:
        return x, dx
    return x


def jvp_time(net, t_norm, y0_norm=None, tangent=1.0):
    """Forward-mode evaluation at a single time: DualValue per output."""
    values, derivs = predict(net, [float(t_norm)], y0_norm, with_derivative=True)
    return [
        DualValue(values[0, j], tangent * derivs[0, j]) for j in range(net.output_dim)
    ]


def predict_tape(net, tape, params, inputs, with_tangent=True):
    """Tape forward pass; ``params`` are leaf Tensors matching parameters().

    ``inputs`` is a constant (N, input_dim) Tensor of normalized inputs.
    The tangent (time derivative) is built from tape primitives too, so the
    backward pass differentiates through it.
    """
    n_rows = inputs.data.shape[0]
    seed = np.zeros((n_rows, net.input_dim))
    seed[:, 0] = 1.0
    x = inputs
    dx = tape.constant(seed) if with_tangent else None
    for layer in range(net.n_layers):
        w = params[2 * layer]
        b = params[2 * layer + 1]
        pre = ad.add(ad.matmul(x, w), b)
        dpre = ad.matmul(dx, w) if with_tangent else None
        if layer < net.n_layers - 1:
            freq = net.layer_frequency(layer)
            scaled = ad.scale(pre, freq)
            x = ad.sin(scaled)
            if with_tangent:
                dx = ad.mul(ad.scale(ad.cos(scaled), freq), dpre)
        else:
            x, dx = pre, dpre
    if with_tangent:
        return x, dx
    return x


@dataclass
class NormalizationRecord:
    """Min-max normalization of states and time to [-1, 1], plus alpha scale.

    States are recorded post alpha-scaling; initial-condition network inputs
    share the state channels' record.
    """

    state_min: np.ndarray
    state_max: np.ndarray
    t_min: float
    t_max: float
    alpha: float = 1.0

    def __post_init__(self):
        self.state_min = np.asarray(self.state_min, dtype=np.float64)
        self.state_max = np.asarray(self.state_max, dtype=np.float64)
        if np.any(self.state_max <= self.state_min):
            raise ValueError("degenerate normalization: max <= min on a channel")
        if not self.t_max > self.t_min:
            raise ValueError("degenerate normalization: t_max <= t_min")

    @property
    def state_half_range(self):
        return (self.state_max - self.state_min) / 2.0

    @property
    def time_scale(self):
        """d(t_norm)/dt."""
        return 2.0 / (self.t_max - self.t_min)

    def normalize_states(self, x):
        return -1.0 + (np.asarray(x) - self.state_min) / self.state_half_range

    def denormalize_states(self, x_norm):
        return self.state_min + (np.asarray(x_norm) + 1.0) * self.state_half_range

    def normalize_time(self, t):
        return -1.0 + (np.asarray(t) - self.t_min) * self.time_scale

    def denormalize_time(self, t_norm):
        return self.t_min + (np.asarray(t_norm) + 1.0) / self.time_scale

    def to_dict(self):
        return {
            "state_min": self.state_min.tolist(),
            "state_max": self.state_max.tolist(),
            "t_min": self.t_min,
            "t_max": self.t_max,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.array(d["state_min"]),
            np.array(d["state_max"]),
            float(d["t_min"]),
            float(d["t_max"]),
            float(d["alpha"]),
        )


def denormalize_state_and_derivative(x_norm, dxdt_norm, record):
    """Map normalized predictions and their normalized-time derivatives to
    physical coordinates (chain rule through state and time scaling)."""
    x_phys = record.denormalize_states(x_norm)
    dxdt_phys = np.asarray(dxdt_norm) * record.state_half_range * record.time_scale
    return x_phys, dxdt_phys


def save_checkpoint(net, path):
    """JSON checkpoint: layer matrices with a shape header."""
    import json

    payload = {
        "omega0": net.omega0,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "shapes": [list(w.shape) for w in net.weights],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    import json

    with open(path) as fh:
        payload = json.load(fh)
    weights = [np.array(w, dtype=np.float64) for w in payload["weights"]]
    biases = [np.array(b, dtype=np.float64) for b in payload["biases"]]
    for w, shape in zip(weights, payload["shapes"]):
        if list(w.shape) != shape:
            raise ValueError("checkpoint shape header mismatch")
    return SirenNetwork(
        weights, biases, payload["omega0"], payload["input_dim"], payload["output_dim"]
    )
