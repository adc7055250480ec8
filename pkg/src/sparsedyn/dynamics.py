"""Benchmark ODE systems, RK4 integration, and synthetic dataset assembly.

Data generation integrates each trajectory with fixed-step RK4 on a refined
internal grid (default 10x) and subsamples back to the requested times, which
keeps integration error well below the smallest tested noise level while
staying bitwise reproducible.  States are multiplied by the scaling factor
alpha before Gaussian noise is injected, so sigma is expressed in scaled
units.  Noise streams come from numpy's counter-based 64-bit Philox
generator keyed by the dataset seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dct
from .network import NormalizationRecord


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OdeSystem:
    """A benchmark system: right-hand side plus its sparse dictionary form.

    ``terms`` maps monomial exponent tuples to the coefficient of that
    monomial in each state equation, e.g. {(1, 0): (-0.1, -2.0), ...}.
    """

    name: str
    state_dim: int
    terms: dict

    def rhs(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(self.state_dim)
        for exps, coeffs in self.terms.items():
            mono = 1.0
            for i, e in enumerate(exps):
                if e:
                    mono *= x[i] ** e
            out += mono * np.asarray(coeffs)
        return out

    def scaled_terms(self, alpha):
        """Dictionary coefficients of the alpha-scaled states z = alpha*x.

        A degree-k monomial term picks up a factor alpha**(1-k): substituting
        x = z/alpha into dz/dt = alpha*f(z/alpha).
        """
        out = {}
        for exps, coeffs in self.terms.items():
            degree = sum(exps)
            out[exps] = tuple(c * alpha ** (1 - degree) for c in coeffs)
        return out

    def scaled_rhs(self, z, alpha):
        z = np.asarray(z, dtype=np.float64)
        return alpha * self.rhs(z / alpha)

    def ground_truth_xi(self, spec, alpha=1.0):
        """Coefficient matrix reproducing the (scaled) rhs under ``spec``."""
        if spec.state_dim != self.state_dim:
            raise ValueError("dictionary state_dim mismatch")
        index = {exps: i for i, exps in enumerate(dct.exponent_tuples(spec))}
        xi = np.zeros((spec.feature_count, self.state_dim))
        for exps, coeffs in self.scaled_terms(alpha).items():
            if exps not in index:
                raise ValueError(
                    f"system term {exps} not representable in dictionary "
                    f"(degree {sum(exps)} > {spec.max_poly_degree}?)"
                )
            xi[index[exps], :] = coeffs
        return xi


LORENZ_GAMMA, LORENZ_RHO, LORENZ_BETA = 10.0, 28.0, 8.0 / 3.0

SYSTEMS = {
    "linear_oscillator": OdeSystem(
        "linear_oscillator",
        2,
        {(1, 0): (-0.1, -2.0), (0, 1): (2.0, -0.1)},
    ),
    "cubic_oscillator": OdeSystem(
        "cubic_oscillator",
        2,
        {(3, 0): (-0.1, -2.0), (0, 3): (2.0, -0.1)},
    ),
    "fhn": OdeSystem(
        "fhn",
        2,
        {
            (0, 0): (0.1, 0.0),
            (1, 0): (1.0, 0.1),
            (0, 1): (-1.0, -0.1),
            (3, 0): (-1.0 / 3.0, 0.0),
        },
    ),
    "lorenz": OdeSystem(
        "lorenz",
        3,
        {
            (1, 0, 0): (-LORENZ_GAMMA, LORENZ_RHO, 0.0),
            (0, 1, 0): (LORENZ_GAMMA, -1.0, 0.0),
            (0, 0, 1): (0.0, 0.0, -LORENZ_BETA),
            (1, 0, 1): (0.0, -1.0, 0.0),
            (1, 1, 0): (0.0, 0.0, 1.0),
        },
    ),
}


def integrate_rk4_fixed(f, x0, times):
    """Classical RK4 marching over the given (strictly increasing) times."""
    times = np.asarray(times, dtype=np.float64)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    x0 = np.asarray(x0, dtype=np.float64)
    out = np.empty((times.size, x0.size))
    out[0] = x0
    x = x0
    for k in range(times.size - 1):
        h = times[k + 1] - times[k]
        a1 = f(x)
        a2 = f(x + 0.5 * h * a1)
        a3 = f(x + 0.5 * h * a2)
        a4 = f(x + h * a3)
        x = x + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state at step {k + 1} (t={times[k + 1]})")
        out[k + 1] = x
    return out


def rk4_step_matrix(a_mat, h):
    """One RK4 step of a linear system xdot = A x as the degree-4 matrix
    polynomial I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24."""
    a_mat = np.asarray(a_mat, dtype=np.float64)
    eye = np.eye(a_mat.shape[0])
    ha = h * a_mat
    return eye + ha + ha @ ha / 2 + ha @ ha @ ha / 6 + ha @ ha @ ha @ ha / 24


@dataclass
class Trajectory:
    initial_condition: np.ndarray  # alpha-scaled
    times: np.ndarray
    clean: np.ndarray  # alpha-scaled, pre-noise
    noisy: np.ndarray
    noise: np.ndarray

    @property
    def n_samples(self):
        return self.times.size


@dataclass
class Dataset:
    system: str
    trajectories: list
    sigma: float
    alpha: float
    seed: int
    record: NormalizationRecord = field(default=None)

    @property
    def state_dim(self):
        return self.trajectories[0].clean.shape[1]

    @property
    def n_trajectories(self):
        return len(self.trajectories)

    def stacked(self):
        """(times, noisy, clean, ic-per-row, traj_id-per-row) over all rows."""
        times = np.concatenate([t.times for t in self.trajectories])
        noisy = np.vstack([t.noisy for t in self.trajectories])
        clean = np.vstack([t.clean for t in self.trajectories])
        ics = np.vstack(
            [
                np.broadcast_to(t.initial_condition, t.clean.shape)
                for t in self.trajectories
            ]
        )
        ids = np.concatenate(
            [np.full(t.n_samples, j) for j, t in enumerate(self.trajectories)]
        )
        return times, noisy, clean, ics, ids


def generate_dataset(
    system, initial_conditions, t_span, samples_per_traj, sigma, alpha=1.0, seed=0,
    refine=10,
):
    """Synthesize a multi-trajectory dataset with additive Gaussian noise."""
    if isinstance(system, str):
        system = SYSTEMS[system]
    if samples_per_traj < 2:
        raise ValueError("samples_per_traj must be >= 2")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("invalid time span")
    times = np.linspace(t0, t1, samples_per_traj)
    fine = np.linspace(t0, t1, (samples_per_traj - 1) * refine + 1)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    trajectories = []
    for x0 in initial_conditions:
        x0 = np.asarray(x0, dtype=np.float64)
        fine_states = integrate_rk4_fixed(system.rhs, x0, fine)
        clean = alpha * fine_states[::refine]
        noise = (
            rng.normal(0.0, sigma, size=clean.shape)
            if sigma > 0
            else np.zeros_like(clean)
        )
        trajectories.append(
            Trajectory(alpha * x0, times.copy(), clean, clean + noise, noise)
        )
    all_noisy = np.vstack([t.noisy for t in trajectories])
    record = NormalizationRecord(
        all_noisy.min(axis=0), all_noisy.max(axis=0), t0, t1, alpha
    )
    return Dataset(system.name, trajectories, float(sigma), float(alpha), int(seed), record)


def finite_difference_derivatives(times, states):
    """Second-order finite differences: central interior, one-sided ends."""
    times = np.asarray(times, dtype=np.float64)
    states = np.asarray(states, dtype=np.float64)
    if times.size < 3:
        raise ValueError("need at least 3 samples for finite differences")
    out = np.empty_like(states)
    out[1:-1] = (states[2:] - states[:-2]) / (times[2:] - times[:-2])[:, None]
    for end, (i0, i1, i2) in (("lo", (0, 1, 2)), ("hi", (-1, -2, -3))):
        t0, t1, t2 = times[i0], times[i1], times[i2]
        c0 = (2 * t0 - t1 - t2) / ((t0 - t1) * (t0 - t2))
        c1 = (t0 - t2) / ((t1 - t0) * (t1 - t2))
        c2 = (t0 - t1) / ((t2 - t0) * (t2 - t1))
        out[i0] = c0 * states[i0] + c1 * states[i1] + c2 * states[i2]
    return out


def dataset_derivatives(dataset, use_noisy=True):
    """Finite-difference derivative estimates per trajectory, stacked."""
    blocks = []
    for traj in dataset.trajectories:
        states = traj.noisy if use_noisy else traj.clean
        blocks.append(finite_difference_derivatives(traj.times, states))
    return np.vstack(blocks)


def write_dataset_csv(dataset, csv_path, sidecar_path=None):
    """CSV contract: header traj_id,t,y1..yn,x1..xn (noisy then clean)."""
    n = dataset.state_dim
    header = (
        ["traj_id", "t"]
        + [f"y{i + 1}" for i in range(n)]
        + [f"x{i + 1}" for i in range(n)]
    )
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, traj in enumerate(dataset.trajectories):
            for k in range(traj.n_samples):
                writer.writerow(
                    [j, repr(float(traj.times[k]))]
                    + [repr(float(v)) for v in traj.noisy[k]]
                    + [repr(float(v)) for v in traj.clean[k]]
                )
    if sidecar_path is not None:
        meta = {
            "system": dataset.system,
            "sigma": dataset.sigma,
            "alpha": dataset.alpha,
            "seed": dataset.seed,
            "normalization": dataset.record.to_dict(),
            "initial_conditions": [
                t.initial_condition.tolist() for t in dataset.trajectories
            ],
        }
        with open(sidecar_path, "w") as fh:
            json.dump(meta, fh, indent=2)


def read_dataset_csv(csv_path, sidecar_path):
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = (len(header) - 2) // 2
        for row in reader:
            rows.append((int(row[0]), [float(v) for v in row[1:]]))
    trajectories = []
    ics = meta["initial_conditions"]
    for j in sorted({r[0] for r in rows}):
        block = np.array([r[1] for r in rows if r[0] == j])
        times = block[:, 0]
        noisy = block[:, 1 : 1 + n]
        clean = block[:, 1 + n : 1 + 2 * n]
        trajectories.append(
            Trajectory(np.array(ics[j]), times, clean, noisy, noisy - clean)
        )
    return Dataset(
        meta["system"],
        trajectories,
        meta["sigma"],
        meta["alpha"],
        meta["seed"],
        NormalizationRecord.from_dict(meta["normalization"]),
    )
