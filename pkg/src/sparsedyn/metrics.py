"""Coefficient-error metric, model simulation, and result presentation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import dictionary as dct

BLOWUP_LIMIT = 1e8


def coeff_error(xi_truth, xi_est, labels_truth=None, labels_est=None):
    """Per-state l1 distance between true and estimated coefficient columns."""
    if labels_truth is not None or labels_est is not None:
        if list(labels_truth or []) != list(labels_est or []):
            raise ValueError("coefficient label sets differ")
    xi_truth = np.asarray(xi_truth, dtype=np.float64)
    xi_est = np.asarray(xi_est, dtype=np.float64)
    if xi_truth.shape != xi_est.shape:
        raise ValueError(
            f"coefficient shapes differ: {xi_truth.shape} vs {xi_est.shape}"
        )
    return [float(v) for v in np.abs(xi_truth - xi_est).sum(axis=0)]


@dataclass
class SimulationResult:
    times: np.ndarray
    states: np.ndarray
    diverged: bool


def simulate_discovered(xi, spec, x0, times):
    """Integrate the discovered vector field Theta(x) @ Xi with fixed-step RK4.

    If the state magnitude exceeds BLOWUP_LIMIT the trajectory is truncated
    and flagged divergent rather than raising.
    """
    from .dynamics import integrate_rk4_fixed, IntegrationError

    xi = np.asarray(xi, dtype=np.float64)
    if not np.all(np.isfinite(xi)):
        raise ValueError("coefficient matrix contains non-finite entries")

    def f(x):
        return dct.eval_features(spec, x) @ xi

    times = np.asarray(times, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    out = [x]
    for k in range(times.size - 1):
        try:
            step = integrate_rk4_fixed(f, x, times[k : k + 2])
        except IntegrationError:
            return SimulationResult(times[: k + 1], np.array(out), True)
        x = step[1]
        if np.max(np.abs(x)) > BLOWUP_LIMIT:
            return SimulationResult(times[: k + 1], np.array(out), True)
        out.append(x)
    return SimulationResult(times, np.array(out), False)


def format_equations(xi, labels, precision=3):
    """One line per state; zero terms omitted, canonical feature order."""
    xi = np.asarray(xi, dtype=np.float64)
    lines = []
    for j in range(xi.shape[1]):
        terms = []
        for i, label in enumerate(labels):
            c = xi[i, j]
            if c == 0.0:
                continue
            mag = f"{abs(c):.{precision}f}"
            body = mag if label == "1" else f"{mag}*{label}"
            terms.append((c < 0, body))
        if not terms:
            lines.append(f"dx{j + 1}/dt = 0")
            continue
        first_neg, first_body = terms[0]
        text = ("-" if first_neg else "") + first_body
        for neg, body in terms[1:]:
            text += (" - " if neg else " + ") + body
        lines.append(f"dx{j + 1}/dt = {text}")
    return lines


@dataclass
class DiscoveryResult:
    """Everything a single discovery run produces."""

    method: str
    system: str
    sigma: float
    alpha: float
    seed: int
    coefficients: object  # CoefficientMatrix
    labels: list
    equations: list
    errors: list = None  # per-state l1 error, present iff ground truth known
    runtime_s: float = 0.0
    trace: object = None
    network: object = None
    config: dict = None

    def to_json_dict(self, coeff_csv_path=None):
        return {
            "method": self.method,
            "system": self.system,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "seed": self.seed,
            "equations": self.equations,
            "coeff_csv_path": coeff_csv_path,
            "E": self.errors,
            "runtime_s": self.runtime_s,
        }

    def save_json(self, path, coeff_csv_path=None):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(coeff_csv_path), fh, indent=2)


def write_xi_csv(path, coefficients, labels):
    """Coefficient CSV: rows = feature labels, value and mask per state."""
    values, mask = coefficients.values, coefficients.mask
    n = values.shape[1]
    header = (
        ["feature"]
        + [f"x{j + 1}" for j in range(n)]
        + [f"x{j + 1}_active" for j in range(n)]
    )
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i, label in enumerate(labels):
            row = (
                [label]
                + [repr(float(v)) for v in values[i]]
                + [str(int(b)) for b in mask[i]]
            )
            fh.write(",".join(row) + "\n")
