"""Sparse coefficient matrices, sequential thresholded least squares, and the
network-free integration-residual baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dct


@dataclass
class CoefficientMatrix:
    """D x n coefficients with a sparsity mask (True = active).

    Masked-out entries are exactly 0.0 at all times; the mask only ever
    shrinks within a run.
    """

    values: np.ndarray
    mask: np.ndarray = None
    rank_deficient: bool = field(default=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.values.shape:
            raise ValueError("mask shape must match values shape")
        self.values = np.where(self.mask, self.values, 0.0)

    @property
    def n_active(self):
        return int(self.mask.sum())

    def copy(self):
        return CoefficientMatrix(
            self.values.copy(), self.mask.copy(), self.rank_deficient
        )


def threshold(coeffs, tol):
    """Zero out entries with |value| < tol and freeze them in the mask."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    small = np.abs(coeffs.values) < tol
    new_mask = coeffs.mask & ~(small & coeffs.mask)
    if tol == 0:
        new_mask = coeffs.mask.copy()
    return CoefficientMatrix(
        np.where(new_mask, coeffs.values, 0.0), new_mask, coeffs.rank_deficient
    )


_COND_LIMIT = 1e12


def _solve_ls(theta, rhs):
    """Least squares via normal equations; QR/SVD minimum-norm fallback when
    the Gram matrix is ill-conditioned.  Returns (solution, rank_deficient)."""
    gram = theta.T @ theta
    if gram.size and np.linalg.cond(gram) <= _COND_LIMIT:
        return np.linalg.solve(gram, theta.T @ rhs), False
    sol, _, rank, _ = np.linalg.lstsq(theta, rhs, rcond=None)
    return sol, rank < theta.shape[1]


def stls_sindy(theta_matrix, xdot_matrix, tol, max_iter=20):
    """Sequential thresholded least squares on Theta * Xi = Xdot.

    Iterates least-squares fits with hard thresholding; stops at ``max_iter``
    or once the active mask is unchanged for two consecutive iterations.
    """
    theta_matrix = np.asarray(theta_matrix, dtype=np.float64)
    xdot_matrix = np.asarray(xdot_matrix, dtype=np.float64)
    if theta_matrix.shape[0] != xdot_matrix.shape[0]:
        raise ValueError("Theta and Xdot row counts differ")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    d, n = theta_matrix.shape[1], xdot_matrix.shape[1]
    values, rank_flag = _solve_ls(theta_matrix, xdot_matrix)
    mask = np.ones((d, n), dtype=bool)
    stable = 0
    for _ in range(max_iter):
        new_mask = mask & (np.abs(values) >= tol)
        values = np.where(new_mask, values, 0.0)
        for j in range(n):
            active = new_mask[:, j]
            if not active.any():
                continue
            sol, deficient = _solve_ls(theta_matrix[:, active], xdot_matrix[:, j])
            col = np.zeros(d)
            col[active] = sol
            values[:, j] = col
            rank_flag = rank_flag or deficient
        stable = stable + 1 if np.array_equal(new_mask, mask) else 0
        mask = new_mask
        if stable >= 2:
            break
    return CoefficientMatrix(np.where(mask, values, 0.0), mask, rank_flag)


def rk4_sindy_direct(dataset, spec, tol, schedule, xi0=None):
    """Sparse regression on raw data through the RK4 one-step residual.

    No network: gradient descent (Adam) acts on Xi alone, with the same
    periodic-thresholding schedule as the joint training loop.  Consecutive
    sample pairs are formed within trajectories only, and each residual is
    scaled by 1/h_k.
    """
    from . import training  # deferred: training imports this module

    theta_cache = {}
    n = dataset.state_dim
    d = spec.feature_count
    values = np.zeros((d, n)) if xi0 is None else np.asarray(xi0, dtype=np.float64)
    mask = np.ones((d, n), dtype=bool)
    adam = training.AdamState([values.shape], schedule.beta1, schedule.beta2,
                              schedule.eps)
    lr = schedule.lr_xi
    trace = training.TrainingTrace()
    pairs = training.trajectory_pairs(dataset)
    for k in range(1, schedule.max_iter + 1):
        from . import autodiff as ad

        tape = ad.Tape()
        xi_leaf = tape.leaf(values)
        xi_masked = ad.mul(xi_leaf, tape.constant(mask.astype(np.float64)))
        loss = training.rk4_residual_tape(tape, spec, pairs, xi_masked,
                                          states=None, cache=theta_cache)
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise training.TrainingDivergence(
                f"rk4_sindy_direct diverged at iteration {k}", trace
            )
        trace.append(k, loss_val, 0.0, 0.0, loss_val, int(mask.sum()))
        grads = tape.backward(loss)
        g = grads[xi_leaf] * mask
        (values,) = adam.step([values], [g], lr)
        values *= mask
        if k > schedule.init_iter and k % schedule.q == 0:
            cm = threshold(CoefficientMatrix(values, mask), tol)
            pruned = int(mask.sum() - cm.mask.sum())
            values, mask = cm.values, cm.mask
            if pruned:
                trace.log_threshold(k, pruned)
            adam = training.AdamState([values.shape], schedule.beta1,
                                      schedule.beta2, schedule.eps)
            lr = schedule.post_lr_xi
    return CoefficientMatrix(values, mask)
