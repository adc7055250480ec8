"""Candidate-function library: polynomial (and optional trigonometric) features.

Feature order is canonical and stable across runs: degree-ascending
polynomials, within a degree lexicographic by variable combination
(x1^2, x1*x2, ..., x2^2, x2*x3, ...), then trigonometric features appended in
harmonic order with sin before cos.  Coefficient CSVs and printed equations
rely on this ordering.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class DictionarySpec:
    state_dim: int
    max_poly_degree: int
    include_constant: bool = True
    trig_harmonics: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be >= 1")
        if self.max_poly_degree < 0:
            raise ValueError("max_poly_degree must be >= 0")
        object.__setattr__(self, "trig_harmonics", tuple(self.trig_harmonics))

    @property
    def feature_count(self):
        n, d = self.state_dim, self.max_poly_degree
        count = math.comb(n + d, d)
        if not self.include_constant:
            count -= 1
        return count + 2 * n * len(self.trig_harmonics)


def exponent_tuples(spec):
    """All monomial exponent tuples in canonical order."""
    n = spec.state_dim
    out = []
    start_degree = 0 if spec.include_constant else 1
    for degree in range(start_degree, spec.max_poly_degree + 1):
        for combo in combinations_with_replacement(range(n), degree):
            exps = [0] * n
            for i in combo:
                exps[i] += 1
            out.append(tuple(exps))
    return out


def _monomial_label(exps):
    if all(e == 0 for e in exps):
        return "1"
    parts = []
    for i, e in enumerate(exps):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts)


def enumerate_features(spec):
    """Ordered feature labels for a DictionarySpec."""
    labels = [_monomial_label(e) for e in exponent_tuples(spec)]
    for k in spec.trig_harmonics:
        arg = "" if k == 1 else f"{k}*"
        labels += [f"sin({arg}x{i + 1})" for i in range(spec.state_dim)]
        labels += [f"cos({arg}x{i + 1})" for i in range(spec.state_dim)]
    return labels


def eval_features(spec, x):
    """Evaluate the feature matrix on a state vector or batch of states.

    Returns shape (D,) for a single state, (N, D) for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != spec.state_dim:
        raise ValueError(
            f"state dim {batch.shape[1]} != spec state_dim {spec.state_dim}"
        )
    cols = []
    for exps in exponent_tuples(spec):
        col = np.ones(batch.shape[0])
        for i, e in enumerate(exps):
            if e:
                col = col * batch[:, i] ** e
        cols.append(col)
    for k in spec.trig_harmonics:
        for i in range(spec.state_dim):
            cols.append(np.sin(k * batch[:, i]))
        for i in range(spec.state_dim):
            cols.append(np.cos(k * batch[:, i]))
    out = np.column_stack(cols)
    return out[0] if single else out


def eval_features_tape(spec, x):
    """Tape version of eval_features: x is a (N, n) Tensor, result (N, D).

    Marks every feature column as a function of x so losses differentiate
    through the dictionary.
    """
    n = spec.state_dim
    state_cols = [ad.columns(x, i, i + 1) for i in range(n)]
    # cache powers of each state column up to the max degree used
    powers = [{1: c} for c in state_cols]

    def col_power(i, e):
        cache = powers[i]
        if e not in cache:
            cache[e] = ad.power(state_cols[i], e)
        return cache[e]

    ones = x.tape.constant(np.ones((x.data.shape[0], 1)))
    cols = []
    for exps in exponent_tuples(spec):
        col = None
        for i, e in enumerate(exps):
            if e:
                term = col_power(i, e)
                col = term if col is None else ad.mul(col, term)
        cols.append(ones if col is None else col)
    for k in spec.trig_harmonics:
        for i in range(n):
            cols.append(ad.sin(ad.scale(state_cols[i], float(k))))
        for i in range(n):
            cols.append(ad.cos(ad.scale(state_cols[i], float(k))))
    return ad.hstack(cols)


def apply(spec, x, xi):
    """Candidate vector field value Theta(x) @ xi; linear in xi."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape[0] != spec.feature_count:
        raise ValueError(
            f"coefficient rows {xi.shape[0]} != feature count {spec.feature_count}"
        )
    return eval_features(spec, x) @ xi


_TRIG_RE = re.compile(r"^(sin|cos)\((?:(\d+)\*)?x(\d+)\)$")
_MONO_RE = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def parse_label(label):
    """Parse a canonical feature label back into an evaluator f(x) -> float."""
    if label == "1":
        return lambda x: 1.0
    m = _TRIG_RE.match(label)
    if m:
        fn = np.sin if m.group(1) == "sin" else np.cos
        k = int(m.group(2)) if m.group(2) else 1
        i = int(m.group(3)) - 1
        return lambda x, fn=fn, k=k, i=i: fn(k * x[i])
    factors = []
    for part in label.split("*"):
        m = _MONO_RE.match(part)
        if not m:
            raise ValueError(f"cannot parse feature label {label!r}")
        factors.append((int(m.group(1)) - 1, int(m.group(2) or 1)))

    def mono(x, factors=tuple(factors)):
        out = 1.0
        for i, e in factors:
            out *= x[i] ** e
        return out

    return mono
