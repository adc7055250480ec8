"""Experiment configuration: a flat key=value text format with sections.

The format needs no parser dependencies: lines are ``key = value`` under
``[section]`` headers; ``#`` starts a comment.  Unknown sections or keys are
rejected.  parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


def _parse_floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _parse_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _parse_vectors(text):
    """Semicolon-separated vectors of comma-separated floats."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            out.append(tuple(float(v) for v in chunk.split(",")))
    return out


def _fmt_floats(values):
    return ",".join(repr(float(v)) for v in values)


def _fmt_vectors(vectors):
    return "; ".join(",".join(repr(float(v)) for v in vec) for vec in vectors)


VALID_METHODS = ("ineural", "deri_only", "rk4_only", "rk4_direct", "stls")
SWEEP_MODES = ("scene_a", "scene_b")


@dataclass
class ExperimentConfig:
    system: str = "linear_oscillator"
    initial_conditions: list = field(
        default_factory=lambda: [(-2.0, 1.0), (1.5, -1.5), (0.5, 2.0)]
    )
    t_span: tuple = (0.0, 10.0)
    samples: int = 400
    sigmas: list = field(default_factory=lambda: [0.0])
    alpha: float = 1.0
    poly_degree: int = 2
    methods: list = field(default_factory=lambda: ["ineural"])
    seed: int = 0
    out_dir: str = "results"
    # network
    hidden_layers: int = 3
    neurons: int = 32
    omega0: float = 30.0
    # training schedule
    max_iter: int = 15000
    init_iter: int = 5000
    q: int = 2000
    tol: float = 0.05
    lr_net: float = 1e-4
    lr_xi: float = 1e-3
    post_lr_net: float = 5e-6
    post_lr_xi: float = 1e-2
    losses_in_physical: bool = True
    # sweep
    sweep_mode: str = "scene_a"
    sweep_samples: list = field(default_factory=lambda: [100, 400])
    sweep_neurons: list = field(default_factory=lambda: [8, 32])

    def validate(self):
        from .dynamics import SYSTEMS

        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}")
        n = SYSTEMS[self.system].state_dim
        for ic in self.initial_conditions:
            if len(ic) != n:
                raise ConfigError(f"initial condition {ic} has wrong dimension")
        if self.samples < 2:
            raise ConfigError("samples must be >= 2")
        if not self.t_span[1] > self.t_span[0]:
            raise ConfigError("invalid t_span")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigma must be >= 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ConfigError(f"unknown method {m!r}")
        if self.sweep_mode not in SWEEP_MODES:
            raise ConfigError(f"unknown sweep mode {self.sweep_mode!r}")
        if not self.init_iter < self.max_iter:
            raise ConfigError("init_iter must be < max_iter")
        return self

    def hidden_dims(self):
        return (self.neurons,) * self.hidden_layers

    def schedule(self):
        from .training import TrainSchedule

        return TrainSchedule(
            max_iter=self.max_iter,
            init_iter=self.init_iter,
            q=self.q,
            tol=self.tol,
            lr_net=self.lr_net,
            lr_xi=self.lr_xi,
            post_lr_net=self.post_lr_net,
            post_lr_xi=self.post_lr_xi,
        )


_SCHEMA = {
    "experiment": {
        "system": ("system", str, str),
        "initial_conditions": ("initial_conditions", _parse_vectors, _fmt_vectors),
        "t_span": ("t_span", lambda s: tuple(_parse_floats(s)), _fmt_floats),
        "samples": ("samples", int, str),
        "sigma": ("sigmas", _parse_floats, _fmt_floats),
        "alpha": ("alpha", float, repr),
        "poly_degree": ("poly_degree", int, str),
        "methods": ("methods", lambda s: [m.strip() for m in s.split(",")],
                    lambda v: ",".join(v)),
        "seed": ("seed", int, str),
        "out": ("out_dir", str, str),
    },
    "network": {
        "hidden_layers": ("hidden_layers", int, str),
        "neurons": ("neurons", int, str),
        "omega0": ("omega0", float, repr),
    },
    "training": {
        "max_iter": ("max_iter", int, str),
        "init_iter": ("init_iter", int, str),
        "q": ("q", int, str),
        "tol": ("tol", float, repr),
        "lr_net": ("lr_net", float, repr),
        "lr_xi": ("lr_xi", float, repr),
        "post_lr_net": ("post_lr_net", float, repr),
        "post_lr_xi": ("post_lr_xi", float, repr),
        "losses_in_physical": (
            "losses_in_physical",
            lambda s: s.lower() in ("1", "true", "yes"),
            lambda v: "true" if v else "false",
        ),
    },
    "sweep": {
        "mode": ("sweep_mode", str, str),
        "samples_list": ("sweep_samples", _parse_ints,
                         lambda v: ",".join(str(i) for i in v)),
        "neurons_list": ("sweep_neurons", _parse_ints,
                         lambda v: ",".join(str(i) for i in v)),
    },
}


def parse_config(text):
    cfg = ExperimentConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        attr, parser, _ = _SCHEMA[section][key]
        try:
            setattr(cfg, attr, parser(value))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
    return cfg.validate()


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")


def serialize_config(cfg):
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, _, fmt) in keys.items():
            lines.append(f"{key} = {fmt(getattr(cfg, attr))}")
        lines.append("")
    return "\n".join(lines)


def cell_seed(base_seed, i, j):
    """Deterministic per-cell sub-seed: base XOR a 64-bit mix of the indices."""
    mask = (1 << 64) - 1
    mix = (((i + 1) * 0x9E3779B97F4A7C15) & mask) ^ (
        ((j + 1) * 0xBF58476D1CE4E5B9) & mask
    )
    return (base_seed ^ mix) & mask
