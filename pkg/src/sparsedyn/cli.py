"""Command-line driver: dataset generation, discovery runs, robustness
sweeps, and report collation."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import dynamics as dyn
from . import metrics
from .config import (
    VALID_METHODS,
    ConfigError,
    cell_seed,
    load_config,
    serialize_config,
)
from .dictionary import DictionarySpec, enumerate_features, eval_features
from .regression import rk4_sindy_direct, stls_sindy
from .training import LossWeights, TrainingDivergence, train_ineural

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_WEIGHTS = {
    "ineural": LossWeights(1.0, 0.1, 0.1),
    "deri_only": LossWeights(1.0, 0.1, 0.0),
    "rk4_only": LossWeights(1.0, 0.0, 0.1),
}


def _dataset_for(cfg, sigma, samples=None, initial_conditions=None, seed=None):
    return dyn.generate_dataset(
        cfg.system,
        initial_conditions or cfg.initial_conditions,
        cfg.t_span,
        samples or cfg.samples,
        sigma,
        alpha=cfg.alpha,
        seed=cfg.seed if seed is None else seed,
    )


def _spec_for(cfg):
    return DictionarySpec(dyn.SYSTEMS[cfg.system].state_dim, cfg.poly_degree)


def run_method(cfg, method, dataset, spec, seed, hidden=None, trace_stride=10):
    """Run one discovery method on a dataset; returns a DiscoveryResult."""
    if method in _WEIGHTS:
        return train_ineural(
            dataset,
            spec,
            weights=_WEIGHTS[method],
            schedule=cfg.schedule(),
            seed=seed,
            hidden=hidden or cfg.hidden_dims(),
            omega0=cfg.omega0,
            losses_in_physical=cfg.losses_in_physical,
            trace_stride=trace_stride,
        )
    import time

    t0 = time.perf_counter()
    if method == "rk4_direct":
        coeffs = rk4_sindy_direct(dataset, spec, cfg.tol, cfg.schedule())
    elif method == "stls":
        _, noisy, _, _, _ = dataset.stacked()
        theta = eval_features(spec, noisy)
        xdot = dyn.dataset_derivatives(dataset)
        coeffs = stls_sindy(theta, xdot, cfg.tol)
    else:
        raise ConfigError(f"unknown method {method!r}")
    labels = enumerate_features(spec)
    errors = None
    if dataset.system in dyn.SYSTEMS:
        truth = dyn.SYSTEMS[dataset.system].ground_truth_xi(spec, dataset.alpha)
        errors = metrics.coeff_error(truth, coeffs.values)
    return metrics.DiscoveryResult(
        method=method,
        system=dataset.system,
        sigma=dataset.sigma,
        alpha=dataset.alpha,
        seed=seed,
        coefficients=coeffs,
        labels=labels,
        equations=metrics.format_equations(coeffs.values, labels),
        errors=errors,
        runtime_s=time.perf_counter() - t0,
    )


def cmd_generate(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for sigma in cfg.sigmas:
        dataset = _dataset_for(cfg, sigma)
        tag = f"{cfg.system}_sigma{sigma:g}"
        csv_path = os.path.join(out_dir, f"{tag}.csv")
        dyn.write_dataset_csv(dataset, csv_path, os.path.join(out_dir, f"{tag}.json"))
        rows = sum(t.n_samples for t in dataset.trajectories)
        print(
            f"wrote {csv_path}: {dataset.n_trajectories} trajectories, "
            f"{rows} rows, sigma={sigma:g}, alpha={cfg.alpha:g}"
        )
        paths.append(csv_path)
    return paths


def cmd_discover(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    spec = _spec_for(cfg)
    failures = []
    for sigma in cfg.sigmas:
        dataset = _dataset_for(cfg, sigma)
        for method in cfg.methods:
            tag = f"{cfg.system}_sigma{sigma:g}_{method}"
            try:
                result = run_method(cfg, method, dataset, spec, cfg.seed)
            except (TrainingDivergence, dyn.IntegrationError, FloatingPointError) as exc:
                print(f"[{tag}] FAILED: {exc}")
                failures.append(tag)
                continue
            xi_path = os.path.join(out_dir, f"{tag}_xi.csv")
            metrics.write_xi_csv(xi_path, result.coefficients, result.labels)
            result.save_json(os.path.join(out_dir, f"{tag}.json"), xi_path)
            if result.trace is not None:
                result.trace.write_csv(os.path.join(out_dir, f"{tag}_trace.csv"))
            print(f"[{tag}]")
            for line in result.equations:
                print(f"  {line}")
            if result.errors is not None:
                print(f"  E = {['%.4g' % e for e in result.errors]}")
    return failures


def _sweep_cell(args):
    """One independent sweep cell; returns (i, j, method, E_total or nan)."""
    cfg, mode, i, j, sigma, value, method = args
    seed = cell_seed(cfg.seed, i, j)
    try:
        if mode == "scene_a":
            dataset = _dataset_for(
                cfg, sigma, samples=value,
                initial_conditions=cfg.initial_conditions[:1], seed=seed,
            )
            hidden = cfg.hidden_dims()
        else:
            dataset = _dataset_for(
                cfg, sigma, initial_conditions=cfg.initial_conditions[:1], seed=seed
            )
            hidden = (value,) * cfg.hidden_layers
        result = run_method(
            cfg, method, dataset, _spec_for(cfg), seed, hidden=hidden,
            trace_stride=10_000,
        )
        e_total = float(np.sum(result.errors)) if result.errors else float("nan")
    except Exception:
        e_total = float("nan")
    return (i, j, sigma, value, method, e_total)


def cmd_sweep(cfg, out_dir, jobs=None):
    os.makedirs(out_dir, exist_ok=True)
    mode = cfg.sweep_mode
    values = cfg.sweep_samples if mode == "scene_a" else cfg.sweep_neurons
    tasks = [
        (cfg, mode, i, j, sigma, value, method)
        for i, sigma in enumerate(cfg.sigmas)
        for j, value in enumerate(values)
        for method in cfg.methods
    ]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    rows.sort(key=lambda r: (r[4], r[0], r[1]))
    value_col = "samples" if mode == "scene_a" else "neurons"
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write(f"sigma,{value_col},method,E_total\n")
        for _, _, sigma, value, method, e_total in rows:
            fh.write(f"{sigma!r},{value},{method},{e_total!r}\n")
    _write_heatmaps(rows, cfg, values, mode, out_dir)
    print(f"wrote {csv_path} ({len(rows)} cells)")
    return csv_path


def _write_heatmaps(rows, cfg, values, mode, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for method in cfg.methods:
        grid = np.full((len(cfg.sigmas), len(values)), np.nan)
        for i, j, _, _, m, e_total in rows:
            if m == method:
                grid[i, j] = e_total
        fig, ax = plt.subplots(figsize=(1.2 * len(values) + 2, 1.0 * len(cfg.sigmas) + 2))
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(values)), [str(v) for v in values])
        ax.set_yticks(range(len(cfg.sigmas)), [f"{s:g}" for s in cfg.sigmas])
        ax.set_xlabel("samples" if mode == "scene_a" else "neurons")
        ax.set_ylabel("sigma")
        ax.set_title(f"{cfg.system} / {method} total coefficient error")
        for i in range(grid.shape[0]):
            for j in range(grid.shape[1]):
                if np.isfinite(grid[i, j]):
                    ax.text(j, i, f"{grid[i, j]:.3g}", ha="center", va="center",
                            color="white", fontsize=8)
        fig.colorbar(im, ax=ax)
        fig.savefig(os.path.join(out_dir, f"heatmap_{method}.svg"))
        plt.close(fig)


def cmd_report(results_dir, out_dir=None):
    out_dir = out_dir or results_dir
    entries = []
    for name in sorted(os.listdir(results_dir)):
        if name.endswith(".json") and not name.endswith("_xi.json"):
            with open(os.path.join(results_dir, name)) as fh:
                data = json.load(fh)
            if "method" in data and "equations" in data:
                entries.append(data)
    if not entries:
        raise ConfigError(f"no result JSON files in {results_dir}")
    order = {m: i for i, m in enumerate(VALID_METHODS)}
    entries.sort(key=lambda e: (order.get(e["method"], 99), e["system"], e["sigma"]))
    md_path = os.path.join(out_dir, "report.md")
    with open(md_path, "w") as fh:
        fh.write("| method | system | sigma | equations | E |\n")
        fh.write("|---|---|---|---|---|\n")
        for e in entries:
            eqs = "<br>".join(e["equations"])
            err = (
                ", ".join(f"{v:.4g}" for v in e["E"]) if e.get("E") is not None else ""
            )
            fh.write(
                f"| {e['method']} | {e['system']} | {e['sigma']:g} | {eqs} | {err} |\n"
            )
    print(f"wrote {md_path} ({len(entries)} rows)")
    return md_path


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsedyn",
        description="Discover sparse governing ODEs from noisy time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "discover", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--method", default=None, help="comma-separated method list")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=None,
                           help="parallel workers (default: cpu count)")
    p = sub.add_parser("report")
    p.add_argument("results_dir")
    p.add_argument("--out", default=None)
    p = sub.add_parser("print-config", help="print the default config schema")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "print-config":
            from .config import ExperimentConfig

            print(serialize_config(ExperimentConfig()))
            return EXIT_OK
        if args.command == "report":
            cmd_report(args.results_dir, args.out)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.method:
            cfg.methods = [m.strip() for m in args.method.split(",")]
        cfg.validate()
        out_dir = args.out or cfg.out_dir
        if args.command == "generate":
            cmd_generate(cfg, out_dir)
            return EXIT_OK
        if args.command == "discover":
            failures = cmd_discover(cfg, out_dir)
            return EXIT_NUMERICAL if failures else EXIT_OK
        if args.command == "sweep":
            cmd_sweep(cfg, out_dir, jobs=args.jobs)
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergence, dyn.IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
