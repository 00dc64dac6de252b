"""Command-line entry point: ``solve``, ``sweep ablate``, ``sweep drop``, ``raster``.

Configuration is a flat ``key = value`` file; environment variables
(``SPIKEFEM_<KEY>`` with dots as underscores) override the file and CLI flags
override both. All randomness flows from ``experiment.master_seed``; outputs
include a manifest with every resolved parameter so a run can be reproduced
exactly.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (DEFAULT_ABLATION_GRID, DEFAULT_DROP_GRID, ErrorField,
                          ablation_sweep, build_problem, drop_sweep,
                          raster_extract, write_error_field_csv,
                          write_raster_csv, write_solution_csv,
                          write_summary_csv, write_sweep_csv)
from .faults import FaultSpec
from .fem import export_system
from .mesh import export_mesh_csv
from .network import NetworkConfig, build_network
from .simulator import DivergenceError, active_backend, run
from .svgplot import write_summary_svg

ENV_PREFIX = "SPIKEFEM_"


class ConfigError(ValueError):
    pass


def _parse_gamma(text: str):
    if text == "auto":
        return "auto"
    return float(text)


def _parse_float_list(text: str):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_int_list(text: str):
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_bool(text: str):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key -> (parser, default, CLI flag, help)
CONFIG_KEYS: dict[str, tuple] = {
    "mesh.n_side": (int, 17, "--n-side", "nodes per mesh side (>= 2)"),
    "network.npm": (int, 16, "--npm", "neurons per mesh node for single runs"),
    "network.gamma": (_parse_gamma, "auto", "--gamma",
                      "readout magnitude, or 'auto' to calibrate"),
    "network.lambda_d": (float, 1.0, "--lambda-d", "readout decay rate"),
    "network.dt": (float, 1e-3, "--dt", "simulation timestep"),
    "network.t_total": (float, 20.0, "--t-total", "simulated duration"),
    "network.decode_window": (float, 0.25, "--decode-window",
                              "final fraction of the run averaged for decoding"),
    "network.eta": (float, 0.05, "--eta", "gamma calibration fraction"),
    "faults.ablation_p": (float, 0.0, "--ablation-p",
                          "per-neuron ablation probability"),
    "faults.drop_p": (float, 0.0, "--drop-p", "per-step spike drop probability"),
    "experiment.p_values": (_parse_float_list, None, "--p-values",
                            "comma-separated sweep grid (default: built-in per kind)"),
    "experiment.npm_values": (_parse_int_list, (4, 16), "--npm-values",
                              "comma-separated redundancy levels for sweeps"),
    "experiment.n_trials": (int, 5, "--n-trials", "trials per grid point"),
    "experiment.master_seed": (int, 12345, "--master-seed",
                               "root seed for all randomness"),
    "experiment.jobs": (int, 1, "--jobs", "parallel trial workers"),
    "raster.k": (int, 50, "--raster-k", "neurons sampled for the raster"),
    "rhs": (str, "paper", "--rhs", "right-hand side: 'paper' or 'zero'"),
    "output.dir": (str, "out", "--out", "output directory"),
    "output.export_mesh": (_parse_bool, False, "--export-mesh",
                           "also write nodes.csv/elements.csv on solve"),
    "output.export_system": (_parse_bool, False, "--export-system",
                             "also write the assembled system on solve"),
}


def _env_name(key: str) -> str:
    return ENV_PREFIX + key.replace(".", "_").upper()


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser = CONFIG_KEYS[key][0]
        try:
            values[key] = parser(text.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults < config file < environment < CLI flags."""
    resolved = {key: spec[1] for key, spec in CONFIG_KEYS.items()}
    if args.config is not None:
        resolved.update(load_config_file(args.config))
    for key, (parser, _, _, _) in CONFIG_KEYS.items():
        env = os.environ.get(_env_name(key))
        if env is not None:
            try:
                resolved[key] = parser(env)
            except ValueError as exc:
                raise ConfigError(f"bad value in {_env_name(key)}: {exc}") from exc
    for key in CONFIG_KEYS:
        flag_value = getattr(args, key.replace(".", "__"), None)
        if flag_value is not None:
            resolved[key] = flag_value
    if resolved["rhs"] not in ("paper", "zero"):
        raise ConfigError(f"rhs must be 'paper' or 'zero', got {resolved['rhs']!r}")
    return resolved


def network_config(resolved: dict, npm: int | None = None) -> NetworkConfig:
    try:
        return NetworkConfig(
            npm=npm if npm is not None else resolved["network.npm"],
            gamma=resolved["network.gamma"],
            lambda_d=resolved["network.lambda_d"],
            dt=resolved["network.dt"],
            t_total=resolved["network.t_total"],
            decode_window=resolved["network.decode_window"],
            eta=resolved["network.eta"],
        )
    except ValueError as exc:
        raise ConfigError(f"invalid network configuration: {exc}") from exc


def fault_spec(resolved: dict) -> FaultSpec:
    try:
        return FaultSpec(ablation_p=resolved["faults.ablation_p"],
                         drop_p=resolved["faults.drop_p"])
    except ValueError as exc:
        raise ConfigError(f"invalid fault configuration: {exc}") from exc


def write_manifest(path: Path, resolved: dict, extra: dict) -> Path:
    lines = [f"spikefem_version={__version__}"]
    for key in sorted(resolved):
        value = resolved[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    for key in sorted(extra):
        lines.append(f"{key}={extra[key]}")
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_solve(resolved: dict) -> int:
    if resolved["mesh.n_side"] < 2:
        raise ConfigError(f"mesh.n_side must be >= 2, got {resolved['mesh.n_side']}")
    ncfg = network_config(resolved)
    spec = fault_spec(resolved)
    problem = build_problem(resolved["mesh.n_side"], resolved["rhs"])
    net = build_network(problem.system, ncfg)
    seed = resolved["experiment.master_seed"]
    try:
        result = run(net, spec, seed=seed, x_ref=problem.x_ref)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(resolved["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_solution_csv(problem, result.x_decoded, out / "decoded_solution.csv")
    write_solution_csv(problem, problem.x_ref, out / "reference_solution.csv")
    nodes = problem.system.dof_to_node
    coords = problem.mesh.coords[nodes]
    field = ErrorField(node_ids=nodes.copy(), xs=coords[:, 0], ys=coords[:, 1],
                       neurofem=result.x_decoded, reference=problem.x_ref.copy(),
                       difference=result.x_decoded - problem.x_ref)
    write_error_field_csv(field, out / "error_field.csv")
    if resolved["output.export_mesh"]:
        export_mesh_csv(problem.mesh, out)
    if resolved["output.export_system"]:
        export_system(problem.system, out)
    write_manifest(out / "manifest.txt", resolved, {
        "resolved.gamma": net.gamma,
        "resolved.n_dofs": net.n_dofs,
        "resolved.n_neurons": net.n_neurons,
        "resolved.n_steps": ncfg.n_steps,
        "resolved.trial_seed": seed,
        "resolved.backend": active_backend(),
        "result.relative_error": repr(result.relative_error),
        "result.spikes_total": result.spike_count_total,
        "result.spikes_delivered": result.spike_count_delivered,
    })
    print(f"relative_error={result.relative_error!r}")
    print(f"outputs written to {out}")
    return 0


def cmd_sweep(resolved: dict, kind: str) -> int:
    configs = [network_config(resolved, npm=npm)
               for npm in resolved["experiment.npm_values"]]
    p_values = resolved["experiment.p_values"]
    if p_values is None:
        p_values = DEFAULT_ABLATION_GRID if kind == "ablation" else DEFAULT_DROP_GRID
    problem = build_problem(resolved["mesh.n_side"], resolved["rhs"])
    sweep_fn = ablation_sweep if kind == "ablation" else drop_sweep
    results = []
    gamma = None
    for ncfg in configs:
        res = sweep_fn(problem, ncfg, p_values=p_values,
                       n_trials=resolved["experiment.n_trials"],
                       master_seed=resolved["experiment.master_seed"],
                       jobs=resolved["experiment.jobs"])
        results.append(res)
        if gamma is None:
            gamma = build_network(problem.system, ncfg).gamma

    out = Path(resolved["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(results, out / "sweep.csv")
    write_summary_csv(results, out / "sweep_summary.csv")
    write_summary_svg(results, out / "sweep_summary.svg")
    n_failed = sum(res.failed_count(i) for res in results
                   for i in range(len(res.p_values)))
    write_manifest(out / "manifest.txt", resolved, {
        "sweep.kind": kind,
        "sweep.p_values": ",".join(repr(p) for p in p_values),
        "resolved.gamma": gamma,
        "resolved.backend": active_backend(),
        "sweep.failed_trials": n_failed,
        "seed.derivation": "seedsequence(master_seed,kind_code,p_index,trial)",
    })
    for res in results:
        for p_index, p in enumerate(res.p_values):
            print(f"{kind} npm={res.npm} p={p:g}: mean_error="
                  f"{res.mean_error(p_index)!r} sem={res.sem(p_index)!r} "
                  f"n_ok={res.n_ok(p_index)}")
    print(f"outputs written to {out}")
    return 0 if n_failed == 0 else 1


def cmd_raster(resolved: dict) -> int:
    ncfg = network_config(resolved)
    spec = fault_spec(resolved)
    problem = build_problem(resolved["mesh.n_side"], resolved["rhs"])
    net = build_network(problem.system, ncfg)
    seed = resolved["experiment.master_seed"]
    try:
        result = run(net, spec, seed=seed, x_ref=problem.x_ref, keep_log=True)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    k = resolved["raster.k"]
    if k > net.n_neurons:
        raise ConfigError(f"raster.k={k} exceeds network size {net.n_neurons}")
    sample_rng = np.random.default_rng(
        np.random.SeedSequence((resolved["experiment.master_seed"], 3)))
    table = raster_extract(result.spike_log, k, sample_rng, net.n_neurons, ncfg.dt)

    out = Path(resolved["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_raster_csv(table, out / "raster.csv")
    write_manifest(out / "manifest.txt", resolved, {
        "resolved.gamma": net.gamma,
        "resolved.trial_seed": seed,
        "resolved.backend": active_backend(),
        "raster.sampled": ",".join(str(i) for i in table.sampled_ids),
        "result.spikes_total": result.spike_count_total,
        "result.spikes_delivered": result.spike_count_delivered,
    })
    print(f"raster events: {len(table)}")
    print(f"outputs written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key = value config file")
    for key, (parser_fn, _, flag, help_text) in CONFIG_KEYS.items():
        common.add_argument(flag, dest=key.replace(".", "__"), type=parser_fn,
                            default=None, help=f"{help_text} [{key}]")

    ap = argparse.ArgumentParser(prog="spikefem",
                                 description="spiking-network Poisson solver and "
                                             "fault-injection experiments")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common],
                   help="run one trial and write solution/error fields")
    sweep = sub.add_parser("sweep", parents=[common],
                           help="fault-probability sweep with trial statistics")
    sweep.add_argument("kind", choices=("ablate", "drop"))
    sub.add_parser("raster", parents=[common],
                   help="run one logged trial and export spike times")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        resolved = resolve_config(args)
        if args.command == "solve":
            return cmd_solve(resolved)
        if args.command == "sweep":
            kind = "ablation" if args.kind == "ablate" else "drop"
            return cmd_sweep(resolved, kind)
        if args.command == "raster":
            return cmd_raster(resolved)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
