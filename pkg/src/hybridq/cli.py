"""Experiment driver: ``run <config>``, ``check <config>``, ``list-models``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analysis import BinSpec, EnsembleAccumulator, joint_sigma
from .config import (ConfigError, RunConfig, default_observables, load_config, observable_matrix,
                     observable_name, parse_bins, parse_state)
from .engine import Mode, NumericalError, simulate_ensemble
from .models import ModelError, list_models, _REGISTRY
from .semigroup import (CheckReport, Liouvillian, derived_seed, lindblad_solve, normalization_check)
from .states import StateError, concurrence_pure, maximally_mixed, pure_vector, trace_distance

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
BLOCK_BYTES = 64 * 2**20


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    checks: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    files: dict = field(default_factory=dict)
    status: str = "ok"
    note: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(c["pass"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "seed": self.seed, "status": self.status,
                "note": self.note, "checks": self.checks, "wall_clock_s": self.wall_clock, "files": self.files}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(v) -> str:
    return repr(float(v))


class _Writer:
    """Writes CSV files into the output directory and records their digests."""

    def __init__(self, out_dir, manifest):
        self.out_dir = out_dir
        self.manifest = manifest
        os.makedirs(out_dir, exist_ok=True)

    def csv(self, name, header, rows):
        path = os.path.join(self.out_dir, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.manifest.files[name] = sha256_file(path)


def _entry_columns(n, prefix="sigma"):
    return [f"{prefix}_{i}{j}_{part}" for i in range(n) for j in range(n) for part in ("re", "im")]


def _entries(m):
    return [_fmt(getattr(v, part)) for v in np.asarray(m).reshape(-1) for part in ("real", "imag")]


def _bin_bounds(bins: BinSpec, b: int):
    if b == bins.n_bins:
        return [""] * (2 * len(bins.edges))
    idx = np.unravel_index(b, bins.shape)
    out = []
    for e, k in zip(bins.edges, idx):
        out += [_fmt(e[k]), _fmt(e[k + 1])]
    return out


def _bin_header(bins):
    return [c for j in range(len(bins.edges)) for c in (f"lo_{j}", f"hi_{j}")]


def _block_size(cfg, model, n_records):
    per_traj = n_records * (16 * model.n**2 + 8 * (model.s + model.l + 1))
    chunks = max(1, min(8, BLOCK_BYTES // max(per_traj * cfg.chunk_size, 1)))
    return cfg.chunk_size * chunks


def _pilot_bins(cfg, model, x0, rho0, grid):
    n = min(1000, cfg.n_traj)
    ens = simulate_ensemble(model, x0, rho0, cfg.T, cfg.dt, Mode.Q, n, derived_seed(cfg.seed, 7),
                            grid=grid, record_states=False, psd_check_every=0)
    return BinSpec.from_sample(ens.x.reshape(-1, model.s), n_bins=32, pad=0.1)


def _simulate_mode(cfg, model, x0, rho0, mode, grid, bins, obs, track_pure):
    acc = EnsembleAccumulator(grid * cfg.dt, model.n, bins, tuple(obs), track_pure=track_pure)
    block = _block_size(cfg, model, len(grid))
    paths = None
    for lo in range(0, cfg.n_traj, block):
        ens = simulate_ensemble(model, x0, rho0, cfg.T, cfg.dt, mode, min(block, cfg.n_traj - lo), cfg.seed,
                                first_index=lo, grid=grid, workers=cfg.workers, chunk_size=cfg.chunk_size,
                                psd_check_every=cfg.psd_check_every)
        acc.add(ens)
        if paths is None and cfg.n_paths and "paths" in cfg.outputs:
            paths = ens.head(cfg.n_paths)
    return acc, paths


def _write_mode_outputs(writer, cfg, model, mode, acc, paths, obs_names):
    times = acc.times
    m = mode.lower()
    if "a_priori" in cfg.outputs:
        state, se = acc.mean_state()
        rows = [[r, _fmt(t), _fmt(np.trace(state[r]).real), *_entries(state[r]), *_entries(se[r])]
                for r, t in enumerate(times)]
        writer.csv(f"a_priori_{m}.csv", ["time_index", "t", "trace", *_entry_columns(model.n),
                                          *_entry_columns(model.n, "stderr")], rows)
    if "marginals" in cfg.outputs and acc.bins is not None:
        mass, se = acc.marginal()
        rows = [[r, _fmt(t), b, *_bin_bounds(acc.bins, b), _fmt(mass[r, b]), _fmt(se[r, b])]
                for r, t in enumerate(times) for b in range(acc.bins.n_bins + 1)]
        writer.csv(f"marginals_{m}.csv", ["time_index", "t", "bin", *_bin_header(acc.bins), "mass", "stderr"],
                   rows)
    if "observables" in cfg.outputs and obs_names:
        mean, se = acc.observable_means()
        rows = [[r, _fmt(t), name, _fmt(mean[r, j]), _fmt(se[r, j])]
                for r, t in enumerate(times) for j, name in enumerate(obs_names)]
        writer.csv(f"observables_{m}.csv", ["time_index", "t", "observable", "mean", "stderr"], rows)
    if "concurrence" in cfg.outputs:
        mean, se = acc.concurrence()
        rows = [[r, _fmt(t), _fmt(mean[r]), _fmt(se[r]), _fmt(acc.conc_min[r]), _fmt(acc.conc_max[r])]
                for r, t in enumerate(times)]
        writer.csv(f"concurrence_{m}.csv", ["time_index", "t", "mean", "stderr", "min", "max"], rows)
    if "instrument" in cfg.outputs and mode == "Q" and acc.bins is not None:
        val, se = acc.instrument()
        r = len(times) - 1
        rows = [[b, *_bin_bounds(acc.bins, b), name, _fmt(val[r, b, j]), _fmt(se[r, b, j])]
                for j, name in enumerate(obs_names) for b in range(acc.bins.n_bins + 1)]
        writer.csv("instrument.csv", ["bin", *_bin_header(acc.bins), "observable", "value", "stderr"], rows)
    if paths is not None:
        rows = []
        for i in range(paths.n_traj):
            for r, t in enumerate(times):
                rows.append([int(paths.traj_indices[i]), r, _fmt(t), _fmt(paths.weight[i, r]),
                             *[_fmt(v) for v in paths.x[i, r]], *[int(c) for c in paths.counts[i, r]],
                             *_entries(paths.sigma[i, r])])
        header = ["trajectory_id", "time_index", "t", "weight", *[f"x_{j}" for j in range(model.s)],
                  *[f"count_{k}" for k in range(model.l)], *_entry_columns(model.n)]
        writer.csv(f"paths_{m}.csv", header, rows)


def _equilibrium_horizon(model):
    """10 over the slowest jump rate lambda_k ||J_k||^2."""
    liou = Liouvillian.from_model(model)
    strength = [lam * np.linalg.norm(J, 2) ** 2 for lam, J in zip(liou.rates, liou.J)]
    if not strength:
        raise ConfigError("equilibrium check needs a model with jumps")
    return 10.0 / min(strength)


def _run_checks(cfg, model, rho0, x0, results, obs_names, bins):
    out = {}
    final = -1
    for spec in cfg.checks:
        p = spec.params
        name = spec.name
        if name == "martingale":
            if "Q" not in results:
                raise ConfigError("martingale check needs Q-mode")
            mean, se = results["Q"][0].mean_weight()
            dev = abs(mean[final] - 1.0)
            out[name] = CheckReport(name, mean[final], se[final], 3 * se[final], bool(dev <= 3 * se[final])).to_dict()
        elif name == "mode_equivalence":
            if set(results) != {"Q", "P"}:
                raise ConfigError("mode_equivalence check needs mode: both")
            q, pa = results["Q"][0], results["P"][0]
            limit = float(p.get("sigma", 3.0))
            zs = []
            if obs_names:
                (mq, sq), (mp, sp) = q.observable_means(), pa.observable_means()
                zs.append(joint_sigma(mq[final], sq[final], mp[final], sp[final]))
            if bins is not None:
                (mq, sq), (mp, sp) = q.marginal(), pa.marginal()
                zs.append(joint_sigma(mq[final], sq[final], mp[final], sp[final]))
            worst = float(np.max(np.concatenate(zs))) if zs else 0.0
            out[name] = CheckReport(name, worst, 1.0, limit, worst <= limit).to_dict()
        elif name == "a_priori_lindblad":
            ref = lindblad_solve(Liouvillian.from_model(model), rho0, cfg.T)
            for mode, (acc, _) in results.items():
                state, _ = acc.mean_state()
                td = trace_distance(state[final], ref)
                tol = max(float(p.get("tol", 0.02)), 3 * acc.state_stderr(len(acc.times) - 1))
                out[f"{name}_{mode}"] = CheckReport(name, td, acc.state_stderr(len(acc.times) - 1), tol,
                                                    bool(td <= tol)).to_dict()
        elif name == "equilibrium":
            horizon = p.get("T", "auto")
            horizon = _equilibrium_horizon(model) if horizon == "auto" else float(horizon)
            tol = float(p.get("tol", 1e-6))
            rho_T = lindblad_solve(Liouvillian.from_model(model), rho0, horizon)
            td = trace_distance(rho_T, maximally_mixed(model.n))
            out[name] = CheckReport(name, td, 0.0, tol, bool(td < tol), {"horizon": horizon}).to_dict()
        elif name == "concurrence":
            tol = float(p.get("tol", 1e-8))
            c0 = float(concurrence_pure(pure_vector(rho0)))
            for mode, (acc, _) in results.items():
                dev = float(max(np.max(np.abs(acc.conc_min - c0)), np.max(np.abs(acc.conc_max - c0))))
                out[f"{name}_{mode}"] = CheckReport(name, dev, 0.0, tol, dev < tol, {"initial": c0}).to_dict()
        elif name == "purity":
            tol = float(p.get("tol", 1e-6))
            for mode, (acc, _) in results.items():
                gap = float(np.max(acc.gap_max))
                out[f"{name}_{mode}"] = CheckReport(name, gap, 0.0, tol, gap < tol).to_dict()
        elif name == "normalization":
            rep = normalization_check(model, x0, cfg.T, rho0, bins, N=cfg.n_traj, seed=derived_seed(cfg.seed, 5),
                                      dt=cfg.dt)
            out[name] = rep.to_dict()
    return out


def run_scenario(cfg: RunConfig, write_outputs: bool = True) -> RunManifest:
    """Execute the simulations and checks of ``cfg``; always leaves a manifest behind."""
    start = time.perf_counter()
    manifest = RunManifest(cfg.echo(), __version__, cfg.seed)
    out_dir = cfg.resolved_output_dir()
    writer = _Writer(out_dir, manifest)
    try:
        model = cfg.build_model()
        rho0 = parse_state(cfg.init_state, model.n)
        x0 = np.zeros(model.s) if cfg.init_x is None else np.asarray(cfg.init_x, dtype=float)
        grid = np.unique(np.append(np.arange(0, cfg.n_steps + 1, cfg.record_every or max(1, cfg.n_steps // 100)),
                                   cfg.n_steps))
        bins = parse_bins(cfg.bins, model.s)
        if bins is None and ({"marginals", "instrument"} & set(cfg.outputs)
                             or any(c.name in ("mode_equivalence", "normalization") for c in cfg.checks)):
            bins = _pilot_bins(cfg, model, x0, rho0, grid)
        obs_specs = list(cfg.observables) or list(default_observables(model.n))
        obs = [observable_matrix(o, model.n) for o in obs_specs]
        obs_names = [observable_name(o) for o in obs_specs]
        track_pure = "concurrence" in cfg.outputs or any(c.name in ("concurrence", "purity") for c in cfg.checks)
        results = {}
        for mode in cfg.modes:
            results[mode] = _simulate_mode(cfg, model, x0, rho0, mode, grid, bins, obs, track_pure)
            if write_outputs:
                _write_mode_outputs(writer, cfg, model, mode, *results[mode], obs_names)
        manifest.checks = _run_checks(cfg, model, rho0, x0, results, obs_names, bins)
    except (NumericalError, StateError) as exc:
        manifest.status = "aborted"
        manifest.note = f"numerical abort: {exc}"
    finally:
        manifest.wall_clock = time.perf_counter() - start
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
    return manifest


def _describe(name):
    doc = (_REGISTRY[name].__doc__ or "").strip().splitlines()
    return doc[0] if doc else ""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hybridq", description="Hybrid quantum-classical trajectory simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, helptext in (("run", "run a scenario and write outputs"), ("check", "run the configured checks only")):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument("config")
        p.add_argument("--output-dir", help="override the output directory")
        p.add_argument("--workers", type=int, help="override the worker count")
    sub.add_parser("list-models", help="list built-in models")
    args = parser.parse_args(argv)

    if args.command == "list-models":
        for name in list_models():
            print(f"{name:22s} {_describe(name)}")
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
        if args.workers:
            cfg.workers = args.workers
        if args.command == "check" and not cfg.checks:
            raise ConfigError("config lists no checks")
        manifest = run_scenario(cfg, write_outputs=args.command == "run")
    except (ConfigError, ModelError, OSError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for name, rep in manifest.checks.items():
        print(f"{'PASS' if rep['pass'] else 'FAIL'} {name}: estimate={rep['estimate']} tolerance={rep['tolerance']}")
    print(f"manifest: {os.path.join(cfg.resolved_output_dir(), 'manifest.json')}")
    if manifest.status != "ok":
        print(manifest.note, file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if manifest.passed else EXIT_CHECK_FAILED
