"""Experiment orchestration: build or load, train, measure, write files.

A run is a pure function of its ExperimentConfig. Three independent random
streams are derived from the seed: construction ``[seed, 1]`` (inside the
builder), simulation ``seed`` (the network's own generator) and training
``[seed, 2]`` for example sampling and sleep noise. Every checkpoint evaluates
with a fresh generator ``[seed, 3, examples]`` so metrics never perturb
training.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (SortOrder, attractor_probe, cluster_report, hidden_coordinates,
                       mean_participation, plane_residual, resort, sort_order)
from .config import ExperimentConfig, save_config
from .protocol import ExperimentRecord, evaluate, evaluation_grid, train
from .snapshot import load_snapshot, save_snapshot
from .topology import HIDDEN, ModularNetwork, build_three_way


class HarnessError(RuntimeError):
    pass


@dataclass
class RunOutput:
    record: ExperimentRecord
    network: ModularNetwork
    probes: list = field(default_factory=list)  # (examples, [ProbeResult])
    coords: np.ndarray | None = None
    heatmaps: dict = field(default_factory=dict)  # examples -> {name: dense sorted matrix}


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def heatmap_matrices(net: ModularNetwork) -> dict[str, np.ndarray]:
    """Dense weight matrices with both axes sorted by preferred stimulus.

    Hidden neurons have no input matrix; their axis is sorted by the hidden
    neuron's A-coordinate so that structure is visible.
    """
    out = {}
    orders = {p: sort_order(net, p) for p in net.peripheral}
    for p in net.peripheral:
        out[f"{p}_input"] = resort(net.input_matrix(p), orders[p])
        out[f"{p}_recurrent"] = resort(net.recurrent_matrix(p), orders[p], orders[p])
    if HIDDEN in net.populations:
        coords = hidden_coordinates(net)
        h_order = SortOrder.from_preferences(coords[:, 0])
        h = net.populations[HIDDEN]
        out["H_recurrent"] = resort(net.recurrent_matrix(HIDDEN), h_order, h_order)
        for p in net.peripheral:
            pe = net.populations[p].exc
            out[f"{p}_to_H"] = resort(net.matrix(pe, h.exc), h_order, orders[p])
            out[f"H_to_{p}"] = resort(net.matrix(h.exc, pe), orders[p], h_order)
    return out


def checkpoint_metrics(net: ModularNetwork, cfg: ExperimentConfig, examples: int,
                       out: RunOutput | None = None) -> dict:
    ev = cfg.evaluation
    rng = np.random.default_rng([cfg.seed, 3, examples])
    grid = evaluation_grid(ev.n_grid, ev.lattice_step)
    res = evaluate(net, cfg.protocol, cfg.inputs, rng, grid, failure_error=ev.failure_error)
    row = {"error": res["error"], "failures": res["failures"]}
    probes = attractor_probe(net, ev.n_probes, rng, cfg.protocol) if net.tracker else []
    row["participation"] = mean_participation(probes) if probes else math.nan
    diags, blocks = [], []
    for p in net.peripheral:
        rep = cluster_report(net, p, ev.band)
        row[f"diag_{p}"] = rep.diag_concentration
        row[f"input_diag_{p}"] = rep.input_diag_concentration
        row[f"block_mass_{p}"] = rep.block_mass
        diags.append(rep.diag_concentration)
        blocks.append(rep.block_mass)
    row["diag_mean"] = float(np.mean(diags))
    row["block_mass_mean"] = float(np.mean(blocks))
    coords = hidden_coordinates(net) if HIDDEN in net.populations else None
    row["plane_residual"] = plane_residual(coords) if coords is not None else math.nan
    if out is not None:
        out.probes.append((examples, probes))
        out.coords = coords
        if cfg.save_heatmaps:
            out.heatmaps[examples] = heatmap_matrices(net)
    return row


def build_network(cfg: ExperimentConfig) -> ModularNetwork:
    if cfg.init_snapshot:
        net = load_snapshot(cfg.init_snapshot)
        if net.config.scale != cfg.network.scale:
            raise HarnessError("initial snapshot was built at a different scale")
        # continue from the stored weights under this run's plasticity settings
        pl = cfg.network.plasticity
        net.rates.eta_pre, net.rates.eta_post, net.rates.eta_inh = pl.eta_pre, pl.eta_post, pl.eta_inh
        net.config.plasticity = pl
        return net
    return build_three_way(cfg.network, cfg.seed)


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> RunOutput:
    """Train one network per ``cfg`` and (optionally) write every output file."""
    out_dir = Path(out_dir or cfg.out_dir or f"runs/{cfg.name}")
    if write:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_config(cfg, out_dir / "config.json")
        except OSError as e:
            raise HarnessError(f"cannot write to output directory {out_dir}: {e}") from e
    net = build_network(cfg)
    out = RunOutput(ExperimentRecord(), net)
    rng = np.random.default_rng([cfg.seed, 2])
    snaps = []

    def ck(n, k):
        row = checkpoint_metrics(n, cfg, k, out)
        if write and cfg.snapshot_every_checkpoint:
            p = save_snapshot(n, out_dir / f"snapshot_{k:06d}.wsnp", {"examples": k})
            snaps.append(str(p))
        return row

    rec = train(net, cfg.n_examples, cfg.protocol, rng, cfg.inputs, checkpoint=ck,
                checkpoint_every=cfg.checkpoint_every)
    rec.snapshots = snaps
    out.record = rec
    if rec.checkpoints[-1]["examples"] != cfg.n_examples:
        rec.checkpoints.append(dict(ck(net, cfg.n_examples), examples=cfg.n_examples))
    if write:
        p = save_snapshot(net, out_dir / "final.wsnp", {"examples": cfg.n_examples})
        rec.snapshots.append(str(p))
        emit_outputs(out, out_dir)
    return out


def _write_csv(path: Path, header: list, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])
    except OSError as e:
        raise HarnessError(f"cannot write {path}: {e}") from e


def emit_outputs(out: RunOutput, out_dir) -> dict[str, Path]:
    """Write error_curve.csv, hidden_coords.csv, probe_rates.csv and heatmap grids."""
    rec = out.record
    if not rec.checkpoints:
        raise HarnessError("record has no checkpoints")
    out_dir = Path(out_dir)
    paths = {}
    keys = ["examples"] + [k for k in rec.checkpoints[0] if k != "examples"]
    paths["error_curve"] = out_dir / "error_curve.csv"
    _write_csv(paths["error_curve"], keys, ([c[k] for k in keys] for c in rec.checkpoints))

    if out.coords is not None:
        paths["hidden_coords"] = out_dir / "hidden_coords.csv"
        c = out.coords
        _write_csv(paths["hidden_coords"], ["neuron", "x_A", "x_B", "x_C"],
                   ([i, *c[i]] for i in range(len(c))))

    paths["probe_rates"] = out_dir / "probe_rates.csv"
    n = max((len(p.evoked_rates) for _, ps in out.probes for p in ps), default=0)
    _write_csv(paths["probe_rates"],
               ["examples", "probe", "population", "participation_ratio"]
               + [f"r{i}" for i in range(n)],
               ([k, j, p.population, p.participation_ratio, *p.evoked_rates]
                for k, ps in out.probes for j, p in enumerate(ps)))

    if out.heatmaps:
        hdir = out_dir / "heatmaps"
        hdir.mkdir(exist_ok=True)
        for k, mats in out.heatmaps.items():
            for name, m in mats.items():
                p = hdir / f"{name}_{k:06d}.csv"
                try:
                    np.savetxt(p, m, delimiter=",", fmt="%.17g")
                except OSError as e:
                    raise HarnessError(f"cannot write {p}: {e}") from e
    with open(out_dir / "record.json", "w") as fh:
        json.dump({"examples_presented": rec.examples_presented,
                   "sleep_phases": rec.sleep_phases, "snapshots": rec.snapshots}, fh, indent=2)
    return paths


def read_curve(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def compare(paths, out_path) -> Path:
    """Stack several error_curve.csv files into one long table with a run column."""
    header, rows = None, []
    for p in paths:
        p = Path(p)
        f = p / "error_curve.csv" if p.is_dir() else p
        h, data = read_curve(f)
        if header is None:
            header = h
        elif h != header:
            raise HarnessError(f"{f} has columns {h}, expected {header}")
        name = f.parent.name
        rows += [[name, *r] for r in data.tolist()]
    if header is None:
        raise HarnessError("nothing to compare")
    _write_csv(Path(out_path), ["run"] + header, rows)
    return Path(out_path)

