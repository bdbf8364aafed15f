"""Named experiment configurations and a multi-seed sweep.

E1  cluster formation: 10x learning rate, no sleep
E2  cluster prevention: 10x learning rate with wake-sleep
E3  unlearning: E2 settings, started from an E1 endpoint snapshot
E4  low rate: standard learning rate, with and without wake-sleep
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig, WakeSleepConfig

HIGH_RATE = 10.0
R_SLEEP = 50
# per-population sleep time at desk scale; 3 s of sleep per 12.5 s of wake
T_SLEEP = 1.0
SEEDS = (1, 2, 3, 4, 5)


def _cfg(name, seed, n_examples, mult, t_sleep, **kw) -> ExperimentConfig:
    proto = WakeSleepConfig.with_sleep(t_sleep, r_sleep=R_SLEEP, rate_multiplier=mult)
    return ExperimentConfig(name=f"{name}_s{seed}", seed=seed, n_examples=n_examples,
                            protocol=proto, **kw)


def cluster_formation(seed: int, n_examples: int = 3000, **kw) -> ExperimentConfig:
    return _cfg("e1_clustering", seed, n_examples, HIGH_RATE, 0.0, **kw)


def cluster_prevention(seed: int, n_examples: int = 3000, t_sleep: float = T_SLEEP,
                       **kw) -> ExperimentConfig:
    return _cfg("e2_prevention", seed, n_examples, HIGH_RATE, t_sleep, **kw)


def unlearning(seed: int, snapshot: str, n_examples: int = 3000, t_sleep: float = T_SLEEP,
               **kw) -> ExperimentConfig:
    return _cfg("e3_unlearning", seed, n_examples, HIGH_RATE, t_sleep,
                init_snapshot=str(snapshot), **kw)


def low_rate(seed: int, wsa: bool, n_examples: int = 6000, t_sleep: float = T_SLEEP,
             **kw) -> ExperimentConfig:
    name = "e4_low_rate_wsa" if wsa else "e4_low_rate"
    return _cfg(name, seed, n_examples, 1.0, t_sleep if wsa else 0.0, **kw)


def _run_one(args):
    from .harness import run_experiment

    cfg, out_dir = args
    out = run_experiment(cfg, out_dir)
    return cfg.seed, out.record.checkpoints, out.record.snapshots


def sweep(configs, root, workers: int = 1) -> list:
    """Run configs (one output directory each under ``root``); returns
    ``(seed, checkpoints, snapshots)`` in input order."""
    root = Path(root)
    jobs = [(c, root / c.name) for c in configs]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_run_one, jobs))


def summary_lines(results, keys=("error", "participation", "diag_mean", "block_mass_mean")):
    """Human-readable per-seed table of checkpoint metrics."""
    lines = []
    for seed, ck, _ in results:
        lines.append(f"seed {seed}")
        lines.append("  examples " + " ".join(f"{k:>15}" for k in keys))
        for c in ck:
            lines.append(f"  {c['examples']:8d} " + " ".join(f"{c[k]:15.4f}" for k in keys))
    return lines
