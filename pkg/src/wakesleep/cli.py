"""Command line entry point: train, infer, probe, analyze, compare."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, merge
from .protocol import DecodeError, decode_population_vector, infer_counts, neuron_positions


def _parse_given(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(f"expected POP=VALUE, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v) % 1.0
    return out


def _parse_set(items) -> dict:
    """``a.b.c=value`` pairs into a nested dict; values are parsed as JSON if possible."""
    out: dict = {}
    for item in items or ():
        key, _, raw = item.partition("=")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        d = out
        parts = key.split(".")
        for p in parts[:-1]:
            d = d.setdefault(p, {})
        d[parts[-1]] = val
    return out


def cmd_train(args) -> int:
    from .harness import run_experiment

    base = load_config(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    upd = _parse_set(args.set)
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.out is not None:
        upd["out_dir"] = args.out
    if args.examples is not None:
        upd["n_examples"] = args.examples
    cfg = ExperimentConfig.from_dict(merge(base, upd))
    out = run_experiment(cfg)
    last = out.record.checkpoints[-1]
    print(f"examples={last['examples']} error={last['error']:.4f} -> {cfg.out_dir or 'runs/' + cfg.name}")
    return 0


def _load(path):
    from .snapshot import load_snapshot

    return load_snapshot(path, with_header=True)


def cmd_infer(args) -> int:
    from .config import WakeSleepConfig

    net, _ = _load(args.snapshot)
    rng = np.random.default_rng(args.seed)
    counts = infer_counts(net, args.given, args.target, WakeSleepConfig(), rng=rng)
    try:
        value = decode_population_vector(counts, neuron_positions(net, args.target))
        print(f"{args.target}={value:.4f}")
    except DecodeError as e:
        print(f"{args.target}=nan ({e})")
    return 0


def cmd_probe(args) -> int:
    from .analysis import attractor_probe

    net, _ = _load(args.snapshot)
    probes = attractor_probe(net, args.n, np.random.default_rng(args.seed))
    print("probe,population,participation_ratio,mean_rate")
    for i, p in enumerate(probes):
        print(f"{i},{p.population},{p.participation_ratio:.4f},{p.evoked_rates.mean():.3f}")
    return 0


def cmd_analyze(args) -> int:
    from .analysis import cluster_report, hidden_coordinates, plane_residual

    net, header = _load(args.snapshot)
    out = {"examples": header.get("extra", {}).get("examples")}
    for p in net.peripheral:
        rep = cluster_report(net, p)
        out[p] = {"diag_concentration": rep.diag_concentration,
                  "input_diag_concentration": rep.input_diag_concentration,
                  "block_mass": rep.block_mass}
    if net.hidden:
        out["plane_residual"] = plane_residual(hidden_coordinates(net))
    print(json.dumps(out, indent=2))
    return 0


def cmd_compare(args) -> int:
    from .harness import compare

    print(compare(args.records, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wakesleep", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="run one experiment")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.add_argument("--examples", type=int)
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field, e.g. protocol.t_sleep=2.0")
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("infer", help="query a snapshot")
    i.add_argument("--snapshot", required=True)
    i.add_argument("--given", type=_parse_given, required=True, help="e.g. A=0.2,B=0.3")
    i.add_argument("--target", required=True, choices=("A", "B", "C"))
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(fn=cmd_infer)

    p = sub.add_parser("probe", help="attractor diagnostics on a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_probe)

    a = sub.add_parser("analyze", help="weight metrics of a snapshot")
    a.add_argument("--snapshot", required=True)
    a.set_defaults(fn=cmd_analyze)

    c = sub.add_parser("compare", help="join error curves into one CSV")
    c.add_argument("records", nargs="+")
    c.add_argument("--out", default="compare.csv")
    c.set_defaults(fn=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
