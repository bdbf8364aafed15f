"""Calibration sweep: train variants of the default config and report readout diagnostics.

Each variant is a JSON object of config overrides (one per line in a file, or
given on the command line). Besides the usual checkpoint metrics it reports
where three-way inference breaks down:

  dec_hidden   error when the target is decoded straight from hidden activity,
               using each hidden neuron's learned coordinate for the target
  dec_target   the ordinary inference error (decoded from the target population)
  agreement    mismatch between a hidden neuron's incoming and outgoing
               coordinates for the same population
  consistency  mismatch between learned hidden coordinates and the relation
  h_active     hidden neurons that fire at all for a clamped pair

Example:
    python3 scripts/calibrate.py '{}' '{"network": {"plasticity": {"inhib": {"rho_target": 5.0}}}}'
"""
import argparse
import json
from pathlib import Path

import numpy as np

from wakesleep.analysis import hidden_coordinates, preferred_stimuli
from wakesleep.config import ExperimentConfig, merge
from wakesleep.engine import run
from wakesleep.harness import run_experiment
from wakesleep.protocol import (DecodeError, decode_population_vector, evaluation_grid, frozen,
                                gaussian_profile, neuron_positions)
from wakesleep.ring import circular_error, weighted_circular_mean


def outgoing_coords(net, pop):
    m = net.matrix("H_exc", f"{pop}_exc")
    pref = np.nan_to_num(preferred_stimuli(net.input_matrix(pop)))
    out = np.full(m.n_pre, np.nan)
    for j in range(m.n_pre):
        sel = m.pre == j
        if sel.any():
            out[j] = weighted_circular_mean(pref[m.post[sel]], m.w[sel])[0]
    return out


def diagnostics(net, cfg):
    coords = hidden_coordinates(net)
    cols = {p: coords[:, i] for i, p in enumerate("ABC")}
    agree = np.nanmean([np.nanmean(circular_error(cols[p], outgoing_coords(net, p)))
                        for p in "ABC"])
    consistency = np.nanmean(circular_error((cols["A"] + cols["B"]) % 1.0, cols["C"]))
    e_h, e_t, active = [], [], []
    fail = cfg.evaluation.failure_error
    with frozen(net, np.random.default_rng([cfg.seed, 9])):
        for ex, tgt in evaluation_grid(cfg.evaluation.n_grid, cfg.evaluation.lattice_step):
            net.reset_neurons()
            net.zero_inputs()
            for p in "ABC":
                if p != tgt:
                    g = net.input_group(p)
                    g.set_rates(gaussian_profile(ex.value(p), g.size, cfg.inputs.peak_rate,
                                                 cfg.inputs.sigma))
            r = run(net, cfg.protocol.present_time * 1e3)
            h, t = r.counts["H_exc"], r.counts[f"{tgt}_exc"]
            active.append(int((h > 0).sum()))
            for counts, pos, acc in ((h, cols[tgt], e_h), (t, neuron_positions(net, tgt), e_t)):
                try:
                    acc.append(circular_error(decode_population_vector(counts, pos), ex.value(tgt)))
                except DecodeError:
                    acc.append(fail)
    return {"dec_hidden": float(np.mean(e_h)), "dec_target": float(np.mean(e_t)),
            "agreement": float(agree), "consistency": float(consistency),
            "h_active": float(np.mean(active))}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawTextHelpFormatter)
    ap.add_argument("variants", nargs="*", help="JSON override objects")
    ap.add_argument("--file", help="file with one JSON override object per line")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--examples", type=int, default=3000)
    args = ap.parse_args(argv)
    variants = list(args.variants)
    if args.file:
        variants += [ln for ln in Path(args.file).read_text().splitlines() if ln.strip()]
    for text in variants or ["{}"]:
        base = ExperimentConfig(seed=args.seed, n_examples=args.examples, save_heatmaps=False,
                                checkpoint_every=max(args.examples // 6, 1)).to_dict()
        cfg = ExperimentConfig.from_dict(merge(base, json.loads(text)))
        out = run_experiment(cfg, write=False)
        curve = [(c["examples"], round(c["error"], 3)) for c in out.record.checkpoints]
        diag = {k: round(v, 3) for k, v in diagnostics(out.network, cfg).items()}
        print(text, json.dumps(diag), curve, flush=True)


if __name__ == "__main__":
    main()
