#!/usr/bin/env python3
"""Realtime experiment: the trained model assists in the loop while the
rule-based demonstrator is evaluated in parallel as shadow ground truth.

Reports per-seed agreement, percent-time-on for both deciders, and the
paired t-test across seeds.
"""

import argparse

import numpy as np

from iart import lstm
from iart.evaluation import paired_t_test, session_report
from iart.features import fit_scaler, make_windows
from iart.scenarios import get_scenario, run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", help="trained model file (default: train one now)")
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--seeds", type=int, nargs="*", default=list(range(101, 108)))
    args = ap.parse_args()

    if args.model:
        model = lstm.load(args.model)
    else:
        demo = run_scenario(get_scenario("default"), assist_source="policy")
        ds = make_windows(demo.pairs(), fit_scaler(demo.pairs()))
        print(f"training on {len(ds)} windows for {args.epochs} epochs ...")
        model = lstm.train(ds, lstm.TrainConfig(epochs=args.epochs, seed=0), hidden_size=100)

    scenario = get_scenario("realtime")
    agreements, model_on, shadow_on = [], [], []
    for seed in args.seeds:
        log = run_scenario(scenario, assist_source="model", model=model, shadow=True, seed=seed)
        rep = session_report(log, truth_source="shadow")
        agreements.append(rep.accuracy)
        model_on.append(rep.percent_time_on["applied"])
        shadow_on.append(rep.percent_time_on["shadow"])
        print(f"seed {seed}: agreement {100 * rep.accuracy:.2f}%  "
              f"%on model {100 * model_on[-1]:.1f} / shadow {100 * shadow_on[-1]:.1f}  "
              f"switches {rep.switch_counts['applied']}")

    tt = paired_t_test(model_on, shadow_on)
    print(f"\nmean agreement {100 * np.mean(agreements):.2f}%")
    print(f"%time-on: model {100 * np.mean(model_on):.2f}% (std {100 * np.std(model_on, ddof=1):.2f}) "
          f"vs shadow {100 * np.mean(shadow_on):.2f}% (std {100 * np.std(shadow_on, ddof=1):.2f})")
    print(f"paired t({tt.df}) = {tt.t:.3f}, p = {tt.p:.4f}")


if __name__ == "__main__":
    main()
