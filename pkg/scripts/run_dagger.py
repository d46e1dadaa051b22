#!/usr/bin/env python3
"""Retraining experiments: suppress return-phase assistance and shift an
assist-too-often model toward larger-error assistance, each via one
beta-weighted aggregation iteration with a scripted corrector.
"""

import argparse

import numpy as np

from iart import lstm
from iart.dagger import dagger_iterate, make_corrector
from iart.evaluation import switch_transitions, welch_t_test
from iart.features import fit_scaler, make_windows
from iart.scenarios import get_scenario, run_scenario


def train_on(name, epochs):
    scenario = get_scenario(name)
    demo = run_scenario(scenario, assist_source="policy")
    ds = make_windows(demo.pairs(), fit_scaler(demo.pairs()))
    model = lstm.train(ds, lstm.TrainConfig(epochs=epochs, seed=0), hidden_size=100)
    return scenario, model, ds


def return_fraction(log):
    ticks = [tk for tk in log.ticks if tk.state.is_track == 0]
    return float(np.mean([tk.action for tk in ticks])), len(ticks)


def switch_errors(log):
    trans, _ = switch_transitions(log.actions(), [tk.state for tk in log.ticks])
    return [t[0] for t in trans]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=120)
    ap.add_argument("--beta", type=float, default=20.0)
    args = ap.parse_args()

    print("=== return-phase suppression ===")
    scenario, model, ds = train_on("dagger-return", args.epochs)
    before = run_scenario(scenario, assist_source="model", model=model, seed=scenario.seed + 2000)
    f0, n0 = return_fraction(before)
    print(f"before: assisting {100 * f0:.1f}% of {n0} return-phase ticks")
    model2, agg, _, n_ov = dagger_iterate(
        model, scenario, make_corrector("return-off"), base=ds, beta=args.beta
    )
    after = run_scenario(scenario, assist_source="model", model=model2, seed=scenario.seed + 2000)
    f1, n1 = return_fraction(after)
    print(f"after one iteration ({n_ov} overrides, beta {args.beta:.0f}): "
          f"{100 * f1:.1f}% of {n1} return-phase ticks")

    print("\n=== assist-too-often -> larger-error ===")
    scenario, model, ds = train_on("assist-too-often", args.epochs)
    errors_before = []
    for off in (2000, 3000):
        errors_before += switch_errors(
            run_scenario(scenario, assist_source="model", model=model, seed=scenario.seed + off)
        )
    corrector = make_corrector(
        'target-policy:{"kind": "threshold_dwell", "e_on": 0.022, "e_off": 0.012,'
        ' "t_dwell": 0.3, "t_release": 0.3}'
    )
    model2, agg, _, n_ov = dagger_iterate(model, scenario, corrector, base=ds, beta=args.beta)
    errors_after = []
    for off in (2000, 3000):
        errors_after += switch_errors(
            run_scenario(scenario, assist_source="model", model=model2, seed=scenario.seed + off)
        )
    tt = welch_t_test(errors_after, errors_before)
    print(f"median switch-on error: {1000 * np.median(errors_before):.1f} mm -> "
          f"{1000 * np.median(errors_after):.1f} mm ({n_ov} overrides)")
    print(f"Welch t({tt.df:.1f}) = {tt.t:.2f}, p = {tt.p:.2e}")


if __name__ == "__main__":
    main()
