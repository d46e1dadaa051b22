#!/usr/bin/env python3
"""Imitation experiment: demonstrate on one curve, test on another family.

Generates the 2-minute helix demonstration under the threshold-dwell
demonstrator, trains the classifier, and scores it on a lissajous session
recorded under the same demonstrator (trajectory-agnostic generalization).
"""

import argparse
import time

import numpy as np

from iart import lstm
from iart.evaluation import classification_metrics
from iart.features import fit_scaler, make_windows
from iart.scenarios import get_scenario, run_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--model-out", default=None, help="save the trained model here")
    args = ap.parse_args()

    t0 = time.time()
    demo_scenario = get_scenario("default")
    print(f"demonstration: {demo_scenario.curve.family}, {demo_scenario.duration:.0f}s, seed {demo_scenario.seed}")
    demo = run_scenario(demo_scenario, assist_source="policy")
    pairs = demo.pairs()
    scaler = fit_scaler(pairs)
    ds = make_windows(pairs, scaler)
    print(f"  {len(ds)} windows, {100 * ds.labels.mean():.1f}% assistance-on")

    print(f"training: hidden 100, {args.epochs} epochs, batch 32 ...")
    model = lstm.train(ds, lstm.TrainConfig(epochs=args.epochs, seed=args.seed), hidden_size=100)
    print(f"  final loss {model.meta['final_loss']:.6f} ({time.time() - t0:.0f}s)")
    if args.model_out:
        lstm.save(model, args.model_out)
        print(f"  saved -> {args.model_out}")

    test_scenario = get_scenario("imitation-test")
    print(f"held-out test: {test_scenario.curve.family}, seed {test_scenario.seed}")
    test = run_scenario(test_scenario, assist_source="policy")
    tds = make_windows(test.pairs(), scaler)
    preds = (lstm.forward_batch(model.params, tds.windows) > 0.5).astype(int)
    rep = classification_metrics(preds, tds.labels.astype(int))
    print(f"  accuracy {100 * rep.accuracy:.2f}%  assist-off recall {100 * rep.tnr:.2f}%  "
          f"assist-on recall {100 * rep.tpr:.2f}%  over {rep.n_ticks} windows")
    print(f"total {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
