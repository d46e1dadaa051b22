"""Command-line interface covering the full pipeline:

simulate -> train -> replay / evaluate -> dagger -> serve, plus demo-data to
regenerate the frozen scenario files.  Every subcommand exits nonzero with a
single machine-parseable error line on failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__


def _data_dir(args) -> str:
    return getattr(args, "out_dir", None) or os.environ.get("IART_DATA_DIR", ".")


def cmd_simulate(args) -> int:
    from .scenarios import load_scenario, run_scenario
    from .controller import Gains
    from .session import write_log
    from . import geometry, lstm

    if args.scenario:
        scenario = load_scenario(args.scenario)
    elif args.curve:
        from .scenarios import get_scenario

        scenario = get_scenario("default")
        scenario.curve = geometry.load_curve_spec(args.curve)
    else:
        raise ValueError("simulate needs --scenario or --curve")
    if args.seed is not None:
        scenario.seed = args.seed
    if args.duration is not None:
        scenario.duration = args.duration
    if args.kp is not None or args.kd is not None or args.ramp is not None:
        g = scenario.gains
        scenario.gains = Gains(
            kp=args.kp if args.kp is not None else g.kp,
            kd=args.kd if args.kd is not None else g.kd,
            ramp_time=args.ramp if args.ramp is not None else g.ramp_time,
        )

    model = lstm.load(args.model) if args.model else None
    source = "model" if model is not None else ("policy" if scenario.policy else "none")
    log = run_scenario(scenario, assist_source=source, model=model, shadow=args.shadow)
    write_log(log, args.out)
    on = float(np.mean([t.action for t in log.ticks]))
    print(f"wrote {args.out}: {len(log.ticks)} ticks, {100 * on:.1f}% assistance on")
    return 0


def cmd_train(args) -> int:
    from .features import fit_scaler, make_windows
    from .lstm import TrainConfig, save, train
    from .session import read_log

    log = read_log(args.log)
    pairs = log.pairs()
    scaler = fit_scaler(pairs, enabled=not args.no_scaling)
    ds = make_windows(pairs, scaler)
    if args.balance:
        pos = ds.labels == 1
        n_pos = max(1, int(pos.sum()))
        n_neg = max(1, int(len(ds.labels) - pos.sum()))
        ds.weights = np.where(pos, len(ds.labels) / (2 * n_pos), len(ds.labels) / (2 * n_neg))
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    model = train(ds, config, hidden_size=args.hidden)
    save(model, args.out)
    print(
        f"trained on {len(ds)} windows ({100 * ds.labels.mean():.1f}% on) "
        f"for {args.epochs} epochs; final loss {model.meta['final_loss']:.6f}; wrote {args.out}"
    )
    return 0


def cmd_replay(args) -> int:
    from .lstm import load
    from .session import read_log, replay_agreement

    log = read_log(args.log)
    model = load(args.model)
    out = replay_agreement(log, model)
    if args.compare:
        print(
            f"replayed {out['n_ticks']} ticks: online/offline agreement with logged "
            f"actions {100 * out['agreement']:.2f}% over {out['compared']} post-warm-up ticks"
        )
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import session_report, write_report, write_boxplot_csv
    from .session import read_log

    log = read_log(args.pred)
    report = session_report(log, truth_source=args.truth_source)
    write_report(report, args.report)
    if args.boxplots:
        os.makedirs(args.boxplots, exist_ok=True)
        for kind, idx in (("error", 0), ("speed", 1)):
            dists = {
                src: [t[idx] for t in trans]
                for src, trans in report.transitions.items()
                if trans
            }
            if dists:
                write_boxplot_csv(os.path.join(args.boxplots, f"switch_on_{kind}.csv"), dists)
    if report.accuracy is not None:
        print(
            f"accuracy {report.accuracy:.4f} (TNR {report.tnr:.4f}, TPR {report.tpr:.4f}) "
            f"over {report.n_ticks} ticks; report -> {args.report}"
        )
    else:
        print(f"behavioral report over {report.n_ticks} ticks -> {args.report}")
    return 0


def cmd_dagger(args) -> int:
    from .dagger import dagger_iterate, load_aggregated, make_corrector, save_aggregated
    from .features import fit_scaler, make_windows
    from .lstm import load, save
    from .scenarios import load_scenario
    from .session import read_log

    model = load(args.model)
    scenario = load_scenario(args.scenario)
    corrector = make_corrector(args.corrector)

    if args.agg and os.path.exists(args.agg):
        base = load_aggregated(args.agg)
    elif args.demo_log:
        demo = read_log(args.demo_log)
        base = make_windows(demo.pairs(), model.scaler)
    else:
        raise ValueError("dagger needs --agg (existing checkpoint) or --demo-log (original demonstration)")

    new_model, agg, log, n_overrides = dagger_iterate(
        model, scenario, corrector, base, beta=args.beta
    )
    if n_overrides == 0:
        print("no overrides collected; model unchanged")
    save(new_model, args.out)
    if args.agg:
        save_aggregated(agg, args.agg)
    print(
        f"iteration {agg.iteration}: {n_overrides} overrides, dataset size {len(agg)}; wrote {args.out}"
    )
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    if args.model and not os.path.exists(args.model):
        raise FileNotFoundError(f"model file not found: {args.model}")
    serve(
        port=args.port,
        model_path=args.model,
        data_dir=_data_dir(args),
        static_dir=args.static,
    )
    return 0


def cmd_demo_data(args) -> int:
    from . import scenarios

    paths = scenarios.write_all(os.path.join(_data_dir(args), "scenarios"))
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iart", description="Learned when-to-assist trajectory tracking pipeline"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a headless closed-loop session")
    p.add_argument("--scenario", help="scenario JSON file or preset:<name>")
    p.add_argument("--curve", help="curve JSON file or preset:<name> (uses the default scenario)")
    p.add_argument("--model", help="drive assistance with a trained model file")
    p.add_argument("--shadow", action="store_true", help="log the scenario policy as shadow ground truth")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--kp", type=float)
    p.add_argument("--kd", type=float)
    p.add_argument("--ramp", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("train", help="train a model from a session log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--no-scaling", action="store_true", help="skip feature standardization")
    p.add_argument("--balance", action="store_true", help="inverse-frequency class weights")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("replay", help="replay a log through the online predictor")
    p.add_argument("--log", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--compare", action="store_true", help="print agreement statistics")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("evaluate", help="score a session log and emit a report")
    p.add_argument("--pred", required=True, help="session log with model-applied actions")
    p.add_argument("--truth-source", default="shadow", choices=["shadow", "self"])
    p.add_argument("--report", required=True)
    p.add_argument("--boxplots", help="directory for switch-on distribution CSVs")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("dagger", help="one override-driven retraining iteration")
    p.add_argument("--model", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--corrector", required=True, help="return-off or target-policy:{json}")
    p.add_argument("--beta", type=float, default=20.0)
    p.add_argument("--agg", help="aggregated dataset checkpoint (read if present, updated)")
    p.add_argument("--demo-log", help="original demonstration log (builds the base dataset)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dagger)

    p = sub.add_parser("serve", help="run the realtime service for the browser UI")
    p.add_argument("--port", type=int, default=8732)
    p.add_argument("--model", help="model file for realtime mode")
    p.add_argument("--static", help="UI bundle directory (defaults to frontend/dist if present)")
    p.add_argument("--out-dir", help="directory for persisted session logs")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("demo-data", help="regenerate the frozen scenario files")
    p.add_argument("--out-dir", help="base output directory (default IART_DATA_DIR or .)")
    p.set_defaults(fn=cmd_demo_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # single-line machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
