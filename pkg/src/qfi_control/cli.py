"""Command-line driver.

Subcommands and the files they write into ``--out``:

  baseline   baseline.csv      t,f,f_over_t                  (no control)
  grape      grape_history.csv iteration,f,f_over_t
             schedule.csv      segment,u1,u2,u3
             trajectory.csv    t,f,f_over_t                  (F(t)/t of the result)
  train      learning_curve.csv epoch,worker,f_over_t,wall_clock_s
             checkpoint.ckpt   final network + optimizer + counters
             best.ckpt         network that produced the best episode
             schedule.csv, trajectory.csv                    (best episode)
  evaluate   schedule.csv, trajectory.csv, evaluate.json
  sweep      sweep.csv         omega0,method,f_over_t
  average    average.csv       delta_omega,method,avg_f_over_t

Every run also writes manifest.json: the resolved configuration, seed and
library versions.  In --deterministic mode wall-clock columns are written
as ``nan`` so that outputs are byte-identical between runs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dynamics import PulseSchedule, propagate
from .experiments import (
    FixedPulse, PolicyRollout, SweepResult, SweepSpec, average_f_over_t, default_delta_omegas,
    default_grid, load_config, preset, resolve_config, run_sweep,
)
from .fisher import baseline, trajectory_qfi
from .grape import optimize
from .trainer import checkpoint_load, checkpoint_save, evaluate, report_counters, train

logger = logging.getLogger("qfi_control")


class CliError(Exception):
    pass


def _fmt(x):
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_manifest(out, command, run, extra=None):
    doc = {
        "command": command,
        "config": run.to_dict(),
        "versions": {
            "qfi_control": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    doc.update(extra or {})
    with open(out / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def read_schedule(path, scenario):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"{path}: empty schedule")
    amps = np.array([[float(r["u1"]), float(r["u2"]), float(r["u3"])] for r in rows])
    return PulseSchedule(amps, scenario.dt, scenario.shape)


def write_schedule(path, schedule):
    write_csv(path, ["segment", "u1", "u2", "u3"],
              [(j, *map(float, u)) for j, u in enumerate(schedule.amplitudes)])


def write_trajectory(path, scenario, schedule):
    f = trajectory_qfi(propagate(scenario, schedule))[1:]
    t = scenario.times()[1:]
    write_csv(path, ["t", "f", "f_over_t"], zip(map(float, t), map(float, f), map(float, f / t)))
    return f[-1] / scenario.total_time


# --------------------------------------------------------------------------


def _resolve(args):
    if args.config:
        try:
            run = load_config(args.config)
        except FileNotFoundError:
            raise CliError(f"config file not found: {args.config}") from None
        except (ValueError, TypeError, KeyError) as exc:
            raise CliError(f"invalid config {args.config}: {exc}") from None
    else:
        try:
            run = resolve_config({"preset": args.preset})
        except KeyError as exc:
            raise CliError(str(exc)) from None
    t = run.train
    if args.seed is not None:
        t.seed = args.seed
        run.grape.seed = args.seed
    if args.workers is not None:
        t.n_env = args.workers
    if args.deterministic:
        t.deterministic = True
    if getattr(args, "epochs", None) is not None:
        t.max_epochs = args.epochs
    if args.trials is not None:
        run.sweep.trials = args.trials
    if args.grid is not None:
        run.sweep.grid = args.grid
    try:
        t.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return run


def cmd_baseline(args, run, out):
    s = run.scenario
    f0 = baseline(s)
    t = s.times()[1:]
    write_csv(out / "baseline.csv", ["t", "f", "f_over_t"],
              zip(map(float, t), map(float, f0), map(float, f0 / t)))
    print(f"F0(T)/T = {f0[-1] / s.total_time:.6f}")


def cmd_grape(args, run, out):
    res = optimize(run.scenario, run.grape)
    T = run.scenario.total_time
    write_csv(out / "grape_history.csv", ["iteration", "f", "f_over_t"],
              [(i, float(f), float(f / T)) for i, f in enumerate(res.qfi_history)])
    write_schedule(out / "schedule.csv", res.schedule)
    write_trajectory(out / "trajectory.csv", run.scenario, res.schedule)
    print(f"GRAPE F(T)/T = {res.final_qfi.f / T:.6f} (best iteration {res.best_iteration})")


def cmd_train(args, run, out):
    cfg = run.train
    t0 = time.perf_counter()
    report = train(cfg)
    elapsed = time.perf_counter() - t0
    with open(out / "learning_curve.csv", "w") as fh:
        fh.write("epoch,worker,f_over_t,wall_clock_s\n")
        for p in report.learning_curve:
            wc = "nan" if cfg.deterministic else f"{p.wall_clock_s:.6f}"
            fh.write(f"{p.epoch},{p.worker},{p.f_over_t!r},{wc}\n")
    counters = report_counters(report)
    checkpoint_save(out / "checkpoint.ckpt", report.final_params, counters, report.optimizer, {"kind": "final"})
    checkpoint_save(out / "best.ckpt", report.best_params, counters, None, {"kind": "best"})
    write_schedule(out / "schedule.csv", report.best_schedule)
    write_trajectory(out / "trajectory.csv", run.scenario,
                     PulseSchedule(report.best_schedule.amplitudes, run.scenario.dt, run.scenario.shape))
    logger.info("training took %.1f s", elapsed)
    print(f"best F(T)/T = {report.best_metric:.6f} over {report.epochs_run} epochs")


def _load_params(path):
    try:
        return checkpoint_load(path).params
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {path}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_evaluate(args, run, out):
    if not args.checkpoint:
        raise CliError("evaluate needs --checkpoint")
    params = _load_params(args.checkpoint)
    seed = run.train.seed
    schedule, value = evaluate(params, run.scenario, run.sweep.trials, seed, run.train.sigma_floor)
    write_schedule(out / "schedule.csv", schedule)
    write_trajectory(out / "trajectory.csv", run.scenario, schedule)
    with open(out / "evaluate.json", "w") as fh:
        json.dump({"f_over_t": value, "trials": run.sweep.trials, "seed": seed}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"best of {run.sweep.trials} trials: F(T)/T = {value:.6f}")


def cmd_sweep(args, run, out):
    s = run.scenario
    grid = default_grid(s.total_time, run.sweep.grid, s.omega0)
    results = [run_sweep(SweepSpec(grid, FixedPulse(PulseSchedule.zeros(s), "no_control"), s))]
    if args.schedule:
        try:
            sched = read_schedule(args.schedule, s)
        except FileNotFoundError:
            raise CliError(f"schedule not found: {args.schedule}") from None
        if sched.n_steps != s.n_steps:
            raise CliError(f"schedule has {sched.n_steps} segments, scenario needs {s.n_steps}")
        results.append(run_sweep(SweepSpec(grid, FixedPulse(sched, "grape"), s)))
    if args.checkpoint:
        params = _load_params(args.checkpoint)
        mode = PolicyRollout(params, run.sweep.trials, run.train.seed, "policy", run.train.sigma_floor)
        results.append(run_sweep(SweepSpec(grid, mode, s)))
    write_csv(out / "sweep.csv", ["omega0", "method", "f_over_t"], [r for res in results for r in res.rows()])
    print(f"sweep: {len(grid)} points x {len(results)} methods")


def read_sweep(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    by_method = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append((float(r["omega0"]), float(r["f_over_t"])))
    out = []
    for method, pts in by_method.items():
        pts.sort()
        w, v = map(np.array, zip(*pts))
        out.append(SweepResult(w, v, method))
    return out


def cmd_average(args, run, out):
    if not args.input:
        raise CliError("average needs --input sweep.csv")
    try:
        results = read_sweep(args.input)
    except FileNotFoundError:
        raise CliError(f"sweep file not found: {args.input}") from None
    center = run.scenario.omega0
    if args.delta_omega is not None:
        deltas = [args.delta_omega]
    elif run.sweep.delta_omegas:
        deltas = list(run.sweep.delta_omegas)
    else:
        deltas = list(default_delta_omegas(results[0], center))
    rows = []
    try:
        for res in results:
            for d in deltas:
                rows.append((float(d), res.method, average_f_over_t(res, d, center)))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_csv(out / "average.csv", ["delta_omega", "method", "avg_f_over_t"], rows)
    for d, m, v in rows:
        if len(deltas) == 1:
            print(f"{m}: <F(T)/T> over +-{d:g} = {v:.6f}")


COMMANDS = {
    "baseline": cmd_baseline,
    "grape": cmd_grape,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "average": cmd_average,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qfi-control",
        description="Control pulses maximizing the quantum Fisher information of a noisy qubit.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, formatter_class=argparse.RawDescriptionHelpFormatter)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", metavar="PATH", help="YAML/JSON config document")
        src.add_argument("--preset", default="dephasing-dt0.1", help="scenario preset (default %(default)s)")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--deterministic", action="store_true")
        p.add_argument("--trials", type=int)
        p.add_argument("--grid", type=int)
        p.add_argument("--delta-omega", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--checkpoint", metavar="PATH")
        p.add_argument("--schedule", metavar="PATH")
        p.add_argument("--input", metavar="PATH")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = _resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, run, out)
        extra = {"args": {k: v for k, v in vars(args).items() if k not in ("verbose",)}}
        write_manifest(out, args.command, run, extra)
    except CliError as exc:
        print(f"qfi-control: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
