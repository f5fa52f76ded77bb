"""``wattlab`` command line.

Exit codes: 0 success, 1 every sweep cell failed, 2 config/profile/model
error, 3 power source unavailable, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .energy import (
    METRICS,
    ProfileError,
    break_even,
    default_profiles,
    layerwise_breakdown,
    load_profiles,
    model_energy,
    total_energy,
)
from .link_sim import BerCurve, ChannelConfig, evaluate_ber, read_ber_csv, write_ber_csv
from .model_ir import InvalidSpecError, example_model, load_model
from .net import Net, load_checkpoint, save_checkpoint, write_loss_csv
from .power import (
    CounterSource,
    PartialTraceError,
    ReplaySource,
    SourceUnavailableError,
    run_measured,
)
from .reports import config_hash, format_joules, header_comment, write_csv, write_json
from .sweep import SWEEP_KINDS, ExperimentSettings, run_cell, student_spec, sweep, train_teacher

log = logging.getLogger("wattlab")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOURCE, EXIT_USAGE = 0, 1, 2, 3, 64

PROFILE_ENV = "WATTLAB_PROFILE_PATH"
DEFAULT_COUNTERS = "/sys/class/powercap"

# inputs of the reference deployment scenario and the break-even count
# usually quoted alongside them
REFERENCE_BREAKEVEN = {"training_step_j": 20.0, "n_training_steps": 250_000,
                       "single_inference_j": 2e-3}
QUOTED_BREAKEVEN = 1e5

SWEEP_FIGURES = {
    "student_size": ("fig3_size_ladder", "FLOPs per inference", True),
    "teacher_size": ("fig4_teacher_sweep", "teacher width", False),
    "temperature": ("fig5_T_sweep", "temperature T", False),
    "alpha": ("alpha_sweep", "alpha", True),
}


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config ------------------------------------------------------------------

# flag dest -> (path in resolved config, type)
_EXPERIMENT_FLAGS = {
    "seed": ("master_seed", int),
    "n_train": ("n_train", int),
    "student_width": ("student_width", int),
    "student_blocks": ("student_blocks", int),
    "teacher_width": ("teacher_width", int),
    "teacher_blocks": ("teacher_blocks", int),
    "lr": ("learning_rate", float),
    "steps": ("n_steps", int),
    "batch_size": ("batch_size", int),
    "teacher_lr": ("teacher_learning_rate", float),
    "teacher_steps": ("teacher_steps", int),
    "alpha": ("alpha", float),
    "temperature": ("temperature", float),
    "seeds": ("n_seeds", int),
    "modulation": ("channel.modulation", str),
    "n_rx": ("channel.n_rx", int),
    "n_pilots": ("channel.n_pilots", int),
    "sinr_grid": ("channel.sinr_grid_db", None),
    "samples_per_point": ("channel.samples_per_point", int),
}


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def resolve_experiment(args) -> dict:
    """Defaults, then the config file, then explicit flags."""
    resolved = ExperimentSettings().to_dict()
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        file_exp = loaded.get("experiment", loaded)
        for key, value in file_exp.items():
            if key == "channel":
                unknown = set(value) - set(resolved["channel"])
                if unknown:
                    raise ConfigError(f"{args.config}: unknown channel keys {sorted(unknown)}")
                resolved["channel"].update(value)
            elif key in resolved:
                resolved[key] = value
            else:
                raise ConfigError(f"{args.config}: unknown key {key!r}")
    for dest, (path, _) in _EXPERIMENT_FLAGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if path.startswith("channel."):
            resolved["channel"][path.split(".", 1)[1]] = value
        else:
            resolved[path] = value
    resolved["channel"]["seed"] = resolved["master_seed"]
    try:
        ExperimentSettings.from_dict(resolved)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return resolved


def _run_dir(args, command: str, lock: dict) -> Path:
    out = Path(args.out)
    run = out / f"{command}-{config_hash(lock)}"
    run.mkdir(parents=True, exist_ok=True)
    write_json(run / "config.lock.json", lock)
    return run


def _profiles(args):
    path = getattr(args, "profiles", None) or os.environ.get(PROFILE_ENV)
    if path:
        return load_profiles(path), str(path)
    return default_profiles(), "<bundled>"


def _model(args):
    if getattr(args, "model", None):
        return load_model(args.model), str(args.model)
    return example_model(), "<bundled deeprx-like>"


def _pick_profile(profiles, name):
    if name is None:
        return profiles[0]
    for p in profiles:
        if p.name == name:
            return p
    raise ConfigError(f"profile {name!r} not found; available: {[p.name for p in profiles]}")


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- energy commands -----------------------------------------------------------

def cmd_estimate(args) -> int:
    spec, model_src = _model(args)
    profiles, profile_src = _profiles(args)
    chosen = profiles if args.all_profiles else [_pick_profile(profiles, args.profile)]
    metrics = args.metric or ["m0"]
    rows = []
    for prof in chosen:
        for metric in metrics:
            comp = model_energy(spec, prof, metric)
            est = total_energy(comp, args.bytes_accessed, prof)
            rows.append({"profile": prof.name, "metric": metric, "computation_j": est.computation_j,
                         "memory_j": est.memory_j, "total_j": est.total_j})
    payload = {"model": spec.name, "flops": spec.total_flops, "rows": rows}
    _emit(payload)
    if args.out:
        lock = {"command": "estimate", "model": model_src, "profiles": profile_src,
                "profile_names": [p.name for p in chosen], "metrics": metrics,
                "bytes_accessed": args.bytes_accessed}
        run = _run_dir(args, "estimate", lock)
        write_json(run / "estimate.json", payload)
        cols = ["profile", "metric", "computation_j", "memory_j", "total_j"]
        write_csv(run / "fig1_compare.csv", cols, ([r[c] for c in cols] for r in rows),
                  header_comment("estimate", lock))
        if not args.no_plots:
            plots.energy_comparison(rows, run / "fig1_compare.png")
    for r in rows:
        print(f"{r['profile']:>18} {r['metric']}: {format_joules(r['total_j'])}", file=sys.stderr)
    return EXIT_OK


def cmd_breakdown(args) -> int:
    spec, model_src = _model(args)
    profiles, profile_src = _profiles(args)
    prof = _pick_profile(profiles, args.profile)
    est = layerwise_breakdown(spec, prof, args.metric)
    payload = {"model": spec.name, "profile": prof.name, "metric": est.metric_used,
               "computation_j": est.computation_j, "blocks": est.block_totals()}
    _emit(payload)
    if args.out:
        lock = {"command": "breakdown", "model": model_src, "profiles": profile_src,
                "profile": prof.name, "metric": args.metric}
        run = _run_dir(args, "breakdown", lock)
        write_csv(run / "fig2_breakdown.csv", ["block_id", "layer_id", "energy_j"],
                  ((e.block_id, e.layer_id, e.energy_j) for e in est.per_layer),
                  header_comment("breakdown", lock))
        write_json(run / "breakdown.json", payload)
        if not args.no_plots:
            plots.layer_breakdown(est, run / "fig2_breakdown.png")
    return EXIT_OK


def _matches_reference(args) -> bool:
    ref = REFERENCE_BREAKEVEN
    return (np.isclose(args.training_step_j, ref["training_step_j"])
            and args.steps == ref["n_training_steps"]
            and np.isclose(args.single_inference_j, ref["single_inference_j"]))


def cmd_breakeven(args) -> int:
    try:
        report = break_even(args.training_step_j, args.steps, args.single_inference_j, args.rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    total = report.training_energy_total_j
    print(f"training energy total : {total!r} J ({format_joules(total)})")
    print(f"single inference      : {report.single_inference_j!r} J")
    print(f"break-even inferences : n* = {report.n_star}")
    print(f"time to break even    : {report.time_to_break_even_s!r} s "
          f"at {report.inference_rate_per_sec:g} inferences/s")
    print(f"{'inferences':>14} {'amortized training J/inf':>26} {'cumulative inference J':>24}")
    for n, amortized, cumulative in report.rows():
        print(f"{n:>14.0e} {amortized:>26.6g} {cumulative:>24.6g}")
    ten_min = report.single_inference_j * report.inference_rate_per_sec * 600
    print(f"ten minutes of inference: {ten_min:.6g} J "
          f"({ten_min / total:.3g} x training energy)")
    if _matches_reference(args):
        print(f"note: these inputs give n* = {report.n_star:.3g}, not the ~{QUOTED_BREAKEVEN:.0e} "
              f"inferences often quoted for this scenario; ~1e5 would need a total training "
              f"energy near {QUOTED_BREAKEVEN * report.single_inference_j:g} J, and ten minutes "
              f"of inference ({ten_min:g} J) stays far below {total:g} J.")
    if args.out:
        lock = {"command": "breakeven", "training_step_j": args.training_step_j,
                "n_training_steps": args.steps, "single_inference_j": args.single_inference_j,
                "inference_rate_per_sec": args.rate}
        run = _run_dir(args, "breakeven", lock)
        write_csv(run / "breakeven.csv", ["n_inferences", "amortized_training_j", "cumulative_inference_j"],
                  report.rows(), header_comment("breakeven", lock))
        write_json(run / "breakeven.json", {
            "training_energy_total_j": total, "single_inference_j": report.single_inference_j,
            "n_star": report.n_star, "inference_rate_per_sec": report.inference_rate_per_sec,
            "time_to_break_even_s": report.time_to_break_even_s})
        if not args.no_plots:
            plots.breakeven(report, run / "breakeven.png")
    return EXIT_OK


# -- measurement -------------------------------------------------------------

def _make_source(spec: str):
    kind, _, where = spec.partition(":")
    if kind == "replay":
        return ReplaySource.from_csv(where)
    if kind == "counters":
        return CounterSource(where or DEFAULT_COUNTERS)
    raise UsageError(f"unknown source {spec!r}; use replay:<file> or counters:<dir>")


def _make_workload(args):
    if args.command_argv:
        argv = args.command_argv[1:] if args.command_argv[0] == "--" else args.command_argv
        if argv:
            return lambda: subprocess.run(argv, check=False)
    kind, _, value = (args.workload or "idle").partition(":")
    if kind == "idle":
        return lambda: None
    try:
        seconds = float(value)
    except ValueError:
        raise UsageError(f"bad workload {args.workload!r}")
    if kind == "sleep":
        return lambda: time.sleep(seconds)
    if kind == "busy":
        def busy():
            end = time.perf_counter() + seconds
            x = 0
            while time.perf_counter() < end:
                x += 1
            return x
        return busy
    raise UsageError(f"unknown workload {args.workload!r}; use idle, busy:<s>, sleep:<s> or -- cmd")


def cmd_measure(args) -> int:
    workload = _make_workload(args)
    source = _make_source(args.source)
    report = run_measured(workload, source, args.baseline_s, args.interval)
    payload = report.to_dict()
    payload["source"] = source.name
    _emit(payload)
    if report.drift_warning:
        print("warning: workload power below baseline (baseline drift?)", file=sys.stderr)
    if args.out:
        lock = {"command": "measure", "source": args.source, "baseline_s": args.baseline_s,
                "interval_s": args.interval, "workload": args.workload,
                "argv": args.command_argv}
        run = _run_dir(args, "measure", lock)
        write_json(run / "measure.json", payload)
    return EXIT_OK


# -- training commands ---------------------------------------------------------

def _pair_key(settings: ExperimentSettings) -> str:
    """Identity of a student training setup, ignoring how it is supervised."""
    d = settings.to_dict()
    for k in ("alpha", "temperature", "mode", "teacher_width", "teacher_blocks",
              "teacher_learning_rate", "teacher_steps", "teacher_batch_size", "n_seeds"):
        d.pop(k)
    return config_hash(d)


def _write_run(run: Path, lock: dict, settings: ExperimentSettings, cell, kind: str,
               seed_index: int) -> dict:
    comment = header_comment(kind, lock, settings.master_seed)
    spec = cell.run.spec
    save_checkpoint(run / "checkpoint.json", spec, cell.run.final_params,
                    cell.run.config.seed, extra={"mode": kind})
    write_loss_csv(cell.run.loss_history, run / "loss.csv", comment)
    write_ber_csv(cell.curve, run / "ber_curve.csv", comment)
    summary = {"command": kind, "pair_key": _pair_key(settings), "seed_index": seed_index,
               "flops": spec.flops_per_inference, "gm_ber": cell.gm_ber,
               "gm_ber_linear": cell.curve.gm_ber_linear, "label": cell.curve.model_label}
    write_json(run / "summary.json", summary)
    return summary


def _compare(args, run: Path, summary: dict, settings, lock) -> None:
    other = "train" if summary["command"] == "distill" else "distill"
    for path in sorted(Path(args.out).glob(f"{other}-*/summary.json")):
        theirs = json.loads(path.read_text("utf-8"))
        if theirs["pair_key"] != summary["pair_key"] or theirs["seed_index"] != summary["seed_index"]:
            continue
        distilled, scratch = (summary, theirs) if other == "train" else (theirs, summary)
        print(f"comparison: distilled gm_ber={distilled['gm_ber']:.4f} "
              f"scratch gm_ber={scratch['gm_ber']:.4f} "
              f"delta={distilled['gm_ber'] - scratch['gm_ber']:+.4f}")
        curves = [read_ber_csv(run / "ber_curve.csv", label=summary["command"]),
                  read_ber_csv(path.parent / "ber_curve.csv", label=theirs["command"])]
        if (run / "teacher_ber_curve.csv").exists():
            curves.append(read_ber_csv(run / "teacher_ber_curve.csv", label="teacher"))
        elif (path.parent / "teacher_ber_curve.csv").exists():
            curves.append(read_ber_csv(path.parent / "teacher_ber_curve.csv", label="teacher"))
        rows = [(c.model_label, p.sinr_db, p.ber, p.n_bits_tested) for c in curves for p in c.points]
        write_csv(run / "fig6_ber_sinr.csv", ["label", "sinr_db", "ber", "n_bits"], rows,
                  header_comment(summary["command"], lock, settings.master_seed))
        if not args.no_plots:
            plots.ber_curves(curves, run / "fig6_ber_sinr.png")
        return


def _experiment(args, command: str) -> tuple[ExperimentSettings, dict]:
    resolved = resolve_experiment(args)
    lock = {"command": command, "experiment": resolved}
    return ExperimentSettings.from_dict(resolved), lock


def cmd_train(args) -> int:
    settings, lock = _experiment(args, "train")
    settings = replace(settings, mode="scratch")
    lock["seed_index"] = args.seed_index
    run = _run_dir(args, "train", lock)
    cell = run_cell(settings, seed_index=args.seed_index, keep_run=True)
    if cell.status != "ok":
        print(f"training failed: {cell.error}", file=sys.stderr)
        return EXIT_FAILED
    summary = _write_run(run, lock, settings, cell, "train", args.seed_index)
    print(f"scratch student: flops={summary['flops']} gm_ber={summary['gm_ber']:.4f} -> {run}")
    _compare(args, run, summary, settings, lock)
    return EXIT_OK


def cmd_distill(args) -> int:
    settings, lock = _experiment(args, "distill")
    settings = replace(settings, mode="distill")
    lock["seed_index"] = args.seed_index
    lock["teacher_checkpoint"] = args.teacher
    run = _run_dir(args, "distill", lock)
    if args.teacher:
        t_spec, t_params, _ = load_checkpoint(args.teacher)
        teacher = Net(t_spec, t_params)
    else:
        t_run = train_teacher(settings)
        teacher = t_run.net
        save_checkpoint(run / "teacher_checkpoint.json", t_run.spec, t_run.final_params,
                        t_run.config.seed, extra={"mode": "teacher"})
    t_curve = evaluate_ber(teacher, settings.channel, "teacher", settings.master_seed)
    write_ber_csv(t_curve, run / "teacher_ber_curve.csv",
                  header_comment("distill", lock, settings.master_seed))
    cell = run_cell(settings, seed_index=args.seed_index, teacher=teacher, keep_run=True)
    if cell.status != "ok":
        print(f"distillation failed: {cell.error}", file=sys.stderr)
        return EXIT_FAILED
    summary = _write_run(run, lock, settings, cell, "distill", args.seed_index)
    print(f"teacher: flops={teacher.spec.flops_per_inference} gm_ber={t_curve.gm_ber:.4f}")
    print(f"distilled student: flops={summary['flops']} gm_ber={summary['gm_ber']:.4f} -> {run}")
    _compare(args, run, summary, settings, lock)
    return EXIT_OK


def cmd_sweep(args) -> int:
    settings, lock = _experiment(args, "sweep")
    if args.mode:
        settings = replace(settings, mode=args.mode)
        lock["experiment"]["mode"] = args.mode
    grid = args.grid
    if args.kind in ("student_size", "teacher_size"):
        grid = [int(v) for v in grid]
    lock.update(kind=args.kind, grid=grid, workers=args.workers)
    run = _run_dir(args, "sweep", lock)
    result = sweep(args.kind, grid, settings, workers=args.workers)
    comment = header_comment("sweep", lock, settings.master_seed)
    write_csv(run / "sweep.csv", ["grid_value", "seed", "gm_ber"],
              ((c.grid_value, c.seed, c.gm_ber if c.status == "ok" else None) for c in result.cells),
              comment)
    summary = result.summary()
    write_json(run / "summary.json", {"kind": args.kind, "master_seed": settings.master_seed,
                                      "config_hash": config_hash(lock), "rows": summary,
                                      "failed": [(c.grid_value, c.seed, c.error)
                                                 for c in result.cells if c.status != "ok"]})
    name, xlabel, log_x = SWEEP_FIGURES[args.kind]
    cols = ["grid_value", "flops", "median_gm_ber", "min_gm_ber", "max_gm_ber", "n_ok"]
    write_csv(run / f"{name}.csv", cols, ([r[c] for c in cols] for r in summary), comment)
    if not args.no_plots:
        plots.sweep_summary(summary, run / f"{name}.png", xlabel, log_x)
    for r in summary:
        med = "failed" if r["median_gm_ber"] is None else f"{r['median_gm_ber']:.4f}"
        print(f"{args.kind}={r['grid_value']}: median gm_ber {med} ({r['n_ok']} ok)")
    print(f"-> {run}")
    return EXIT_FAILED if result.all_failed else EXIT_OK


def cmd_evaluate(args) -> int:
    settings, lock = _experiment(args, "evaluate")
    lock["checkpoint"] = str(args.checkpoint)
    spec, params, _ = load_checkpoint(args.checkpoint)
    if spec.input_dim != settings.channel.feature_dim:
        raise ConfigError(f"checkpoint expects {spec.input_dim} features, channel gives "
                          f"{settings.channel.feature_dim}")
    run = _run_dir(args, "evaluate", lock)
    curve = evaluate_ber(Net(spec, params), settings.channel, Path(args.checkpoint).stem,
                         settings.master_seed)
    write_ber_csv(curve, run / "ber_curve.csv", header_comment("evaluate", lock, settings.master_seed))
    write_json(run / "summary.json", {"gm_ber": curve.gm_ber, "gm_ber_linear": curve.gm_ber_linear,
                                      "flops": spec.flops_per_inference})
    if not args.no_plots:
        plots.ber_curves([curve], run / "ber_curve.png")
    print(f"gm_ber={curve.gm_ber:.4f} -> {run}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _add_output(p, default: Optional[str]):
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--no-plots", action="store_true", help="skip PNG rendering")


def _add_experiment(p):
    p.add_argument("--config", help="JSON config or config.lock.json")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--n-train", type=int)
    p.add_argument("--student-width", type=int)
    p.add_argument("--student-blocks", type=int)
    p.add_argument("--teacher-width", type=int)
    p.add_argument("--teacher-blocks", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--teacher-lr", type=float)
    p.add_argument("--teacher-steps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--seeds", type=int, help="seeds per sweep cell")
    p.add_argument("--modulation", choices=["bpsk", "qpsk", "qam16"])
    p.add_argument("--n-rx", type=int)
    p.add_argument("--n-pilots", type=int)
    p.add_argument("--sinr-grid", type=_float_list)
    p.add_argument("--samples-per-point", type=int)
    _add_output(p, "wattlab-runs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wattlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="per-inference energy of a model")
    p.add_argument("--model")
    p.add_argument("--profiles", help=f"profile file (default ${PROFILE_ENV} or bundled)")
    p.add_argument("--profile")
    p.add_argument("--metric", action="append", choices=METRICS)
    p.add_argument("--all-profiles", action="store_true")
    p.add_argument("--bytes-accessed", type=int, default=0)
    _add_output(p, None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("breakdown", help="layer- and block-wise energy")
    p.add_argument("--model")
    p.add_argument("--profiles")
    p.add_argument("--profile")
    p.add_argument("--metric", choices=METRICS, default="m0")
    _add_output(p, None)
    p.set_defaults(func=cmd_breakdown)

    p = sub.add_parser("breakeven", help="training vs cumulative inference energy")
    p.add_argument("--training-step-j", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--single-inference-j", type=float, required=True)
    p.add_argument("--rate", type=float, required=True, help="inferences per second")
    _add_output(p, None)
    p.set_defaults(func=cmd_breakeven)

    p = sub.add_parser("measure", help="relative energy of a workload")
    p.add_argument("--source", default=f"counters:{DEFAULT_COUNTERS}",
                   help="replay:<csv> or counters:<dir>")
    p.add_argument("--baseline-s", type=float, default=5.0)
    p.add_argument("--interval", type=float, default=0.1)
    p.add_argument("--workload", help="idle, busy:<s> or sleep:<s>")
    p.add_argument("command_argv", nargs=argparse.REMAINDER, help="-- command to run")
    _add_output(p, None)
    p.set_defaults(func=cmd_measure)

    for name, func, help_ in (("train", cmd_train, "train a student from scratch"),
                              ("distill", cmd_distill, "train a student by distillation")):
        p = sub.add_parser(name, help=help_)
        _add_experiment(p)
        p.add_argument("--seed-index", type=int, default=0)
        if name == "distill":
            p.add_argument("--teacher", help="teacher checkpoint (trained if omitted)")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="hyperparameter sweep")
    _add_experiment(p)
    p.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    p.add_argument("--grid", type=_float_list, required=True)
    p.add_argument("--mode", choices=["scratch", "distill"],
                   help="supervision for student_size sweeps")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="BER curve of a checkpoint")
    _add_experiment(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wattlab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ProfileError, InvalidSpecError) as exc:
        print(f"wattlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SourceUnavailableError, PartialTraceError) as exc:
        print(f"wattlab: power source unavailable: {exc}\n"
              f"hint: pass --source replay:<file.csv> to use a recorded trace", file=sys.stderr)
        return EXIT_SOURCE
    except FileNotFoundError as exc:
        print(f"wattlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
