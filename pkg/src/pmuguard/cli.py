"""Command-line entry point.

Exit codes: 0 success, 1 failed ``--check``, 2 bad flags or config,
3 unreadable or malformed input/output files.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attack import load_labels, save_labels
from .evaluation import (
    MetricsReport,
    PipelineParams,
    attack_stage,
    generate_stage,
    run_scenario,
    write_reports_csv,
)
from .grid import GridModel
from .icon import Ensemble, calibrate_gamma, save_log
from .origin import calibrate_matrix, collect_detections, detect_stream, load_states, save_states
from .phasor import (
    AttackPattern,
    NonFiniteSampleError,
    ScenarioConfig,
    StreamFormatError,
    load_preset,
    load_stream,
    save_stream,
)
from .retrieval import retrieve_stream, retrieved_path

log = logging.getLogger("pmuguard")

CONFIG_ENV = "PMUGUARD_CONFIG"
EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 1, 2, 3

# command-line flag -> config field
SCENARIO_FLAGS = {
    "seed": "seed",
    "strategy": "attack_strategy",
    "sigma": "noise_sigma",
    "cycles": "cycles",
}
PIPELINE_FLAGS = {
    "omega": "omega",
    "tau": "tau",
    "margin": "margin",
    "gamma": "gamma",
    "lam": "lam",
    "mode": "mode",
    "method": "retrieval",
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

def read_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - {"preset", "scenario", "pipeline"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return data


def resolve(args) -> tuple[ScenarioConfig, PipelineParams]:
    """Defaults, then config file, then flags."""
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    data = read_config_file(path) if path else {}
    preset = getattr(args, "preset", None) or data.get("preset") or "scenario1"
    scen = dict(data.get("scenario", {}))
    for flag, name in SCENARIO_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            scen[name] = val
    pipe = dict(data.get("pipeline", {}))
    for flag, name in PIPELINE_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            pipe[name] = val
    try:
        if "pmus" in scen:
            cfg = ScenarioConfig.from_dict(scen)
        else:
            base = load_preset(preset).to_dict()
            base["attack_classes"] = None  # re-derive from strategy and cycles
            base.update(scen)
            cfg = ScenarioConfig.from_dict(base)
        params = PipelineParams.from_dict(pipe)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, params


# ---------------------------------------------------------------- commands

def _summary(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_generate(args) -> int:
    cfg, _ = resolve(args)
    model, original, cols = generate_stage(cfg)
    out = Path(args.output)
    save_stream(original, out)
    model.save(args.model or out.with_suffix(".model.json"))
    _summary(f"generate: {original.n_samples} samples x {original.n_channels} channels -> {out}")
    return 0


def cmd_attack(args) -> int:
    cfg, _ = resolve(args)
    model = GridModel.load(args.model)
    original = load_stream(args.input, rate_hz=cfg.rate_hz)
    attacked, labels, plan = attack_stage(cfg, model, original)
    out = Path(args.output)
    save_stream(attacked, out)
    save_labels(labels, args.labels or out.with_suffix(".labels.csv"), attacked.channel_names)
    plan.save(args.plan or out.with_suffix(".plan.json"))
    _summary(f"attack: strategy {plan.strategy}, {len(plan.classes)} intervals, "
             f"{len(plan.support)} channels -> {out}")
    return 0


def _train_length(args, cfg: ScenarioConfig) -> int:
    n = args.train_length if args.train_length is not None else cfg.train_length
    if n < 1:
        raise ConfigError("train length must be positive")
    return n


def cmd_detect(args) -> int:
    cfg, params = resolve(args)
    m = load_stream(args.input, rate_hz=cfg.rate_hz)
    n_train = _train_length(args, cfg)
    if n_train > m.n_samples:
        raise ConfigError(f"train length {n_train} exceeds stream length {m.n_samples}")
    states = calibrate_matrix(m.slice_rows(0, n_train), params.omega, params.tau,
                              params.margin, params.delta_floor)
    traces = detect_stream(m, states)
    events = collect_detections(traces)
    out = Path(args.output)
    with out.open("w") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")
    save_states(states, args.states or out.with_suffix(".states.json"))
    _summary(f"detect: {len(events)} detection events on {m.n_channels} channels -> {out}")
    return 0


def _read_events(path) -> list[AttackPattern]:
    pats = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pats.append(AttackPattern(np.asarray(rec["pattern"], float),
                                          int(rec["channel"]), int(rec["t"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise StreamFormatError(f"{path}:{ln}: bad detection event ({exc})") from exc
    return pats


def cmd_classify(args) -> int:
    _, params = resolve(args)
    pats = _read_events(args.input)
    if not pats:
        raise ConfigError("no detection events to classify")
    truth = None
    if args.labels:
        labels = load_labels(args.labels)
        truth = np.array([labels[p.t_detect, p.channel_id] for p in pats])
    gamma = params.gamma
    if gamma is None:
        gamma = (calibrate_gamma(pats, truth, params.gamma_grid, params.lam, params.mode,
                                 params.gamma_max_patterns)
                 if len(pats) >= 2 else max(params.gamma_grid))
    ens = Ensemble(gamma, params.lam, params.mode)
    results = ens.classify_many(pats)
    out = Path(args.output)
    save_log(((p.t_detect, p.channel_id, r.label, r.upsilon, r.new_class)
              for p, r in zip(pats, results)), out)
    ens.save(args.snapshot or out.with_suffix(".ensemble.json"))
    _summary(f"classify: {len(pats)} patterns, {ens.next_label} classes, gamma={gamma:.4g} -> {out}")
    return 0


def cmd_retrieve(args) -> int:
    cfg, params = resolve(args)
    m = load_stream(args.input, rate_hz=cfg.rate_hz)
    states = load_states(args.states)
    retrieved, _ = retrieve_stream(m, states, params.retrieval)
    out = Path(args.output) if args.output else retrieved_path(args.input)
    save_stream(retrieved, out, "csv")
    _summary(f"retrieve: {retrieved.n_samples} samples -> {out}")
    return 0


def acceptance_failures(report: MetricsReport) -> list[str]:
    """Floors a single run must meet; empty when it passes."""
    fails = []
    det = report.detection
    sigma = report.config_echo["scenario"]["noise_sigma"]
    if det["false_alarms_clean_prefix"]:
        fails.append(f"{det['false_alarms_clean_prefix']} false alarms before the first attack")
    for key in ("recall_intrusion", "precision_safe"):
        if det[key] is not None and det[key] < 0.90:
            fails.append(f"{key} {det[key]:.3f} < 0.90")
    ratio = report.retrieval.get("max_channel_ratio")
    limit = 0.1 if sigma == 0 else 0.2 if sigma <= 0.05 else None
    if limit is not None and ratio is not None and ratio > limit:
        fails.append(f"retrieval ratio {ratio:.3f} > {limit}")
    if report.runtime > 5.0:
        fails.append(f"runtime {report.runtime:.2f}s > 5s")
    return fails


def _write_report(report_json: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(report_json + "\n")
    else:
        Path(output).write_text(report_json + "\n")


def cmd_run(args) -> int:
    cfg, params = resolve(args)
    report, art = run_scenario(cfg, params, return_artifacts=True)
    if args.save_dir:
        d = Path(args.save_dir)
        d.mkdir(parents=True, exist_ok=True)
        sim = art["sim"]
        save_stream(sim.original, d / "clean.csv")
        sim.model.save(d / "clean.model.json")
        save_stream(sim.attacked, d / "attacked.csv")
        save_labels(sim.labels, d / "attacked.labels.csv", sim.attacked.channel_names)
        sim.plan.save(d / "attacked.plan.json")
        save_states(art["states"], d / "detections.states.json")
        with (d / "detections.jsonl").open("w") as fh:
            for ev in collect_detections(art["traces"]):
                fh.write(ev.to_json() + "\n")
        save_stream(art["retrieved"], d / "attacked.retrieved.csv", "csv")
    _write_report(report.to_json(), args.output)
    if args.csv:
        write_reports_csv([report], args.csv)
    det = report.detection
    _summary(f"run {cfg.name} seed={cfg.seed} sigma={cfg.noise_sigma}: "
             f"recall={_fmt(det['recall_intrusion'])} accuracy={_fmt(det['accuracy'])} "
             f"runtime={report.runtime:.2f}s")
    if args.check:
        fails = acceptance_failures(report)
        for f in fails:
            log.error("check failed: %s", f)
        if fails:
            return EXIT_CHECK
    return 0


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def _sweep_job(job):
    cfg_dict, params_dict = job
    report = run_scenario(ScenarioConfig.from_dict(cfg_dict), PipelineParams.from_dict(params_dict))
    return report.to_dict()


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_sweep(args) -> int:
    cfg, params = resolve(args)
    sigmas = _parse_floats(args.sigmas)
    for s in sigmas:
        if not 0.0 <= s <= 0.25:
            raise ConfigError(f"sigma {s} outside [0, 0.25]")
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    presets = args.presets.split(",") if args.presets else [None]
    jobs = []
    for name in presets:
        base = cfg if name is None else _preset_like(name, cfg)
        for seed in range(args.seed or 0, (args.seed or 0) + args.seeds):
            for s in sigmas:
                jobs.append((base.replace(seed=seed, noise_sigma=s).to_dict(), params.to_dict()))
    n_jobs = args.jobs or os.cpu_count() or 1
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            dicts = list(pool.map(_sweep_job, jobs))
    else:
        dicts = [_sweep_job(j) for j in jobs]
    reports = [MetricsReport(**{k: d[k] for k in ("detection", "classification", "retrieval",
                                                  "runtime", "config_echo", "diagnostics")})
               for d in dicts]
    _write_report(json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=2), args.output)
    if args.csv:
        write_reports_csv(reports, args.csv)
    _summary(f"sweep: {len(reports)} reports")
    if args.check:
        fails = [f"{r.config_echo['scenario']['name']} seed={r.config_echo['scenario']['seed']} "
                 f"sigma={r.config_echo['scenario']['noise_sigma']}: {f}"
                 for r in reports for f in acceptance_failures(r)]
        for f in fails:
            log.error("check failed: %s", f)
        if fails:
            return EXIT_CHECK
    return 0


def _preset_like(name: str, cfg: ScenarioConfig) -> ScenarioConfig:
    """Preset ``name`` carrying over the non-layout fields of ``cfg``."""
    try:
        base = load_preset(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return base.replace(attack_strategy=cfg.attack_strategy, cycles=cfg.cycles,
                        attack_classes=None)


# ---------------------------------------------------------------- parser

def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--preset", help="scenario preset name (scenario1..scenario4)")
    p.add_argument("--seed", type=int)
    p.add_argument("--strategy", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--sigma", type=float, help="column noise level in [0, 0.25]")
    p.add_argument("--cycles", type=int)


def _pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega", type=int, help="sliding-window length")
    p.add_argument("--tau", type=int, help="deviation-queue length")
    p.add_argument("--margin", type=float, help="threshold margin over training deviation")
    p.add_argument("--gamma", type=float, help="classifier threshold (default: calibrated)")
    p.add_argument("--lam", type=int, help="per-class memory size")
    p.add_argument("--mode", choices=("centered", "paper"))
    p.add_argument("--method", choices=("polar", "shortcut"), help="retrieval formula")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmuguard", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a clean measurement stream")
    _scenario_args(p)
    p.add_argument("--output", required=True)
    p.add_argument("--model", help="grid model JSON (default: <output>.model.json)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("attack", help="inject the scenario's attack schedule")
    _scenario_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--labels")
    p.add_argument("--plan")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("detect", help="calibrate on a clean prefix and emit detection events")
    _scenario_args(p)
    _pipeline_args(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="detections.jsonl")
    p.add_argument("--states", help="detector states JSON (default: <output>.states.json)")
    p.add_argument("--train-length", type=int, help="attack-free prefix length in samples")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", help="label detection events online")
    _pipeline_args(p)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--input", required=True, help="detection events JSONL")
    p.add_argument("--labels", help="ground-truth labels CSV for calibrating gamma")
    p.add_argument("--output", default="classification.csv")
    p.add_argument("--snapshot")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("retrieve", help="subtract the estimated injection")
    _pipeline_args(p)
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--input", required=True)
    p.add_argument("--states", required=True)
    p.add_argument("--output", help="default: <input>.retrieved.csv")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("run", help="end-to-end scenario run with metrics")
    _scenario_args(p)
    _pipeline_args(p)
    p.add_argument("--output", help="report JSON (default: stdout)")
    p.add_argument("--csv", help="plot-ready metrics CSV")
    p.add_argument("--save-dir", help="also write every intermediate file here")
    p.add_argument("--check", action="store_true", help="exit 1 if a floor is violated")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="seeded runs over noise levels")
    _scenario_args(p)
    _pipeline_args(p)
    p.add_argument("--sigmas", default="0,0.05,0.10,0.15,0.20,0.25")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--presets", help="comma-separated preset names")
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--output", help="reports JSON (default: stdout)")
    p.add_argument("--csv")
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = getattr(logging, str(args.log_level).upper(), None)
    if not isinstance(level, int):
        parser.error(f"bad --log-level {args.log_level!r}")
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (StreamFormatError, NonFiniteSampleError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
