"""Scenario runner and metrics.

A run generates clean phasors, optionally adds column noise, injects the
scheduled attack, then detects, classifies and retrieves end to end and
scores every stage against the ground-truth labels.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AttackPlan, build_plan, inject
from .grid import GridModel, build_grid, generate_clean, repeat_cycles
from .icon import DEFAULT_GRID, DEFAULT_LAMBDA, Ensemble, calibrate_gamma, rand_index
from .origin import (
    DEFAULT_MARGIN,
    DEFAULT_OMEGA,
    DEFAULT_TAU,
    DELTA_FLOOR,
    ChannelTrace,
    DetectorState,
    calibrate_matrix,
    detect_stream,
    stream_flag,
)
from .phasor import AttackPattern, MeasurementMatrix, ScenarioConfig
from .retrieval import formula_divergence, retrieve_stream

SIGMA_MAX = 0.25


@dataclass(frozen=True)
class PipelineParams:
    """Detector, classifier and retrieval knobs (all config-exposed)."""

    omega: int = DEFAULT_OMEGA
    tau: int = DEFAULT_TAU
    margin: float = DEFAULT_MARGIN
    delta_floor: float = DELTA_FLOOR
    gamma: float | None = None
    lam: int = DEFAULT_LAMBDA
    mode: str = "centered"
    gamma_grid: tuple[float, ...] = DEFAULT_GRID
    gamma_max_patterns: int = 400
    retrieval: str = "polar"

    def __post_init__(self):
        if self.omega < 4:
            raise ValueError("omega must be >= 4")
        if self.tau < 2:
            raise ValueError("tau must be >= 2")
        if self.margin < 1:
            raise ValueError("margin must be >= 1")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")
        if self.mode not in ("centered", "paper"):
            raise ValueError(f"unknown similarity mode {self.mode!r}")
        if self.retrieval not in ("polar", "shortcut"):
            raise ValueError(f"unknown retrieval method {self.retrieval!r}")
        object.__setattr__(self, "gamma_grid", tuple(float(g) for g in self.gamma_grid))
        if not self.gamma_grid:
            raise ValueError("empty gamma grid")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_grid"] = list(self.gamma_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline fields: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- data stages

@dataclass
class Simulation:
    cfg: ScenarioConfig
    model: GridModel
    original: MeasurementMatrix  # pre-injection, noise included
    attacked: MeasurementMatrix
    labels: np.ndarray
    plan: AttackPlan
    noisy_columns: np.ndarray


def noise_columns(n_channels: int, seed: int) -> np.ndarray:
    """Seeded choice of ``ceil(n/2)`` columns, independent of the noise level."""
    rng = np.random.default_rng([seed, 0x5EED])
    return np.sort(rng.choice(n_channels, math.ceil(n_channels / 2), replace=False))


def add_column_noise(m: MeasurementMatrix, sigma: float, seed: int):
    """Gaussian noise of std ``sigma * RMS(column)`` on half of the columns.

    Returns ``(matrix, columns)``; ``sigma == 0`` returns ``m`` itself.
    """
    if not 0.0 <= sigma <= SIGMA_MAX:
        raise ValueError(f"sigma must lie in [0, {SIGMA_MAX}], got {sigma}")
    cols = noise_columns(m.n_channels, seed)
    if sigma == 0:
        return m, cols
    rng = np.random.default_rng([seed, 0x401])
    z = m.samples.copy()
    sub = z[:, cols]
    rms = np.sqrt(np.mean(np.abs(sub) ** 2, axis=0))
    # complex Gaussian with total std sigma * rms
    scale = sigma * rms / math.sqrt(2.0)
    sub = sub + scale * (rng.standard_normal(sub.shape) + 1j * rng.standard_normal(sub.shape))
    z[:, cols] = sub
    return m.with_samples(z), cols


def generate_stage(cfg: ScenarioConfig):
    """Clean (plus column noise) measurements: ``(model, matrix, noisy_columns)``."""
    model = build_grid(cfg)
    clean = repeat_cycles(generate_clean(model, cfg.cycle_length), cfg.cycles)
    original, cols = add_column_noise(clean, cfg.noise_sigma, cfg.seed)
    return model, original, cols


def attack_stage(cfg: ScenarioConfig, model: GridModel, original: MeasurementMatrix):
    """Inject the scheduled attack: ``(attacked, labels, plan)``."""
    schedule = cfg.schedule()
    if schedule and min(s for _, s, _ in schedule) < cfg.train_length:
        raise ValueError("attack schedule overlaps the attack-free training prefix")
    targets = model.targets or (0,)
    plan = build_plan(model, cfg.attack_strategy, schedule, targets, cfg.seed, original.n_samples)
    attacked, labels = inject(original, plan, model)
    return attacked, labels, plan


def simulate(cfg: ScenarioConfig) -> Simulation:
    model, original, cols = generate_stage(cfg)
    attacked, labels, plan = attack_stage(cfg, model, original)
    return Simulation(cfg, model, original, attacked, labels, plan, cols)


def episodes(schedule: Sequence[tuple[int, int, int]]) -> list[tuple[int, int]]:
    """Merge back-to-back class intervals into (start, stop) episodes."""
    out: list[list[int]] = []
    for _, s, e in sorted(schedule, key=lambda c: c[1]):
        if out and out[-1][1] == s:
            out[-1][1] = e
        else:
            out.append([s, e])
    return [tuple(x) for x in out]


# ---------------------------------------------------------------- scoring

def _ratio(num: int, den: int):
    return None if den == 0 else num / den


def confusion(pred: np.ndarray, truth: np.ndarray) -> dict:
    pred = np.asarray(pred, bool)
    truth = np.asarray(truth, bool)
    return {
        "tp": int(np.sum(pred & truth)),
        "tn": int(np.sum(~pred & ~truth)),
        "fp": int(np.sum(pred & ~truth)),
        "fn": int(np.sum(~pred & truth)),
    }


def rates(c: dict) -> dict:
    tp, tn, fp, fn = c["tp"], c["tn"], c["fp"], c["fn"]
    return {
        "accuracy": _ratio(tp + tn, tp + tn + fp + fn),
        "precision_safe": _ratio(tn, tn + fn),
        "recall_safe": _ratio(tn, tn + fp),
        "precision_intrusion": _ratio(tp, tp + fp),
        "recall_intrusion": _ratio(tp, tp + fn),
    }


def tolerance_mask(truth: np.ndarray, tol: int) -> np.ndarray:
    """Samples within ``tol`` of a change in the truth track."""
    truth = np.asarray(truth, bool)
    mask = np.zeros(truth.size, bool)
    if tol <= 0:
        return mask
    for e in np.flatnonzero(np.diff(truth.astype(np.int8))) + 1:
        mask[max(0, e - tol):min(truth.size, e + tol)] = True
    return mask


def score_detection(flags, truth, tau: int = DEFAULT_TAU) -> dict:
    """Per-sample scoring with a ``tau``-sample grace period around truth edges."""
    flags = np.asarray(flags, bool)
    truth = np.asarray(truth, bool)
    if flags.shape != truth.shape:
        raise ValueError(f"flag track has {flags.size} samples, truth has {truth.size}")
    pred = np.where(tolerance_mask(truth, tau), truth, flags)
    c = confusion(pred, truth)
    return {**rates(c), "confusion": c}


@dataclass
class RmseTable:
    per_channel: np.ndarray  # (n_intervals, n_channels)
    mean: np.ndarray  # (n_intervals,)

    def to_list(self) -> list[list[float]]:
        return self.per_channel.tolist()


def _interval_index(spec, n: int) -> np.ndarray:
    if isinstance(spec, tuple) and len(spec) == 2 and all(isinstance(v, (int, np.integer)) for v in spec):
        spec = [spec]
    idx = [np.arange(s, e) for s, e in spec]
    idx = np.concatenate(idx) if idx else np.zeros(0, int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("interval outside the stream")
    return idx


def score_rmse(original, retrieved, intervals, channels: Sequence[int] | None = None) -> RmseTable:
    """Complex RMSE per interval and channel, then the channel average.

    Each interval is ``(start, stop)`` or a list of such ranges pooled together.
    """
    a = np.asarray(original.samples if isinstance(original, MeasurementMatrix) else original)
    b = np.asarray(retrieved.samples if isinstance(retrieved, MeasurementMatrix) else retrieved)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    cols = list(range(a.shape[1])) if channels is None else list(channels)
    err = np.abs(a[:, cols] - b[:, cols]) ** 2
    rows = []
    for spec in intervals:
        idx = _interval_index(spec, a.shape[0])
        rows.append(np.sqrt(err[idx].mean(axis=0)) if idx.size else np.full(len(cols), np.nan))
    per = np.array(rows).reshape(len(rows), len(cols))
    mean = per.mean(axis=1) if cols else np.full(len(rows), np.nan)
    return RmseTable(per, mean)


# ---------------------------------------------------------------- patterns

def extract_patterns(traces: Sequence[ChannelTrace], labels: np.ndarray,
                     lookback: int) -> tuple[list[AttackPattern], np.ndarray]:
    """Emitted patterns in (t, channel) order with their ground-truth class.

    A pattern emitted shortly after an attack ends (window lag) inherits the
    class active within the last ``lookback`` samples.
    """
    pats: list[AttackPattern] = []
    for tr in traces:
        for t in np.flatnonzero(tr.emit):
            pats.append(AttackPattern(tr.d[t - tr.tau + 1:t + 1], tr.channel, int(t)))
    pats.sort(key=lambda p: (p.t_detect, p.channel_id))
    truth = np.zeros(len(pats), dtype=np.int64)
    for i, p in enumerate(pats):
        col = labels[max(0, p.t_detect - lookback):p.t_detect + 1, p.channel_id]
        nz = col[col != 0]
        truth[i] = nz[-1] if nz.size else 0
    return pats, truth


def class_metrics(pred: np.ndarray, truth: np.ndarray, classes: Sequence[int]) -> dict:
    """Overall accuracy plus one-vs-rest accuracy, precision and recall per class."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    per = {}
    for c in classes:
        cc = confusion(pred == c, truth == c)
        per[str(c)] = {
            "accuracy": _ratio(cc["tp"] + cc["tn"], truth.size),
            "precision": _ratio(cc["tp"], cc["tp"] + cc["fp"]),
            "recall": _ratio(cc["tp"], cc["tp"] + cc["fn"]),
            "support": int(np.sum(truth == c)),
        }
    return {"accuracy": _ratio(int(np.sum(pred == truth)), truth.size), "per_class": per}


@dataclass
class ClassificationResult:
    gamma: float
    train_labels: list[int]
    test_labels: list[int]
    test_pred: np.ndarray
    test_truth: np.ndarray
    mapping: dict[int, int]
    ensemble: Ensemble
    test_patterns: list[AttackPattern] = field(default_factory=list)

    def unit_predictions(self, units: Sequence[tuple[int, int, int, int]], lookback: int):
        """Majority-vote class per ``(channel, class, start, stop)`` unit.

        A unit collects the test patterns of its channel emitted in
        ``[start, stop + lookback)`` whose ground truth is the unit's class.
        Units without any pattern are predicted 0 (missed).
        """
        by: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for p, pr, tr in zip(self.test_patterns, self.test_pred, self.test_truth):
            by.setdefault((p.channel_id, int(tr)), []).append((p.t_detect, int(pr)))
        pred = []
        for ch, cls, start, stop in units:
            votes = [v for t, v in by.get((ch, cls), ()) if start <= t < stop + lookback]
            if votes:
                vals, counts = np.unique(votes, return_counts=True)
                pred.append(int(vals[np.argmax(counts)]))
            else:
                pred.append(0)
        return np.asarray(pred, dtype=np.int64)

    def metrics(self, units: Sequence[tuple[int, int, int, int]] = (), lookback: int = 0) -> dict:
        classes = sorted(set(self.test_truth.tolist())
                         | {v for v in self.mapping.values() if v > 0}
                         | {u[1] for u in units})
        pat = class_metrics(self.test_pred, self.test_truth, classes)
        out = {
            "gamma": self.gamma,
            "n_train": len(self.train_labels),
            "n_test": len(self.test_labels),
            "n_clusters": self.ensemble.next_label,
            "pattern_accuracy": pat["accuracy"],
            "pattern_per_class": pat["per_class"],
            "n_units": len(units),
        }
        if units:
            truth = np.array([u[1] for u in units], dtype=np.int64)
            unit = class_metrics(self.unit_predictions(units, lookback), truth,
                                 sorted(set(truth.tolist())))
        else:
            unit = {"accuracy": None, "per_class": {}}
        out["accuracy"] = unit["accuracy"]
        out["per_class"] = unit["per_class"]
        return out


def holdout_units(schedule: Sequence[tuple[int, int, int]], support: Sequence[int],
               cut: int) -> list[tuple[int, int, int, int]]:
    """(channel, class, start, stop) for every attacked channel and test interval."""
    return [(int(j), int(c), int(s), int(e))
            for c, s, e in sorted(schedule, key=lambda x: x[1]) if s >= cut
            for j in support]


def classify_patterns(train: Sequence[AttackPattern], train_truth: np.ndarray,
                      test: Sequence[AttackPattern], test_truth: np.ndarray,
                      params: PipelineParams) -> ClassificationResult:
    """Calibrate gamma, train on ``train``, then label ``test`` online.

    Clusters map to the majority ground-truth class of their training members;
    clusters first seen during testing map to -1.
    """
    gamma = params.gamma
    if gamma is None:
        if len(train) >= 2:
            gamma = calibrate_gamma(train, train_truth, params.gamma_grid, params.lam,
                                    params.mode, params.gamma_max_patterns)
        else:
            gamma = max(params.gamma_grid)
    ens = Ensemble(gamma, params.lam, params.mode)
    train_labels = [c.label for c in ens.classify_many(train)]
    mapping: dict[int, int] = {}
    tl = np.asarray(train_labels)
    for lab in np.unique(tl):
        vals, counts = np.unique(np.asarray(train_truth)[tl == lab], return_counts=True)
        mapping[int(lab)] = int(vals[np.argmax(counts)])
    test_labels = [c.label for c in ens.classify_many(test)]
    pred = np.array([mapping.get(l, -1) for l in test_labels], dtype=np.int64)
    return ClassificationResult(gamma, train_labels, test_labels, pred,
                                np.asarray(test_truth, dtype=np.int64), mapping, ens,
                                list(test))


def split_time(schedule: Sequence[tuple[int, int, int]]) -> int | None:
    """Start of the first test episode (second half of the episodes)."""
    eps = episodes(schedule)
    return eps[len(eps) // 2][0] if len(eps) >= 2 else None


def split_patterns(pats: Sequence[AttackPattern], truth: np.ndarray,
                   schedule: Sequence[tuple[int, int, int]]):
    """Train on the first half of the attack episodes, test on the rest."""
    cut = split_time(schedule)
    if cut is not None:
        k = sum(1 for p in pats if p.t_detect < cut)
    else:
        k = len(pats) // 2
    return (list(pats[:k]), truth[:k]), (list(pats[k:]), truth[k:])


# ---------------------------------------------------------------- reports

@dataclass
class MetricsReport:
    detection: dict
    classification: dict
    retrieval: dict
    runtime: float
    config_echo: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = {
            "detection": self.detection,
            "classification": self.classification,
            "retrieval": self.retrieval,
            "config_echo": self.config_echo,
            "diagnostics": self.diagnostics,
        }
        if include_runtime:
            d["runtime"] = self.runtime
        return d

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, indent=2)

    def csv_rows(self) -> list[tuple[str, str, float, object]]:
        """Plot-ready ``(metric, scenario, sigma, value)`` rows."""
        scen = self.config_echo["scenario"]["name"]
        sigma = self.config_echo["scenario"]["noise_sigma"]
        rows = []
        for k in ("accuracy", "precision_safe", "recall_safe", "precision_intrusion",
                  "recall_intrusion"):
            rows.append((f"detection.{k}", scen, sigma, self.detection.get(k)))
        rows.append(("classification.accuracy", scen, sigma, self.classification.get("accuracy")))
        for c, m in self.classification.get("per_class", {}).items():
            for k in ("accuracy", "precision", "recall"):
                rows.append((f"classification.class{c}.{k}", scen, sigma, m[k]))
        for it in self.retrieval.get("intervals", []):
            rows.append((f"retrieval.interval{it['index']}.ratio", scen, sigma, it["ratio"]))
        rows.append(("runtime", scen, sigma, self.runtime))
        return rows


def write_reports_csv(reports: Sequence[MetricsReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "scenario", "sigma", "seed", "value"])
        for r in reports:
            seed = r.config_echo["scenario"]["seed"]
            for metric, scen, sigma, value in r.csv_rows():
                w.writerow([metric, scen, sigma, seed, "n/a" if value is None else repr(value)])
    return path


def _f(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else float(x)


def retrieval_metrics(sim: Simulation, retrieved: MeasurementMatrix, divergence: float) -> dict:
    cfg = sim.cfg
    support = list(sim.plan.support)
    eps = episodes(cfg.schedule())
    L = cfg.interval_length
    n_pos = max((math.ceil((e - s) / L) for s, e in eps), default=0)
    specs = []
    for k in range(n_pos):
        specs.append([(s + k * L, min(e, s + (k + 1) * L)) for s, e in eps if s + k * L < e])
    out = {"intervals": [], "per_channel": [], "formula_divergence": divergence}
    if not support or not eps:
        out["max_channel_ratio"] = None
        return out
    t_att = score_rmse(sim.original, sim.attacked, specs, support)
    t_ret = score_rmse(sim.original, retrieved, specs, support)
    for k in range(n_pos):
        a, r = float(t_att.mean[k]), float(t_ret.mean[k])
        out["intervals"].append({"index": k + 1, "rmse_attacked": a, "rmse_retrieved": r,
                                 "ratio": _f(r / a) if a > 0 else None})
    pooled = [(s, e) for s, e in eps]
    pa = score_rmse(sim.original, sim.attacked, [pooled], support).per_channel[0]
    pr = score_rmse(sim.original, retrieved, [pooled], support).per_channel[0]
    ratios = []
    for j, a, r in zip(support, pa, pr):
        ratio = float(r / a) if a > 0 else None
        ratios.append(ratio)
        out["per_channel"].append({"channel": int(j), "rmse_attacked": float(a),
                                   "rmse_retrieved": float(r), "ratio": ratio})
    valid = [x for x in ratios if x is not None]
    out["max_channel_ratio"] = max(valid) if valid else None
    return out


def detection_metrics(sim: Simulation, traces: Sequence[ChannelTrace], tau: int) -> dict:
    flags = stream_flag(traces)
    truth = (sim.labels != 0).any(axis=1)
    det = score_detection(flags, truth, tau)
    sched = sim.cfg.schedule()
    first = min((s for _, s, _ in sched), default=sim.cfg.n_samples)
    det["false_alarms_clean_prefix"] = int(flags[:first].sum())
    det["per_channel"] = []
    for tr in traces:
        ch_truth = sim.labels[:, tr.channel] != 0
        c = score_detection(tr.flag, ch_truth, tau)
        det["per_channel"].append({"channel": tr.channel, "confusion": c["confusion"],
                                   "recall_intrusion": c["recall_intrusion"]})
    return det


def run_scenario(cfg: ScenarioConfig, params: PipelineParams | None = None,
                 return_artifacts: bool = False):
    """End-to-end run scored against ground truth.

    With ``return_artifacts`` also returns a dict holding the simulation,
    detectors, traces, patterns, classification result and retrieved matrix.
    """
    params = params or PipelineParams()
    t0 = time.perf_counter()
    sim = simulate(cfg)
    train = sim.attacked.slice_rows(0, cfg.train_length)
    states = calibrate_matrix(train, params.omega, params.tau, params.margin, params.delta_floor)
    traces = detect_stream(sim.attacked, states)
    lookback = params.tau + params.omega
    pats, truth = extract_patterns(traces, sim.labels, lookback)
    (tr_p, tr_t), (te_p, te_t) = split_patterns(pats, truth, cfg.schedule())
    cls = classify_patterns(tr_p, tr_t, te_p, te_t, params)
    cut = split_time(cfg.schedule())
    units = holdout_units(cfg.schedule(), sim.plan.support, cut) if cut is not None else []
    retrieved, _ = retrieve_stream(sim.attacked, states, params.retrieval, traces)
    divergence = formula_divergence(sim.attacked, traces)
    runtime = time.perf_counter() - t0

    report = MetricsReport(
        detection=detection_metrics(sim, traces, params.tau),
        classification=cls.metrics(units, lookback),
        retrieval=retrieval_metrics(sim, retrieved, divergence),
        runtime=runtime,
        config_echo={"scenario": cfg.to_dict(), "pipeline": params.to_dict()},
        diagnostics={
            "degenerate_windows": int(sum(t.n_degenerate for t in traces)),
            "n_patterns": len(pats),
            "noisy_columns": sim.noisy_columns.tolist(),
        },
    )
    if not return_artifacts:
        return report
    return report, {"sim": sim, "states": states, "traces": traces, "patterns": pats,
                    "truth": truth, "classification": cls, "retrieved": retrieved}


def noise_sweep(cfg: ScenarioConfig, sigmas: Sequence[float],
                params: PipelineParams | None = None) -> list[MetricsReport]:
    for s in sigmas:
        if not 0.0 <= s <= SIGMA_MAX:
            raise ValueError(f"sigma must lie in [0, {SIGMA_MAX}], got {s}")
    return [run_scenario(cfg.replace(noise_sigma=float(s)), params) for s in sigmas]


# ---------------------------------------------------------------- focused trials

def single_class_config(cfg: ScenarioConfig, cls: int, episodes_n: int = 1,
                        offset: int = 300, length: int = 240) -> ScenarioConfig:
    """One ``cls`` episode per cycle after the training prefix."""
    sched = []
    for k in range(episodes_n):
        s = (cfg.train_cycles + k) * cfg.cycle_length + offset
        sched.append((cls, s, s + length))
    return cfg.replace(attack_classes=tuple(sched), cycles=cfg.train_cycles + episodes_n)


def _single_class_run(cfg: ScenarioConfig, params: PipelineParams):
    sim = simulate(cfg)
    train = sim.attacked.slice_rows(0, cfg.train_length)
    states = calibrate_matrix(train, params.omega, params.tau, params.margin, params.delta_floor)
    return sim, detect_stream(sim.attacked, states)


def detection_latency(cfg: ScenarioConfig, cls: int, params: PipelineParams | None = None) -> int | None:
    """Samples from attack onset to the first stream-level flag (None if missed)."""
    params = params or PipelineParams()
    one = single_class_config(cfg, cls)
    sim, traces = _single_class_run(one, params)
    (_, start, stop), = one.schedule()
    hits = np.flatnonzero(stream_flag(traces)[start:stop])
    return int(hits[0]) if hits.size else None


def onset_patterns(cfg: ScenarioConfig, cls: int, params: PipelineParams | None = None,
                   episodes_n: int = 3) -> list[AttackPattern]:
    """First pattern each attacked channel emits in each ``cls`` episode."""
    params = params or PipelineParams()
    one = single_class_config(cfg, cls, episodes_n)
    sim, traces = _single_class_run(one, params)
    out = []
    for _, start, stop in one.schedule():
        for tr in traces:
            if tr.channel not in sim.plan.support:
                continue
            hits = np.flatnonzero(tr.emit[start:stop])
            if hits.size:
                t = start + int(hits[0])
                out.append(AttackPattern(tr.d[t - tr.tau + 1:t + 1], tr.channel, t))
    return out


def separation_trial(cfg: ScenarioConfig, classes: tuple[int, int] = (1, 4),
                     params: PipelineParams | None = None, episodes_n: int = 3) -> float:
    """Pairwise agreement of ICON labels with truth on two interleaved classes.

    Gamma is calibrated on the first half of the interleaved stream and the
    score is taken on the second half.
    """
    params = params or PipelineParams()
    a = onset_patterns(cfg, classes[0], params, episodes_n)
    b = onset_patterns(cfg, classes[1], params, episodes_n)
    pats, truth = [], []
    for i in range(max(len(a), len(b))):
        for lab, src in ((classes[0], a), (classes[1], b)):
            if i < len(src):
                pats.append(src[i])
                truth.append(lab)
    truth = np.asarray(truth)
    k = len(pats) // 2
    gamma = params.gamma or calibrate_gamma(pats[:k], truth[:k], params.gamma_grid,
                                            params.lam, params.mode, params.gamma_max_patterns)
    ens = Ensemble(gamma, params.lam, params.mode)
    for p in pats[:k]:
        ens.classify(p)
    labels = [ens.classify(p).label for p in pats[k:]]
    return rand_index(labels, truth[k:])
