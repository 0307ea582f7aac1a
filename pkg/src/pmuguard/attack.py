"""Unobservable false-data-injection attacks: ``M_bar = M + C H^T``.

The corruption matrix ``C`` is non-zero only on targeted bus columns.  Its
magnitude ramps by the per-sample increment of the active attack class and
keeps accumulating across back-to-back class intervals (one attack episode);
it returns to zero between episodes.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import GridModel
from .phasor import STRATEGY_CLASSES, MeasurementMatrix

# Error injected per sample (1/30 s) for each class; 5-8 are deductive.
CLASS_INCREMENT = {1: 1e-4, 2: 5e-4, 3: 1e-3, 4: 5e-3, 5: 1e-4, 6: 5e-4, 7: 1e-3, 8: 5e-3}


def class_sign(cls: int) -> float:
    return 1.0 if cls <= 4 else -1.0


def class_rate(cls: int) -> float:
    """Signed per-sample increment of an attack class."""
    if cls not in CLASS_INCREMENT:
        raise ValueError(f"unknown attack class {cls}")
    return class_sign(cls) * CLASS_INCREMENT[cls]


@dataclass(frozen=True, eq=False)
class AttackPlan:
    """Time-indexed corruption schedule.

    ``C_t = magnitude[t] * target_phase`` where ``target_phase`` holds a unit
    complex phase on every targeted bus and zero elsewhere.
    """

    n_samples: int
    strategy: int
    classes: tuple[tuple[int, int, int], ...]
    targets: tuple[int, ...]
    target_phase: np.ndarray
    support: tuple[int, ...]
    seed: int | None = None

    @property
    def magnitude(self) -> np.ndarray:
        return ramp_magnitude(self.classes, self.n_samples)

    @property
    def class_track(self) -> np.ndarray:
        track = np.zeros(self.n_samples, dtype=np.int64)
        for cls, start, stop in self.classes:
            track[start:stop] = cls
        return track

    def c_matrix(self) -> np.ndarray:
        return self.magnitude[:, None] * self.target_phase[None, :]

    def attack_matrix(self, model: GridModel) -> np.ndarray:
        """``D = C H^T`` (n_samples x n_meas)."""
        return self.c_matrix() @ model.h.T

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "strategy": self.strategy,
            "classes": [list(c) for c in self.classes],
            "targets": list(self.targets),
            "target_phase": {"re": self.target_phase.real.tolist(),
                             "im": self.target_phase.imag.tolist()},
            "support": list(self.support),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackPlan":
        phase = np.asarray(d["target_phase"]["re"]) + 1j * np.asarray(d["target_phase"]["im"])
        return cls(
            n_samples=int(d["n_samples"]),
            strategy=int(d["strategy"]),
            classes=tuple(tuple(int(v) for v in c) for c in d["classes"]),
            targets=tuple(int(t) for t in d["targets"]),
            target_phase=phase,
            support=tuple(int(j) for j in d["support"]),
            seed=d.get("seed"),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "AttackPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_schedule(classes: Sequence[tuple[int, int, int]], n_samples: int):
    ordered = sorted((int(s), int(e), int(c)) for c, s, e in classes)
    prev_end = -1
    for start, stop, cls in ordered:
        if cls not in CLASS_INCREMENT:
            raise ValueError(f"unknown attack class {cls}")
        if not 0 <= start < stop:
            raise ValueError(f"bad class interval [{start}, {stop})")
        if stop > n_samples:
            raise ValueError(f"class interval [{start}, {stop}) exceeds stream length {n_samples}")
        if start < prev_end:
            raise ValueError(f"overlapping class intervals near sample {start}")
        prev_end = stop
    return tuple((c, s, e) for s, e, c in ordered)


def ramp_magnitude(classes: Sequence[tuple[int, int, int]], n_samples: int) -> np.ndarray:
    """Signed cumulative injected magnitude per sample."""
    inc = np.zeros(n_samples)
    episode_start = np.zeros(n_samples, dtype=bool)
    prev_end = None
    for cls, start, stop in sorted(classes, key=lambda c: c[1]):
        inc[start:stop] = class_rate(cls)
        if prev_end != start:
            episode_start[start] = True
        prev_end = stop
    mag = np.zeros(n_samples)
    starts = np.flatnonzero(episode_start)
    active = inc != 0
    for k, s in enumerate(starts):
        e = starts[k + 1] if k + 1 < len(starts) else n_samples
        seg = np.cumsum(inc[s:e])
        mag[s:e] = np.where(active[s:e], seg, 0.0)
    return mag


def build_plan(
    model: GridModel,
    strategy: int,
    classes: Sequence[tuple[int, int, int]],
    targets: Sequence[int],
    seed: int | None = None,
    n_samples: int | None = None,
) -> AttackPlan:
    """Attack plan on ``targets`` (bus indices) following a class schedule.

    ``classes`` holds (class_id, start, stop) with ``stop`` exclusive.
    """
    if strategy not in STRATEGY_CLASSES:
        raise ValueError(f"strategy must be 1..4, got {strategy}")
    targets = tuple(sorted({int(t) for t in targets}))
    if not targets:
        raise ValueError("attack needs at least one targeted bus")
    if targets[0] < 0 or targets[-1] >= model.n_states:
        raise ValueError(f"target bus out of range 0..{model.n_states - 1}")
    if n_samples is None:
        n_samples = max((stop for _, _, stop in classes), default=1)
    classes = _check_schedule(classes, n_samples)
    rng = np.random.default_rng([0 if seed is None else seed, 0xFD1])
    phase = np.zeros(model.n_states, dtype=np.complex128)
    phase[list(targets)] = np.exp(1j * rng.uniform(0, 2 * np.pi, len(targets)))
    support = tuple(int(j) for j in np.flatnonzero(np.any(model.h[:, list(targets)] != 0, axis=1)))
    return AttackPlan(
        n_samples=int(n_samples),
        strategy=strategy,
        classes=classes,
        targets=targets,
        target_phase=phase,
        support=support,
        seed=seed,
    )


def inject(m: MeasurementMatrix, plan: AttackPlan, model: GridModel):
    """Return ``(M + C H^T, labels)``; labels hold the class id per cell, 0 if clean."""
    if m.n_channels != model.n_meas:
        raise ValueError(f"matrix has {m.n_channels} channels, model has {model.n_meas}")
    if m.n_samples != plan.n_samples:
        raise ValueError(f"matrix has {m.n_samples} rows, plan covers {plan.n_samples}")
    if plan.target_phase.shape[0] != model.n_states:
        raise ValueError("plan and model disagree on the number of states")
    d = plan.attack_matrix(model)
    labels = np.zeros((m.n_samples, m.n_channels), dtype=np.int64)
    if plan.support:
        labels[:, list(plan.support)] = plan.class_track[:, None]
    return m.with_samples(m.samples + d), labels


def save_labels(labels: np.ndarray, path, channel_names: Sequence[str] | None = None) -> Path:
    path = Path(path)
    n, k = labels.shape
    names = list(channel_names) if channel_names is not None else [str(j) for j in range(k)]
    with path.open("w", newline="") as fh:
        fh.write("t,channel,class\n")
        for t in range(n):
            row = labels[t]
            fh.writelines(f"{t},{names[j]},{int(row[j])}\n" for j in range(k))
    return path


def load_labels(path, channel_names: Sequence[str] | None = None) -> np.ndarray:
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["t"]), rec["channel"], int(rec["class"])))
    names = list(channel_names) if channel_names is not None else list(dict.fromkeys(r[1] for r in rows))
    col = {n: j for j, n in enumerate(names)}
    n = max(r[0] for r in rows) + 1
    out = np.zeros((n, len(names)), dtype=np.int64)
    for t, ch, cls in rows:
        out[t, col[ch]] = cls
    return out
