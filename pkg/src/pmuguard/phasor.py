"""Shared phasor-stream types: measurement matrices, windows, queues, configs.

Streams are complex-valued, one column per PMU channel, indexed by integer
sample number.  Python ``complex`` stands in for a single phasor sample.
"""
from __future__ import annotations

import csv
import json
import math
import re
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_RATE_HZ = 30.0
CYCLE_LENGTH = 600  # 20 s at 30 Hz

_CHANNEL_RE = re.compile(r"^(?P<pmu>[^:]+):(?P<kind>[VI])(?P<idx>\d+)$")


class StreamFormatError(ValueError):
    """A stream file could not be turned into a dense measurement matrix."""


class NonFiniteSampleError(ValueError):
    """A NaN or infinite value was offered to a stream."""


def check_finite(z: complex) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise NonFiniteSampleError(f"non-finite sample {z!r}")
    return z


@dataclass(frozen=True)
class ChannelMeta:
    """Tag of one matrix column."""

    name: str
    pmu_id: str
    kind: str  # "voltage" | "current" | "unknown"

    @classmethod
    def parse(cls, name: str) -> "ChannelMeta":
        m = _CHANNEL_RE.match(name)
        if m is None:
            return cls(name=name, pmu_id=name, kind="unknown")
        kind = "voltage" if m["kind"] == "V" else "current"
        return cls(name=name, pmu_id=m["pmu"], kind=kind)

    @classmethod
    def make(cls, pmu_id: str, kind: str, index: int) -> "ChannelMeta":
        letter = {"voltage": "V", "current": "I"}[kind]
        return cls(name=f"{pmu_id}:{letter}{index}", pmu_id=pmu_id, kind=kind)


@dataclass(frozen=True)
class MeasurementMatrix:
    """Dense n x channels complex matrix (rows are time, columns channels)."""

    samples: np.ndarray
    rate_hz: float = DEFAULT_RATE_HZ
    channels: tuple[ChannelMeta, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {arr.shape}")
        n, k = arr.shape
        if n < 1 or k < 1:
            raise ValueError(f"empty measurement matrix {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteSampleError("measurement matrix contains non-finite values")
        channels = tuple(self.channels)
        if not channels:
            channels = tuple(ChannelMeta.parse(f"ch{j}") for j in range(k))
        if len(channels) != k:
            raise ValueError(f"{len(channels)} channel tags for {k} columns")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "channels", channels)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def column(self, j: int) -> np.ndarray:
        return self.samples[:, j]

    def with_samples(self, samples: np.ndarray) -> "MeasurementMatrix":
        return MeasurementMatrix(samples, self.rate_hz, self.channels)

    def slice_rows(self, start: int, stop: int) -> "MeasurementMatrix":
        return self.with_samples(self.samples[start:stop])

    def equals(self, other: "MeasurementMatrix") -> bool:
        return (
            self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
            and self.channel_names == other.channel_names
        )


class SlidingWindow:
    """Fixed-capacity stride-1 window of phasor samples, newest last."""

    def __init__(self, capacity: int):
        if capacity < 4:
            raise ValueError("window capacity must be >= 4")
        self.capacity = int(capacity)
        self._buf: deque[complex] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._buf)

    @property
    def warm(self) -> bool:
        return len(self._buf) == self.capacity

    @property
    def buffer(self) -> list[complex]:
        return list(self._buf)

    def push(self, z: complex) -> "SlidingWindow":
        self._buf.append(check_finite(z))
        return self

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.fromiter(self._buf, dtype=np.complex128, count=len(self._buf))
        return np.ascontiguousarray(a.real), np.ascontiguousarray(a.imag)


def window_advance(w: SlidingWindow, z: complex) -> SlidingWindow:
    """Append ``z`` to the window, evicting the oldest sample once full."""
    return w.push(z)


@dataclass(frozen=True)
class AttackPattern:
    """Exported deviation history: the full queue at detection time."""

    sequence: np.ndarray
    channel_id: int = -1
    t_detect: int = -1

    def __post_init__(self):
        seq = np.asarray(self.sequence, dtype=float).copy()
        if seq.ndim != 1 or seq.size == 0:
            raise ValueError("pattern must be a non-empty 1-D sequence")
        seq.setflags(write=False)
        object.__setattr__(self, "sequence", seq)

    def __len__(self) -> int:
        return self.sequence.size

    def to_dict(self) -> dict:
        return {
            "t": self.t_detect,
            "channel": self.channel_id,
            "pattern": [float(v) for v in self.sequence],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackPattern":
        return cls(np.asarray(d["pattern"], float), int(d.get("channel", -1)), int(d.get("t", -1)))


class DeviationQueue:
    """FIFO of center deviations with constant capacity tau."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("queue capacity must be positive")
        self.capacity = int(capacity)
        self._q: deque[float] = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._q)

    @property
    def full(self) -> bool:
        return len(self._q) == self.capacity

    @property
    def values(self) -> list[float]:
        return list(self._q)

    def push(self, d: float) -> None:
        d = float(d)
        if not (d >= 0.0) or not math.isfinite(d):
            raise ValueError(f"deviation must be finite and non-negative, got {d}")
        self._q.append(d)

    def mean(self) -> float:
        return sum(self._q) / len(self._q) if self._q else 0.0

    def export(self, channel_id: int = -1, t_detect: int = -1) -> AttackPattern:
        if not self.full:
            raise ValueError("queue not full; a pattern needs exactly tau deviations")
        return AttackPattern(np.array(self._q), channel_id, t_detect)


# ---------------------------------------------------------------- stream I/O

def _fmt(x: float) -> str:
    return format(x, ".17g")


def save_stream(m: MeasurementMatrix, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    names = m.channel_names
    s = m.samples
    with path.open("w", newline="") as fh:
        if fmt == "csv":
            fh.write("t,channel,re,im\n")
            for t in range(s.shape[0]):
                row = s[t]
                fh.writelines(
                    f"{t},{names[j]},{_fmt(row[j].real)},{_fmt(row[j].imag)}\n"
                    for j in range(s.shape[1])
                )
        elif fmt == "jsonl":
            for t in range(s.shape[0]):
                for j in range(s.shape[1]):
                    z = s[t, j]
                    fh.write(json.dumps({"t": t, "channel": names[j],
                                         "re": float(z.real), "im": float(z.imag)}) + "\n")
        else:
            raise ValueError(f"unknown stream format {fmt!r}")
    return path


def _records_csv(path: Path) -> Iterable[tuple[int, tuple]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "channel", "re", "im"]:
            raise StreamFormatError(f"{path}: expected header t,channel,re,im, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise StreamFormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            yield lineno, tuple(row)


def _records_jsonl(path: Path) -> Iterable[tuple[int, tuple]]:
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                yield lineno, (obj["t"], obj["channel"], obj["re"], obj["im"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise StreamFormatError(f"{path}:{lineno}: {exc}") from None


def load_stream(path, fmt: str | None = None, rate_hz: float = DEFAULT_RATE_HZ) -> MeasurementMatrix:
    """Read a long-format stream file into a dense matrix.

    Every (t, channel) cell must be present exactly once; timestamps must
    form a contiguous run of integer sample indices.
    """
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    records = _records_csv(path) if fmt == "csv" else _records_jsonl(path)
    cells: dict[tuple[int, str], complex] = {}
    order: dict[str, None] = {}
    for lineno, (t, ch, re_, im_) in records:
        try:
            if isinstance(t, bool) or (isinstance(t, float) and not t.is_integer()):
                raise ValueError
            ti = int(t)
            z = complex(float(re_), float(im_))
        except (TypeError, ValueError):
            raise StreamFormatError(f"{path}:{lineno}: malformed row {(t, ch, re_, im_)}") from None
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise NonFiniteSampleError(f"{path}:{lineno}: non-finite value")
        ch = str(ch).strip()
        if (ti, ch) in cells:
            raise StreamFormatError(f"{path}:{lineno}: duplicate cell (t={ti}, channel={ch})")
        cells[(ti, ch)] = z
        order.setdefault(ch, None)
    if not cells:
        raise StreamFormatError(f"{path}: no samples")
    names = list(order)
    if all(n.lstrip("-").isdigit() for n in names):
        names.sort(key=int)
    ts = sorted({t for t, _ in cells})
    t0 = ts[0]
    if ts[-1] - t0 + 1 != len(ts):
        raise StreamFormatError(f"{path}: timestamps are not contiguous")
    k = len(names)
    if len(cells) != len(ts) * k:
        counts: dict[int, int] = {}
        for t, _ in cells:
            counts[t] = counts.get(t, 0) + 1
        bad = next(t for t in ts if counts.get(t, 0) != k)
        raise StreamFormatError(
            f"{path}: inconsistent channel count at t={bad} ({counts.get(bad, 0)} of {k})"
        )
    col = {n: j for j, n in enumerate(names)}
    arr = np.empty((len(ts), k), dtype=np.complex128)
    for (t, ch), z in cells.items():
        arr[t - t0, col[ch]] = z
    return MeasurementMatrix(arr, rate_hz, tuple(ChannelMeta.parse(n) for n in names))


# ---------------------------------------------------------------- scenarios

ATTACKED_COUNTS = {
    "scenario1": {"pmus": 3, "total": 16, "voltage": 6, "current": 10},
    "scenario2": {"pmus": 3, "total": 21, "voltage": 5, "current": 16},
    # 7 V + 17 I would be 24; the stated total of 23 is kept.
    "scenario3": {"pmus": 4, "total": 23, "voltage": 7, "current": 16},
    "scenario4": {"pmus": 4, "total": 27, "voltage": 7, "current": 20},
}

STRATEGY_CLASSES = {
    1: (1, 2, 3, 4),
    2: (5, 6, 7, 8),
    3: (5, 1, 6, 2),
    4: (1, 6, 3, 8),
}


@dataclass(frozen=True)
class PmuSpec:
    pmu_id: str
    voltage: int
    current: int
    attacked: bool = False

    @property
    def n_channels(self) -> int:
        return self.voltage + self.current


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to regenerate one scenario run from scratch."""

    name: str = "custom"
    pmus: tuple[PmuSpec, ...] = ()
    attack_strategy: int = 1
    attack_classes: tuple[tuple[int, int, int], ...] | None = None
    cycles: int = 30
    cycle_length: int = CYCLE_LENGTH
    train_cycles: int = 2
    attack_first_cycle: int = 2
    attack_every: int = 2
    interval_length: int = 150
    noise_sigma: float = 0.0
    seed: int = 0
    rate_hz: float = DEFAULT_RATE_HZ
    slip_sample: int | None = 60
    slip_step: float = 0.002
    rotation_hz: tuple[float, float] = (2.0, 3.0)
    extra_buses: int = 0

    def __post_init__(self):
        if not self.pmus:
            raise ValueError("scenario needs at least one PMU")
        if self.attack_strategy not in STRATEGY_CLASSES:
            raise ValueError(f"attack_strategy must be 1..4, got {self.attack_strategy}")
        if not 0.0 <= self.noise_sigma <= 0.25:
            raise ValueError(f"noise_sigma must lie in [0, 0.25], got {self.noise_sigma}")
        if self.cycles < 1 or self.cycle_length < 1:
            raise ValueError("cycles and cycle_length must be positive")
        if not 0 <= self.train_cycles < self.cycles:
            raise ValueError("train_cycles must leave at least one cycle to test")
        if self.attack_classes is not None:
            for cls, start, stop in self.attack_classes:
                if not 1 <= cls <= 8:
                    raise ValueError(f"unknown attack class {cls}")
                if not 0 <= start < stop:
                    raise ValueError(f"bad interval [{start}, {stop})")

    @property
    def n_channels(self) -> int:
        return sum(p.n_channels for p in self.pmus)

    @property
    def n_samples(self) -> int:
        return self.cycles * self.cycle_length

    @property
    def train_length(self) -> int:
        return self.train_cycles * self.cycle_length

    def attacked_summary(self) -> dict:
        att = [p for p in self.pmus if p.attacked]
        v = sum(p.voltage for p in att)
        i = sum(p.current for p in att)
        return {"pmus": len(att), "total": v + i, "voltage": v, "current": i}

    def schedule(self) -> tuple[tuple[int, int, int], ...]:
        """Explicit (class, start, stop) intervals, stop exclusive."""
        if self.attack_classes is not None:
            return tuple(tuple(map(int, x)) for x in self.attack_classes)
        classes = STRATEGY_CLASSES[self.attack_strategy]
        out = []
        for c in range(self.attack_first_cycle, self.cycles, self.attack_every):
            base = c * self.cycle_length
            for k, cls in enumerate(classes):
                start = base + k * self.interval_length
                out.append((cls, start, start + self.interval_length))
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pmus": [
                {"pmu_id": p.pmu_id, "voltage": p.voltage, "current": p.current,
                 "attacked": p.attacked}
                for p in self.pmus
            ],
            "attack_strategy": self.attack_strategy,
            "attack_classes": [list(x) for x in self.schedule()],
            "cycles": self.cycles,
            "cycle_length": self.cycle_length,
            "train_cycles": self.train_cycles,
            "attack_first_cycle": self.attack_first_cycle,
            "attack_every": self.attack_every,
            "interval_length": self.interval_length,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "rate_hz": self.rate_hz,
            "slip_sample": self.slip_sample,
            "slip_step": self.slip_step,
            "rotation_hz": list(self.rotation_hz),
            "extra_buses": self.extra_buses,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        if "pmus" in d:
            d["pmus"] = tuple(PmuSpec(**p) if isinstance(p, dict) else p for p in d["pmus"])
        if d.get("attack_classes") is not None:
            d["attack_classes"] = tuple(tuple(int(v) for v in x) for x in d["attack_classes"])
        if "rotation_hz" in d:
            d["rotation_hz"] = tuple(float(v) for v in d["rotation_hz"])
        return cls(**d)

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


PRESET_DIR = Path(__file__).with_name("presets")


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_preset(name: str, **overrides) -> ScenarioConfig:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        raise ValueError(f"unknown preset {name!r}; available: {preset_names()}")
    cfg = ScenarioConfig.from_dict(json.loads(path.read_text()))
    if name in ATTACKED_COUNTS and cfg.attacked_summary() != ATTACKED_COUNTS[name]:
        raise ValueError(f"preset {name} does not reproduce its attacked-channel counts")
    return cfg.replace(**overrides) if overrides else cfg


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads(Path(path).read_text()))


def channel_tags(pmus: Sequence[PmuSpec]) -> tuple[ChannelMeta, ...]:
    tags = []
    for p in pmus:
        tags += [ChannelMeta.make(p.pmu_id, "voltage", i) for i in range(p.voltage)]
        tags += [ChannelMeta.make(p.pmu_id, "current", i) for i in range(p.current)]
    return tuple(tags)
