"""Circle-fit center-deviation detector.

Each channel's phasor traces a circle around the origin.  A window-by-window
algebraic circle fit tracks the centre; an unobservable injection translates
the circle, so the distance between the fitted centre and the attack-free
baseline centre grows.  Deviations are queued and exported as attack
patterns when they exceed the calibrated threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .phasor import (
    AttackPattern,
    DeviationQueue,
    MeasurementMatrix,
    SlidingWindow,
    check_finite,
    window_advance,
)

DEFAULT_OMEGA = 10
DEFAULT_TAU = 10
DEFAULT_MARGIN = 1.5
DELTA_FLOOR = 1e-6


class DegenerateFitError(ValueError):
    """Points are collinear or otherwise do not determine a circle."""


@dataclass(frozen=True)
class CircleFit:
    """Algebraic circle ``a(x^2+y^2) + b1 x + b2 y + c = 0`` with unit-norm coefficients."""

    center: tuple[float, float]
    radius: float
    coeffs: tuple[float, float, float, float]
    condition: float

    @property
    def center_complex(self) -> complex:
        return complex(*self.center)


def _as_xy(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points)
    if np.iscomplexobj(arr) or arr.ndim == 1:
        arr = arr.astype(np.complex128).reshape(-1)
        return arr.real.astype(float), arr.imag.astype(float)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0].astype(float), arr[:, 1].astype(float)
    raise ValueError("points must be complex numbers or an (N, 2) array")


def fit_circle(points) -> CircleFit:
    """Least-squares algebraic circle fit.

    Minimises ``||B u||`` subject to ``||u|| = 1`` where the rows of ``B`` are
    ``[x^2 + y^2, x, y, 1]``; ``u`` is the right singular vector of the
    smallest singular value.

    Raises
    ------
    ValueError
        Fewer than three points, or non-finite coordinates.
    DegenerateFitError
        Collinear, coincident or otherwise rank-deficient point sets.
    """
    x, y = _as_xy(points)
    if x.size < 3:
        raise ValueError(f"need at least 3 points, got {x.size}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite coordinates")
    b = np.column_stack([x * x + y * y, x, y, np.ones_like(x)])
    if b.shape[0] < 4:
        b = np.vstack([b, np.zeros((4 - b.shape[0], 4))])
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    if s[0] == 0 or s[2] <= 1e-12 * s[0]:
        raise DegenerateFitError("points do not determine a unique circle")
    u = vt[-1]
    a, b1, b2, c = u
    if abs(a) < 1e-12 * np.linalg.norm(u):
        raise DegenerateFitError("points are collinear (fitted curve is a line)")
    cx, cy = -b1 / (2 * a), -b2 / (2 * a)
    r2 = (b1 * b1 + b2 * b2) / (4 * a * a) - c / a
    if r2 < 0:
        raise DegenerateFitError("fitted conic has no real radius")
    return CircleFit(
        center=(float(cx), float(cy)),
        radius=float(math.sqrt(r2)),
        coeffs=(float(a), float(b1), float(b2), float(c)),
        condition=float(s[3]),
    )


@dataclass(frozen=True)
class Detection:
    """Detection event carrying the exported attack pattern."""

    t: int
    channel: int
    d_t: float
    delta: float
    pattern: AttackPattern

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t,
            "channel": self.channel,
            "d_t": self.d_t,
            "delta": self.delta,
            "pattern": [float(v) for v in self.pattern.sequence],
        })


class DetectorState:
    """Per-channel detector; single writer.

    Use :func:`calibrate` to build one from attack-free training data.
    """

    def __init__(self, baseline_center: complex, delta: float, omega: int = DEFAULT_OMEGA,
                 tau: int = DEFAULT_TAU, channel_id: int = -1):
        if not delta > 0:
            raise ValueError("delta must be positive")
        self.baseline_center = complex(baseline_center)
        self.delta = float(delta)
        self.omega = int(omega)
        self.tau = int(tau)
        self.channel_id = channel_id
        self.window = SlidingWindow(self.omega)
        self.queue = DeviationQueue(self.tau)
        self.flag = False
        self.cooldown = 0
        self.n_degenerate = 0
        self.t = -1
        self.last_d: float | None = None
        self.center: complex | None = None
        self.training_max = 0.0

    def reset(self) -> "DetectorState":
        """Fresh stream state with the same calibration."""
        fresh = DetectorState(self.baseline_center, self.delta, self.omega, self.tau,
                              self.channel_id)
        fresh.training_max = self.training_max
        return fresh

    def step(self, z: complex) -> Detection | None:
        """Consume one sample; return a :class:`Detection` when one is emitted."""
        window_advance(self.window, check_finite(z))
        self.t += 1
        if not self.window.warm:
            return None
        cx, cy, ok = kernels.fit_window(*self.window.arrays())
        if ok:
            self.center = complex(cx, cy)
            d = abs(self.baseline_center - self.center)
        else:
            self.n_degenerate += 1
            self.center = None
            d = self.last_d if self.last_d is not None else 0.0
        self.last_d = d
        self.queue.push(d)
        if self.cooldown > 0:
            self.cooldown -= 1
        self.flag = self.queue.full and d > self.delta
        if self.flag and self.cooldown == 0:
            self.cooldown = self.tau
            pattern = self.queue.export(self.channel_id, self.t)
            return Detection(self.t, self.channel_id, d, self.delta, pattern)
        return None

    def to_dict(self) -> dict:
        return {
            "channel": self.channel_id,
            "baseline_center": [self.baseline_center.real, self.baseline_center.imag],
            "delta": self.delta,
            "omega": self.omega,
            "tau": self.tau,
            "training_max": self.training_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorState":
        st = cls(complex(*d["baseline_center"]), d["delta"], d["omega"], d["tau"],
                 d.get("channel", -1))
        st.training_max = float(d.get("training_max", 0.0))
        return st


def step(state: DetectorState, z: complex):
    """Functional form: ``(state, event_or_None)``."""
    return state, state.step(z)


def calibrate(training, omega: int = DEFAULT_OMEGA, tau: int = DEFAULT_TAU,
              margin: float = DEFAULT_MARGIN, channel_id: int = -1,
              floor: float = DELTA_FLOOR) -> DetectorState:
    """Baseline centre and threshold from an attack-free training stream.

    ``c0`` is the circle fitted to the whole training stream;
    ``delta = max(margin * max_t |c0 - c_t|, floor)`` over its windows.
    """
    z = np.asarray(training, dtype=np.complex128).reshape(-1)
    if margin < 1:
        raise ValueError("margin must be >= 1")
    if z.size < omega + tau:
        raise ValueError(f"training stream has {z.size} samples; need at least omega + tau")
    c0 = fit_circle(z).center_complex
    cx, cy, ok = kernels.sliding_centers(np.ascontiguousarray(z.real),
                                         np.ascontiguousarray(z.imag), omega)
    ok = ok.astype(bool)
    if not ok.any():
        raise DegenerateFitError("no training window admits a circle fit")
    dev = np.hypot(c0.real - cx[ok], c0.imag - cy[ok])
    dmax = float(dev.max())
    state = DetectorState(c0, max(margin * dmax, floor), omega, tau, channel_id)
    state.training_max = dmax
    return state


@dataclass
class ChannelTrace:
    """Per-sample detector output for one channel (batch path)."""

    channel: int
    centers: np.ndarray  # complex, NaN before warm-up / on degenerate windows
    d: np.ndarray
    qmean: np.ndarray
    flag: np.ndarray
    emit: np.ndarray
    n_degenerate: int
    tau: int
    delta: float

    def detections(self) -> list[Detection]:
        out = []
        for t in np.flatnonzero(self.emit):
            seq = self.d[t - self.tau + 1:t + 1]
            out.append(Detection(int(t), self.channel, float(self.d[t]), self.delta,
                                 AttackPattern(seq, self.channel, int(t))))
        return out


def detect_channel(state: DetectorState, column) -> ChannelTrace:
    """Run a calibrated detector over a whole column from a fresh stream state."""
    z = np.asarray(column, dtype=np.complex128).reshape(-1)
    if not np.isfinite(z).all():
        raise ValueError("non-finite sample in column")
    re = np.ascontiguousarray(z.real)
    im = np.ascontiguousarray(z.imag)
    cx, cy, ok = kernels.sliding_centers(re, im, state.omega)
    c0 = state.baseline_center
    d, qm, flag, emit, ndeg = kernels.scan_detector(
        cx, cy, ok, state.omega, state.tau, c0.real, c0.imag, state.delta)
    return ChannelTrace(
        channel=state.channel_id,
        centers=cx + 1j * cy,
        d=d,
        qmean=qm,
        flag=flag.astype(bool),
        emit=emit.astype(bool),
        n_degenerate=int(ndeg),
        tau=state.tau,
        delta=state.delta,
    )


def calibrate_matrix(training: MeasurementMatrix, omega: int = DEFAULT_OMEGA,
                     tau: int = DEFAULT_TAU, margin: float = DEFAULT_MARGIN,
                     floor: float = DELTA_FLOOR) -> list[DetectorState]:
    return [calibrate(training.column(j), omega, tau, margin, channel_id=j, floor=floor)
            for j in range(training.n_channels)]


def detect_stream(m: MeasurementMatrix, states: Sequence[DetectorState]) -> list[ChannelTrace]:
    if len(states) != m.n_channels:
        raise ValueError(f"{len(states)} detectors for {m.n_channels} channels")
    return [detect_channel(st, m.column(j)) for j, st in enumerate(states)]


def stream_flag(traces: Iterable[ChannelTrace]) -> np.ndarray:
    """Stream-level intrusion flag: OR over channels."""
    flags = [tr.flag for tr in traces]
    return np.logical_or.reduce(flags) if flags else np.zeros(0, bool)


def collect_detections(traces: Iterable[ChannelTrace]) -> list[Detection]:
    events = [ev for tr in traces for ev in tr.detections()]
    events.sort(key=lambda e: (e.t, e.channel))
    return events


def save_states(states: Sequence[DetectorState], path) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_dict() for s in states], fh)


def load_states(path) -> list[DetectorState]:
    with open(path) as fh:
        return [DetectorState.from_dict(d) for d in json.load(fh)]
