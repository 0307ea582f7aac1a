"""Synthetic PMU measurement generator and the residual bad-data detector.

Measurements follow the linear model ``m_t = H s_t + noise``.  Each channel's
phasor additionally rotates at its own rate so a sliding window sweeps an arc
of a circle centred on the origin of the complex plane.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .phasor import (
    DEFAULT_RATE_HZ,
    ChannelMeta,
    MeasurementMatrix,
    ScenarioConfig,
    channel_tags,
)


class RankDeficientError(ValueError):
    """The measurement Jacobian does not have full column rank."""


@dataclass(frozen=True, eq=False)
class GridModel:
    """Measurement Jacobian, operating state and waveform parameters.

    Attributes
    ----------
    h : (n_meas, p) real array
        Measurement Jacobian; must have full column rank.
    base_state : (p,) complex array
        Bus voltages before the generator slip.
    rotation_hz : (n_meas,) array
        Per-channel phasor rotation rate.
    slip_sample, slip_step : int or None, float
        From ``slip_sample`` on, every bus magnitude is scaled by
        ``1 + slip_step``.
    """

    h: np.ndarray
    base_state: np.ndarray
    rotation_hz: np.ndarray
    noise_std: float = 0.0
    rate_hz: float = DEFAULT_RATE_HZ
    slip_sample: int | None = None
    slip_step: float = 0.0
    channels: tuple[ChannelMeta, ...] = ()
    seed: int | None = None
    targets: tuple[int, ...] = field(default=())

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2:
            raise ValueError("H must be 2-D")
        n_meas, p = h.shape
        if n_meas < p:
            raise RankDeficientError(f"H is {n_meas} x {p}; need n_meas >= p")
        if np.linalg.matrix_rank(h) < p:
            raise RankDeficientError("H does not have full column rank")
        state = np.array(self.base_state, dtype=np.complex128).reshape(-1)
        if state.size != p:
            raise ValueError(f"state has {state.size} entries, H has {p} columns")
        rot = np.broadcast_to(np.asarray(self.rotation_hz, dtype=float), (n_meas,)).copy()
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        channels = tuple(self.channels) or tuple(
            ChannelMeta.parse(f"ch{j}") for j in range(n_meas)
        )
        if len(channels) != n_meas:
            raise ValueError("one channel tag per measurement row required")
        for name, arr in (("h", h), ("base_state", state), ("rotation_hz", rot)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))

    @property
    def n_meas(self) -> int:
        return self.h.shape[0]

    @property
    def n_states(self) -> int:
        return self.h.shape[1]

    @cached_property
    def pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.h)

    @cached_property
    def projector(self) -> np.ndarray:
        """``I - H H^+``: maps a measurement row onto its residual."""
        return np.eye(self.n_meas) - self.h @ self.pinv

    def state_trajectory(self, n_samples: int) -> np.ndarray:
        """(n_samples, p) complex bus voltages, slip step included."""
        scale = np.ones(n_samples)
        if self.slip_sample is not None and self.slip_step:
            scale[self.slip_sample:] += self.slip_step
        return scale[:, None] * self.base_state[None, :]

    def to_dict(self) -> dict:
        return {
            "n_meas": self.n_meas,
            "n_states": self.n_states,
            "h": self.h.reshape(-1).tolist(),
            "base_state": {"re": self.base_state.real.tolist(),
                           "im": self.base_state.imag.tolist()},
            "rotation_hz": self.rotation_hz.tolist(),
            "noise_std": self.noise_std,
            "rate_hz": self.rate_hz,
            "slip_sample": self.slip_sample,
            "slip_step": self.slip_step,
            "channels": [c.name for c in self.channels],
            "seed": self.seed,
            "targets": list(self.targets),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridModel":
        h = np.asarray(d["h"], dtype=float).reshape(d["n_meas"], d["n_states"])
        state = np.asarray(d["base_state"]["re"]) + 1j * np.asarray(d["base_state"]["im"])
        return cls(
            h=h,
            base_state=state,
            rotation_hz=np.asarray(d["rotation_hz"], dtype=float),
            noise_std=float(d.get("noise_std", 0.0)),
            rate_hz=float(d.get("rate_hz", DEFAULT_RATE_HZ)),
            slip_sample=d.get("slip_sample"),
            slip_step=float(d.get("slip_step", 0.0)),
            channels=tuple(ChannelMeta.parse(n) for n in d.get("channels", [])),
            seed=d.get("seed"),
            targets=tuple(d.get("targets", ())),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path) -> "GridModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ResidualReport:
    residual: np.ndarray
    norm: float
    flagged: bool


def build_grid(cfg: ScenarioConfig, noise_std: float = 0.0) -> GridModel:
    """Block-structured Jacobian for a scenario's PMU layout.

    One bus per PMU (plus ``cfg.extra_buses`` unmonitored ones).  A channel
    reads its own PMU's bus; current channels also read a neighbouring bus of
    the same group.  Attacked and unattacked PMUs form separate groups, so the
    columns of the targeted buses are zero outside the attacked channels.
    """
    rng = np.random.default_rng([cfg.seed, 0x6772])
    pmus = cfg.pmus
    n_pmu = len(pmus)
    p = n_pmu + cfg.extra_buses
    attacked = [k for k, pm in enumerate(pmus) if pm.attacked]
    safe = [k for k, pm in enumerate(pmus) if not pm.attacked]
    extra = list(range(n_pmu, p))

    def neighbour(k: int) -> int | None:
        group = attacked if pmus[k].attacked else safe + extra
        if len(group) < 2:
            return None
        i = group.index(k)
        return group[(i + 1) % len(group)]

    rows = []
    for k, pm in enumerate(pmus):
        for _ in range(pm.voltage):
            row = np.zeros(p)
            row[k] = rng.uniform(0.8, 1.25)
            rows.append(row)
        nb = neighbour(k)
        for c in range(pm.current):
            row = np.zeros(p)
            row[k] = rng.uniform(0.8, 1.25)
            if nb is not None:
                row[nb] = -rng.uniform(0.1, 0.3) * row[k]
            if extra and not pm.attacked:
                row[extra[c % len(extra)]] = rng.uniform(0.1, 0.3)
            rows.append(row)
    h = np.array(rows)
    mags = rng.uniform(0.98, 1.02, p)
    angles = rng.uniform(-0.3, 0.3, p)
    lo, hi = cfg.rotation_hz
    rotation = rng.uniform(lo, hi, h.shape[0])
    return GridModel(
        h=h,
        base_state=mags * np.exp(1j * angles),
        rotation_hz=rotation,
        noise_std=noise_std,
        rate_hz=cfg.rate_hz,
        slip_sample=cfg.slip_sample,
        slip_step=cfg.slip_step,
        channels=channel_tags(pmus),
        seed=cfg.seed,
        targets=tuple(attacked),
    )


def random_model(n_meas: int, p: int, seed: int, noise_std: float = 0.0) -> GridModel:
    """Dense standard-normal Jacobian (no topology), mostly for tests."""
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n_meas, p))
    state = rng.uniform(0.95, 1.05, p) * np.exp(1j * rng.uniform(-0.3, 0.3, p))
    return GridModel(h=h, base_state=state, rotation_hz=rng.uniform(2.0, 3.0, n_meas),
                     noise_std=noise_std, seed=seed)


def generate_clean(model: GridModel, n_samples: int, seed: int | None = None) -> MeasurementMatrix:
    """Rotating-phasor measurements ``(H s_t)_j * exp(i 2 pi f_j t / rate)`` plus noise."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    states = model.state_trajectory(n_samples)
    base = states @ model.h.T
    t = np.arange(n_samples)[:, None]
    phase = np.exp(2j * np.pi * model.rotation_hz[None, :] * t / model.rate_hz)
    m = base * phase
    if model.noise_std > 0:
        rng = np.random.default_rng(seed)
        m = m + model.noise_std * (rng.standard_normal(m.shape) + 1j * rng.standard_normal(m.shape))
    return MeasurementMatrix(m, model.rate_hz, model.channels)


def repeat_cycles(m: MeasurementMatrix, cycles: int) -> MeasurementMatrix:
    """Tile the rows ``cycles`` times; phase continuity is not restored."""
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    if cycles == 1:
        return m
    return m.with_samples(np.tile(m.samples, (cycles, 1)))


def _rows(model: GridModel, m_t) -> np.ndarray:
    m_t = np.asarray(m_t)
    if m_t.shape[-1] != model.n_meas:
        raise ValueError(f"measurement has {m_t.shape[-1]} entries, H has {model.n_meas} rows")
    return m_t


def estimate_state(model: GridModel, m_t) -> np.ndarray:
    """Least-squares state ``H^+ m_t``; accepts one row or a stack of rows."""
    m_t = _rows(model, m_t)
    return m_t @ model.pinv.T


def residual_bdd(model: GridModel, m_t, threshold: float) -> ResidualReport:
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    m_t = _rows(model, m_t)
    if m_t.ndim != 1:
        raise ValueError("residual_bdd takes a single measurement row")
    r = m_t - model.h @ (model.pinv @ m_t)
    norm = float(np.linalg.norm(r))
    return ResidualReport(residual=r, norm=norm, flagged=norm > threshold)
