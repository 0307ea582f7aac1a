"""Recover clean phasors by subtracting the estimated injected offset.

While a channel is flagged, the injected offset is estimated as the mean of
the deviation queue, pointed from the origin toward the current fitted
centre.  Outside flagged regions samples pass through unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .origin import ChannelTrace, DetectorState, detect_channel
from .phasor import MeasurementMatrix, save_stream

METHODS = ("polar", "shortcut")
VERTICAL_EPS = 1e-12


@dataclass(frozen=True)
class RetrievalContext:
    mean_dev: float
    center: complex
    active: bool = True

    def __post_init__(self):
        if not self.mean_dev >= 0:
            raise ValueError("mean_dev must be non-negative")

    @property
    def vertical(self) -> bool:
        return abs(self.center.imag) < VERTICAL_EPS

    @property
    def theta(self) -> float | None:
        """``x / y`` of the centre, or None when the centre lies on the real axis."""
        return None if self.vertical else self.center.real / self.center.imag


def offset(ctx: RetrievalContext, method: str = "polar") -> complex | None:
    """Estimated injected offset; None when the direction is undefined."""
    if method not in METHODS:
        raise ValueError(f"unknown retrieval method {method!r}")
    x, y = ctx.center.real, ctx.center.imag
    if ctx.vertical:
        if x == 0.0:
            return None
        return complex(math.copysign(ctx.mean_dev, x), 0.0)
    if method == "polar":
        phi = math.atan2(y, x)
        return ctx.mean_dev * complex(math.cos(phi), math.sin(phi))
    th = x / y
    return ctx.mean_dev / math.sqrt(1 + th * th) * complex(1.0, th * th)


def retrieve_sample(z: complex, ctx: RetrievalContext, method: str = "polar",
                    stats: dict | None = None) -> complex:
    """Retrieved sample; pass-through when inactive or the direction is undefined."""
    if not ctx.active:
        return z
    off = offset(ctx, method)
    if off is None:
        if stats is not None:
            stats["undefined_direction"] = stats.get("undefined_direction", 0) + 1
        return z
    return z - off


def _unit_offsets(centers: np.ndarray, method: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample unit offset and a mask of undefined directions."""
    x, y = centers.real, centers.imag
    vert = np.abs(y) < VERTICAL_EPS
    with np.errstate(invalid="ignore", divide="ignore"):
        if method == "polar":
            phi = np.arctan2(y, x)
            u = np.cos(phi) + 1j * np.sin(phi)
        elif method == "shortcut":
            th = x / y
            u = (1 + 1j * th * th) / np.sqrt(1 + th * th)
        else:
            raise ValueError(f"unknown retrieval method {method!r}")
    u = np.where(vert, np.sign(x) + 0j, u)
    undefined = vert & (x == 0)
    return u, undefined


def retrieve_trace(column, trace: ChannelTrace, method: str = "polar") -> tuple[np.ndarray, int]:
    """Vectorized retrieval for one channel from its detector trace.

    Returns the retrieved column and the number of undefined-direction samples.
    """
    z = np.asarray(column, dtype=np.complex128)
    active = trace.flag & np.isfinite(trace.centers)
    out = z.copy()
    if not active.any():
        return out, 0
    u, undefined = _unit_offsets(trace.centers[active], method)
    sub = np.where(undefined, 0, trace.qmean[active] * u)
    out[active] = z[active] - sub
    return out, int(undefined.sum())


def retrieve_stream(m: MeasurementMatrix, states: Sequence[DetectorState],
                    method: str = "polar", traces: Sequence[ChannelTrace] | None = None):
    """Detect and retrieve every channel; returns ``(retrieved, traces)``.

    Each output sample uses only inputs up to its own index.
    """
    if len(states) != m.n_channels:
        raise ValueError(f"{len(states)} detectors for {m.n_channels} channels")
    if traces is None:
        traces = [detect_channel(st, m.column(j)) for j, st in enumerate(states)]
    cols = [retrieve_trace(m.column(j), tr, method)[0] for j, tr in enumerate(traces)]
    return m.with_samples(np.column_stack(cols)), list(traces)


def retrieve_online(column, state: DetectorState, method: str = "polar",
                    stats: dict | None = None) -> np.ndarray:
    """Sample-by-sample retrieval driven by the streaming detector."""
    st = state.reset()
    out = np.empty(len(column), dtype=np.complex128)
    for t, z in enumerate(column):
        st.step(z)
        active = st.flag and st.center is not None
        ctx = RetrievalContext(st.queue.mean(), st.center if active else 0j, active)
        out[t] = retrieve_sample(complex(z), ctx, method, stats)
    return out


def formula_divergence(m: MeasurementMatrix, traces: Sequence[ChannelTrace]) -> float:
    """Largest per-sample gap between the polar and shortcut retrievals."""
    worst = 0.0
    for j, tr in enumerate(traces):
        a, _ = retrieve_trace(m.column(j), tr, "polar")
        b, _ = retrieve_trace(m.column(j), tr, "shortcut")
        worst = max(worst, float(np.max(np.abs(a - b), initial=0.0)))
    return worst


def retrieved_path(input_path) -> Path:
    p = Path(input_path)
    stem = p.name[:-len(p.suffix)] if p.suffix else p.name
    return p.with_name(stem + ".retrieved.csv")


def save_retrieved(m: MeasurementMatrix, input_path) -> Path:
    return save_stream(m, retrieved_path(input_path), "csv")
