"""Online ensemble classifier for attack patterns.

Patterns are compared through the antisymmetry of their cross-correlation:
when two sequences have the same shape the correlation is (nearly)
palindromic, so the difference between its two halves is small.  A pattern
joins the nearest class if that difference is at most ``gamma``; otherwise it
founds a new class.  Each class keeps at most ``lam`` recent exemplars and is
never deleted, so classes that go quiet can be recognised when they return.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .phasor import AttackPattern

MODES = ("centered", "paper")
DEFAULT_LAMBDA = 10
DEFAULT_GRID = tuple(np.logspace(-3, 1, 20).tolist())


def _seq(p) -> np.ndarray:
    if isinstance(p, AttackPattern):
        return np.asarray(p.sequence, dtype=float)
    return np.asarray(p, dtype=float).reshape(-1)


def normalize(p) -> tuple[np.ndarray, bool]:
    """Zero-mean, unit-norm copy; the flag is True for a constant pattern."""
    raw = _seq(p)
    x = raw - raw.mean()
    n = math.sqrt(float(x @ x))
    if n <= 1e-15 * max(1.0, float(np.abs(raw).max(initial=0.0))):
        return np.zeros_like(x), True
    return x / n, False


def normalize_many(patterns: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`normalize` for equal-length patterns."""
    raw = np.array([_seq(p) for p in patterns], dtype=float)
    if raw.ndim != 2:
        raise ValueError("patterns must share one length")
    x = raw - raw.mean(axis=1, keepdims=True)
    n = np.sqrt(np.einsum("ij,ij->i", x, x))
    scale = np.maximum(1.0, np.abs(raw).max(axis=1, initial=0.0))
    zero = n <= 1e-15 * scale
    x = np.divide(x, n[:, None], out=np.zeros_like(x), where=~zero[:, None])
    return x, zero


def cross_correlation(alpha, eps, normalized: bool = True) -> np.ndarray:
    """Cross-correlation ordered by lag ``-(N-1) .. N-1``.

    Entry at lag ``m >= 0`` is ``sum_i alpha[i+m] * conj(eps[i])``.
    """
    a, e = _seq(alpha), _seq(eps)
    if a.size != e.size:
        raise ValueError(f"pattern length mismatch: {a.size} vs {e.size}")
    if normalized:
        a, _ = normalize(a)
        e, _ = normalize(e)
    return np.correlate(a, e, mode="full")


def similarity(rho, mode: str = "centered") -> float:
    """Imbalance between the two halves of a correlation vector."""
    rho = np.asarray(rho)
    if rho.size < 3 or rho.size % 2 == 0:
        raise ValueError("correlation vector must have odd length >= 3")
    n = (rho.size + 1) // 2
    # mirrored lags are paired first so a palindrome cancels exactly
    paired = (rho[:n - 1] - rho[n:][::-1]).sum()
    if mode == "centered":
        return float(abs(paired))
    if mode == "paper":
        return float(abs(rho[n - 1] + paired))
    raise ValueError(f"unknown similarity mode {mode!r}")


def pattern_similarity(alpha, eps, mode: str = "centered") -> float:
    """Similarity with the zero-pattern rules applied."""
    a, za = normalize(alpha)
    e, ze = normalize(eps)
    if a.size != e.size:
        raise ValueError(f"pattern length mismatch: {a.size} vs {e.size}")
    if za or ze:
        return 0.0 if za and ze else math.inf
    return similarity(np.correlate(a, e, mode="full"), mode)


def lag_weights(n: int, mode: str = "centered") -> np.ndarray:
    """``W`` with ``upsilon = |alpha @ W @ eps|`` for real normalized patterns.

    The pair ``(j, i)`` contributes to lag ``j - i``; negative lags sit in the
    first half of the correlation vector.
    """
    if mode not in MODES:
        raise ValueError(f"unknown similarity mode {mode!r}")
    j = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    w = np.where(j < i, 1.0, -1.0)
    w[j == i] = 0.0 if mode == "centered" else 1.0
    return w


@dataclass(frozen=True)
class Classification:
    label: int
    upsilon: float
    new_class: bool


class ClassMemory:
    """Bounded FIFO of exemplars for one label (read-only view onto the ensemble)."""

    def __init__(self, ens: "Ensemble", slot: int):
        self._ens = ens
        self._slot = slot

    @property
    def label(self) -> int:
        return self._slot + 1

    @property
    def created_at(self) -> int:
        return self._ens._created[self._slot]

    @property
    def patterns(self) -> list[AttackPattern]:
        """Stored patterns, oldest first."""
        return list(self._ens._raw[self._slot])

    def __len__(self) -> int:
        return len(self._ens._raw[self._slot])


class Ensemble:
    """Ensemble of class memories with labels ``1..next_label``.

    Normalized exemplars live in one preallocated array so a classification
    is a single matrix-vector product plus a min-reduction.
    """

    def __init__(self, gamma: float, lam: int = DEFAULT_LAMBDA, mode: str = "centered"):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        if lam < 1:
            raise ValueError("lam must be >= 1")
        if mode not in MODES:
            raise ValueError(f"unknown similarity mode {mode!r}")
        self.gamma = float(gamma)
        self.lam = int(lam)
        self.mode = mode
        self.n: int | None = None
        self._w: np.ndarray | None = None
        self._vec = np.zeros((0, lam, 0))
        # additive penalties: 0 where a slot may match, inf otherwise
        self._pen = np.zeros((0, lam))  # for non-constant queries
        self._pen0 = np.zeros((0, lam))  # for constant queries
        self._raw: list[list[AttackPattern]] = []
        self._head: list[int] = []
        self._created: list[int] = []
        self._clock = 0

    @property
    def next_label(self) -> int:
        """Number of classes ever created."""
        return len(self._raw)

    @property
    def classes(self) -> list[ClassMemory]:
        return [ClassMemory(self, k) for k in range(len(self._raw))]

    def _grow(self):
        cap = self._vec.shape[0]
        new = max(4, 2 * cap)
        vec = np.zeros((new, self.lam, self.n))
        vec[:cap] = self._vec
        self._vec = vec
        for name in ("_pen", "_pen0"):
            arr = np.full((new, self.lam), np.inf)
            arr[:cap] = getattr(self, name)
            setattr(self, name, arr)

    def _init_length(self, n: int):
        if n < 2:
            raise ValueError("patterns must have length >= 2")
        self.n = n
        self._w = lag_weights(n, self.mode)
        self._vec = np.zeros((0, self.lam, n))

    def class_similarities(self, alpha) -> np.ndarray:
        """Per-class similarity (min over stored exemplars)."""
        return self._similarities(*normalize(alpha))

    def _similarities(self, x: np.ndarray, zero: bool) -> np.ndarray:
        if self.n is None:
            return np.zeros(0)
        if x.size != self.n:
            raise ValueError(f"pattern length {x.size}, ensemble expects {self.n}")
        k = self.next_label
        if zero:
            return self._pen0[:k].min(axis=1)
        return kernels.class_min_similarity(self._vec.reshape(-1, self.n), self._pen, k,
                                            np.ascontiguousarray(x @ self._w))

    def _store(self, slot: int, alpha: AttackPattern, x: np.ndarray, zero: bool):
        raw = self._raw[slot]
        if len(raw) < self.lam:
            pos = len(raw)
            raw.append(alpha)
        else:
            pos = self._head[slot]
            self._head[slot] = (pos + 1) % self.lam
            raw.pop(0)
            raw.append(alpha)
        self._vec[slot, pos] = x
        self._pen[slot, pos] = np.inf if zero else 0.0
        self._pen0[slot, pos] = 0.0 if zero else np.inf

    def _new_class(self, alpha: AttackPattern, x: np.ndarray, zero: bool) -> int:
        slot = len(self._raw)
        if slot >= self._vec.shape[0]:
            self._grow()
        self._raw.append([])
        self._head.append(0)
        self._created.append(self._clock)
        self._store(slot, alpha, x, zero)
        return slot + 1

    def classify(self, alpha) -> Classification:
        """Label ``alpha`` and update the ensemble in place."""
        if not isinstance(alpha, AttackPattern):
            alpha = AttackPattern(_seq(alpha))
        return self._classify(alpha, *normalize(alpha))

    def _classify(self, alpha: AttackPattern, x: np.ndarray, zero: bool) -> Classification:
        if self.n is None:
            self._init_length(x.size)
        ups = self._similarities(x, zero)
        self._clock += 1
        if ups.size == 0:
            return Classification(self._new_class(alpha, x, zero), 0.0, True)
        j = int(np.argmin(ups))  # first minimum: oldest class wins ties
        best = float(ups[j])
        if best > self.gamma:
            return Classification(self._new_class(alpha, x, zero), best, True)
        self._store(j, alpha, x, zero)
        return Classification(j + 1, best, False)

    def classify_many(self, patterns: Sequence) -> list[Classification]:
        """Classify in order; same result as repeated :meth:`classify`."""
        pats = [p if isinstance(p, AttackPattern) else AttackPattern(_seq(p)) for p in patterns]
        if not pats:
            return []
        xs, zs = normalize_many(pats)
        return [self._classify(p, x, bool(z)) for p, x, z in zip(pats, xs, zs)]

    def stored_count(self) -> int:
        return sum(len(r) for r in self._raw)

    def snapshot(self) -> dict:
        return {
            "gamma": self.gamma,
            "lam": self.lam,
            "mode": self.mode,
            "next_label": self.next_label,
            "classes": [
                {"label": k + 1, "created_at": self._created[k],
                 "patterns": [p.to_dict() for p in self._raw[k]]}
                for k in range(self.next_label)
            ],
        }

    @classmethod
    def from_snapshot(cls, d: dict) -> "Ensemble":
        ens = cls(d["gamma"], d["lam"], d["mode"])
        for k, c in enumerate(d["classes"]):
            if c["label"] != k + 1:
                raise ValueError("snapshot labels must be sequential from 1")
            pats = [AttackPattern.from_dict(p) for p in c["patterns"]]
            if not pats:
                raise ValueError(f"class {c['label']} has no patterns")
            for i, p in enumerate(pats):
                x, zero = normalize(p)
                if ens.n is None:
                    ens._init_length(x.size)
                if i == 0:
                    ens._new_class(p, x, zero)
                    ens._created[-1] = int(c.get("created_at", 0))
                else:
                    ens._store(k, p, x, zero)
        return ens

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.snapshot()))
        return path

    @classmethod
    def load(cls, path) -> "Ensemble":
        return cls.from_snapshot(json.loads(Path(path).read_text()))


def classify(ensemble: Ensemble, alpha):
    """Functional form: ``(label, ensemble)``."""
    return ensemble.classify(alpha).label, ensemble


def train(ensemble: Ensemble, patterns: Iterable) -> Ensemble:
    for p in patterns:
        ensemble.classify(p)
    return ensemble


def rand_index(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of pattern pairs on which two partitions agree."""
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError("label arrays differ in length")
    n = p.size
    if n < 2:
        return 1.0
    iu = np.triu_indices(n, 1)
    same_p = (p[:, None] == p[None, :])[iu]
    same_t = (t[:, None] == t[None, :])[iu]
    return float(np.mean(same_p == same_t))


def similarity_matrix(patterns: Sequence, mode: str = "centered") -> np.ndarray:
    xs = [normalize(p) for p in patterns]
    n = len(xs)
    out = np.zeros((n, n))
    if n == 0:
        return out
    x = np.array([v for v, _ in xs])
    z = np.array([zz for _, zz in xs])
    w = lag_weights(x.shape[1], mode)
    out = np.abs(x @ w @ x.T)
    out[z[:, None] ^ z[None, :]] = np.inf
    out[z[:, None] & z[None, :]] = 0.0
    return out


def silhouette(dist: np.ndarray, labels: Sequence[int]) -> float:
    """Mean silhouette with a precomputed dissimilarity; 0 for one or n clusters."""
    lab = np.asarray(labels)
    uniq = np.unique(lab)
    n = lab.size
    if uniq.size < 2 or uniq.size >= n:
        return 0.0
    d = np.where(np.isfinite(dist), dist, np.nanmax(np.where(np.isfinite(dist), dist, np.nan)) * 10 + 1)
    s = np.zeros(n)
    for i in range(n):
        own = lab == lab[i]
        if own.sum() <= 1:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, lab == u].mean() for u in uniq if u != lab[i])
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return float(s.mean())


def calibrate_gamma(patterns: Sequence, truth: Sequence[int] | None = None,
                    grid: Sequence[float] = DEFAULT_GRID, lam: int = DEFAULT_LAMBDA,
                    mode: str = "centered", max_patterns: int = 400) -> float:
    """Pick ``gamma`` from ``grid`` by replaying the patterns through a fresh ensemble.

    The score is pairwise agreement with ``truth`` when given, otherwise the
    silhouette of the induced partition.  Ties go to the optimal candidate
    closest (in log scale) to the geometric midpoint of the optimal set.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty gamma grid")
    if len(patterns) < 2:
        raise ValueError("need at least 2 patterns")
    if len(grid) == 1:
        return grid[0]
    idx = np.arange(len(patterns))
    if len(patterns) > max_patterns:
        idx = np.unique(np.linspace(0, len(patterns) - 1, max_patterns).round().astype(int))
    pats = [patterns[i] for i in idx]
    if truth is not None:
        tr = np.asarray(truth)[idx]
        if np.unique(tr).size == 1:
            return grid[-1]
        dist = None
    else:
        tr = None
        dist = similarity_matrix(pats, mode)
    pats = [p if isinstance(p, AttackPattern) else AttackPattern(_seq(p)) for p in pats]
    xs, zs = normalize_many(pats)
    scores = []
    for g in grid:
        ens = Ensemble(g, lam, mode)
        labels = [ens._classify(p, x, bool(z)).label for p, x, z in zip(pats, xs, zs)]
        scores.append(rand_index(labels, tr) if tr is not None else silhouette(dist, labels))
    scores = np.asarray(scores)
    best = np.flatnonzero(scores >= scores.max() - 1e-12)
    opt = np.asarray(grid)[best]
    mid = 0.5 * (math.log(opt[0]) + math.log(opt[-1]))
    return float(opt[np.argmin(np.abs(np.log(opt) - mid))])


def save_log(rows: Iterable[tuple[int, int, int, float, bool]], path) -> Path:
    """Classification log: ``t,channel,label,upsilon,new_class``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "channel", "label", "upsilon", "new_class"])
        for t, ch, label, ups, new in rows:
            w.writerow([t, ch, label, repr(float(ups)), int(bool(new))])
    return path
