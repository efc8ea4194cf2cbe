"""Realizations of the Poisson random measure on a space-time window."""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import WindowTooSmall
from .levy_measure import LevyMeasureSpec, sample_jump

# slack for cone-containment tests against window edges
EDGE_TOL = 1e-12


def stream_key(name: str) -> int:
    """Stable 32-bit key for an experiment name (used in seed lineage)."""
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator for ``seed`` = int or ``(master, key, ...)``.

    Keys become the SeedSequence spawn key, so the stream of replicate ``i``
    does not depend on which other replicates were drawn, or in what order.
    """
    if isinstance(seed, (tuple, list)):
        master, *keys = seed
        ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SpaceTimeWindow:
    t_max: float
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.t_max < 0:
            raise ValueError("t_max must be >= 0")
        if not self.x_min < self.x_max:
            raise ValueError("need x_min < x_max")

    @property
    def area(self) -> float:
        return self.t_max * (self.x_max - self.x_min)

    def covers_cone(self, t, x) -> bool:
        """True if the backward light cone of every ``(t, x)`` lies inside."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        ok = (
            (t <= self.t_max + EDGE_TOL)
            & (x - np.maximum(t, 0) >= self.x_min - EDGE_TOL)
            & (x + np.maximum(t, 0) <= self.x_max + EDGE_TOL)
        )
        return bool(np.all(ok))

    def require_cone(self, t, x) -> None:
        if not self.covers_cone(t, x):
            t_arr, x_arr = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
            bad = [
                (float(a), float(b))
                for a, b in zip(t_arr.ravel(), x_arr.ravel())
                if not self.covers_cone(a, b)
            ]
            raise WindowTooSmall(f"backward cone of (t, x) = {bad[0]} leaves window {self}")

    def contains(self, s, y) -> bool:
        return bool(0.0 <= s <= self.t_max and self.x_min <= y <= self.x_max)


def required_window(t: float, R: float, pad: float = 0.0) -> SpaceTimeWindow:
    """Smallest window whose noise determines the spatial integral over [-R, R] at time t."""
    if not t > 0 or not R > 0:
        raise ValueError("t and R must be positive")
    if pad < 0:
        raise ValueError("pad must be >= 0")
    half = R + t + pad
    return SpaceTimeWindow(float(t), -half, half)


class JumpPoint(NamedTuple):
    s: float
    y: float
    z: float


@dataclass(frozen=True)
class JumpSkeleton:
    """Jump points ``(s, y, z)`` sorted by time, ties kept in insertion order."""

    window: SpaceTimeWindow
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    measure_id: str = ""
    seed: object = None

    def __post_init__(self):
        for name in ("s", "y", "z"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.s.shape == self.y.shape == self.z.shape and self.s.ndim == 1):
            raise ValueError("s, y, z must be 1-D arrays of equal length")
        if self.s.size > 1 and np.any(np.diff(self.s) < 0):
            raise ValueError("jump times must be sorted")

    @classmethod
    def from_points(cls, window, points, measure_id="", seed=None) -> "JumpSkeleton":
        pts = [tuple(map(float, p)) for p in points]
        order = sorted(range(len(pts)), key=lambda i: pts[i][0])  # stable
        arr = np.array([pts[i] for i in order], dtype=float).reshape(-1, 3)
        return cls(window, arr[:, 0], arr[:, 1], arr[:, 2], measure_id, seed)

    def __len__(self) -> int:
        return self.s.size

    def __iter__(self) -> Iterator[JumpPoint]:
        for row in zip(self.s.tolist(), self.y.tolist(), self.z.tolist()):
            yield JumpPoint(*row)

    @property
    def points(self) -> list[JumpPoint]:
        return list(self)

    def insert(self, point) -> tuple["JumpSkeleton", int]:
        """Copy with one extra atom, placed after any jumps at the same time."""
        s, y, z = map(float, point)
        if not 0.0 <= s <= self.window.t_max:
            raise WindowTooSmall(f"inserted time {s} outside [0, {self.window.t_max}]")
        k = int(np.searchsorted(self.s, s, side="right"))
        new = JumpSkeleton(
            self.window,
            np.insert(self.s, k, s),
            np.insert(self.y, k, y),
            np.insert(self.z, k, z),
            self.measure_id,
            self.seed,
        )
        return new, k

    def restrict(self, window: SpaceTimeWindow) -> "JumpSkeleton":
        keep = (
            (self.s <= window.t_max)
            & (self.y >= window.x_min)
            & (self.y <= window.x_max)
        )
        return JumpSkeleton(window, self.s[keep], self.y[keep], self.z[keep],
                            self.measure_id, self.seed)

    # text form ------------------------------------------------------------

    def to_text(self) -> str:
        w = self.window
        lines = [
            "# levywave-skeleton v1",
            f"# window {w.t_max!r} {w.x_min!r} {w.x_max!r}",
            f"# seed {self.seed!r}",
            f"# measure {self.measure_id}",
        ]
        lines += [f"{s!r} {y!r} {z!r}" for s, y, z in self]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "JumpSkeleton":
        window = None
        seed = None
        measure_id = ""
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(" ")
                if key == "window":
                    window = SpaceTimeWindow(*map(float, rest.split()))
                elif key == "seed":
                    seed = _parse_seed(rest)
                elif key == "measure":
                    measure_id = rest
                continue
            rows.append(tuple(map(float, line.split())))
        if window is None:
            raise ValueError("missing '# window' header")
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(window, arr[:, 0], arr[:, 1], arr[:, 2], measure_id, seed)


def _parse_seed(text: str):
    text = text.strip()
    if text == "None":
        return None
    if text.startswith("("):
        return tuple(int(v) for v in text.strip("()").split(",") if v.strip())
    return int(text)


def sample_skeleton(window: SpaceTimeWindow, measure: LevyMeasureSpec, seed) -> JumpSkeleton:
    """Draw one realization of N restricted to ``window``.

    Count ~ Poisson(activity * area), then uniform positions, then i.i.d.
    marks, all from the stream keyed by ``seed``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    lineage = None if isinstance(seed, np.random.Generator) else seed
    mean = measure.total_rate * window.area
    k = int(rng.poisson(mean)) if mean > 0 else 0
    s = rng.uniform(0.0, window.t_max, k)
    y = rng.uniform(window.x_min, window.x_max, k)
    z = sample_jump(measure, rng, k) if k else np.empty(0)
    order = np.argsort(s, kind="stable")
    return JumpSkeleton(window, s[order], y[order], np.asarray(z)[order],
                        measure.name, lineage)
