"""Truncated histories on a uniform grid and the fading-memory norms.

A :class:`Segment` stores the values of a history ``phi(theta)`` at the grid
points ``theta_i = -(depth - 1 - i) * h``, oldest first, so the last row is
``phi(0)``.  The span ``t_mem = (depth - 1) * h`` is the truncation of the
infinite past; anything older is treated as a constant extension of the
oldest stored value (see :mod:`nsfde.measures`).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class InvalidSegmentError(ValueError):
    pass


class GridAlignmentError(ValueError):
    pass


def _as_values(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidSegmentError(f"segment values must be (depth, d), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSegmentError("segment contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Segment:
    """History window ``{phi(theta): -t_mem <= theta <= 0}`` on a grid of step ``h``."""

    h: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise InvalidSegmentError(f"grid step must be positive, got {self.h}")
        object.__setattr__(self, "values", _as_values(self.values))

    @property
    def depth(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def t_mem(self) -> float:
        return (self.depth - 1) * self.h

    @property
    def thetas(self) -> np.ndarray:
        return -self.h * np.arange(self.depth - 1, -1, -1, dtype=float)

    def at_zero(self) -> np.ndarray:
        return self.values[-1]

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return self.h == other.h and np.array_equal(self.values, other.values)

    def __mul__(self, c: float) -> "Segment":
        return Segment(self.h, self.values * c)

    __rmul__ = __mul__

    def __sub__(self, other: "Segment") -> "Segment":
        return segment_sub(self, other)

    @classmethod
    def constant(cls, value, h: float, depth: int) -> "Segment":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(h, np.tile(v, (depth, 1)))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], h: float,
                      depth: int) -> "Segment":
        """Sample ``fn`` (vectorised over theta) on the grid."""
        thetas = -h * np.arange(depth - 1, -1, -1, dtype=float)
        return cls(h, np.asarray(fn(thetas), dtype=float))

    def resample(self, h_new: float) -> "Segment":
        """Re-grid onto step ``h_new`` over the same span.

        Exact subsampling when ``h_new`` is an integer multiple of ``h``;
        linear interpolation otherwise.
        """
        depth_new = int(round(self.t_mem / h_new)) + 1
        ratio = h_new / self.h
        if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
            step = int(round(ratio))
            idx = self.depth - 1 - step * np.arange(depth_new - 1, -1, -1)
            if idx[0] < 0:
                raise GridAlignmentError("resampled span exceeds the stored window")
            return Segment(h_new, self.values[idx])
        th_new = -h_new * np.arange(depth_new - 1, -1, -1, dtype=float)
        th_new = np.maximum(th_new, -self.t_mem)
        cols = [np.interp(th_new, self.thetas, self.values[:, j]) for j in range(self.dim)]
        return Segment(h_new, np.stack(cols, axis=1))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta"] + [f"x_{j + 1}" for j in range(self.dim)])
        for th, row in zip(self.thetas, self.values):
            w.writerow([repr(float(th))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Segment":
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        thetas, values = data[:, 0], data[:, 1:]
        # average over the whole span and drop the last bits of decimal round-off
        h = float(f"{(thetas[-1] - thetas[0]) / (len(thetas) - 1):.12g}") if len(thetas) > 1 else 1.0
        return cls(h, values)


def _check(seg: Segment) -> None:
    if not np.all(np.isfinite(seg.values)):
        raise InvalidSegmentError("segment contains non-finite values")


def cr_norm_values(values: np.ndarray, h: float, r: float) -> np.ndarray:
    """Weighted sup norm over the last two axes of ``values`` (..., depth, d)."""
    depth = values.shape[-2]
    weights = np.exp(-r * h * np.arange(depth - 1, -1, -1, dtype=float))
    return np.max(weights * np.linalg.norm(values, axis=-1), axis=-1)


def cr_norm(seg: Segment, r: float) -> float:
    """``max_i exp(r * theta_i) * |phi(theta_i)|`` over the stored grid."""
    if not r > 0:
        raise ValueError(f"rate r must be positive, got {r}")
    _check(seg)
    return float(cr_norm_values(seg.values, seg.h, r))


def sup_norm(seg: Segment) -> float:
    _check(seg)
    return float(np.max(np.linalg.norm(seg.values, axis=-1)))


def segment_sub(a: Segment, b: Segment) -> Segment:
    if a.h != b.h or a.values.shape != b.values.shape:
        raise InvalidSegmentError(
            f"shape mismatch: h={a.h}/{b.h}, values={a.values.shape}/{b.values.shape}")
    return Segment(a.h, a.values - b.values)


@dataclass(frozen=True, eq=False)
class Path:
    """A solution path: initial history plus values at times h, 2h, ..., T."""

    h: float
    pre_history: Segment
    post_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        post = np.array(self.post_values, dtype=float)
        if post.ndim == 1:
            post = post[:, None]
        if post.ndim != 2 or post.shape[1] != self.pre_history.dim:
            raise InvalidSegmentError("post_values must be (n_steps, d) matching the history")
        if self.pre_history.h != self.h:
            raise InvalidSegmentError("pre_history grid differs from path grid")
        post.setflags(write=False)
        object.__setattr__(self, "post_values", post)

    @property
    def dim(self) -> int:
        return self.pre_history.dim

    @property
    def n_steps(self) -> int:
        return self.post_values.shape[0]

    @property
    def T(self) -> float:
        return self.n_steps * self.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.n_steps + 1, dtype=float)

    def values(self) -> np.ndarray:
        """x at times 0, h, ..., T."""
        return np.vstack([self.pre_history.values[-1:], self.post_values])

    def full(self) -> np.ndarray:
        return np.vstack([self.pre_history.values, self.post_values])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x_{j + 1}" for j in range(self.dim)])
        for t, row in zip(self.times, self.values()):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def grid_index(t: float, h: float, tol: float | None = None) -> int:
    """Snap ``t`` to the grid, raising if it is further than ``tol`` (default h/2)."""
    tol = 0.5 * h if tol is None else tol
    n = int(round(t / h))
    if abs(t - n * h) >= tol:
        raise GridAlignmentError(f"t={t} is not on the grid of step {h}")
    return n


def segment_at(path: Path, t: float) -> Segment:
    """The segment ``x_t`` with the same depth as the path's initial history."""
    n = grid_index(t, path.h)
    if n < 0 or n > path.n_steps:
        raise ValueError(f"t={t} outside [0, {path.T}]")
    if n == 0:
        return path.pre_history
    full = path.full()
    depth = path.pre_history.depth
    return Segment(path.h, full[n:n + depth])
