"""Fading probability measures on (-inf, 0]: atoms plus exponential densities.

An exponential component ``(rho, w)`` stands for the density
``w * rho * exp(rho * theta)``.  Exponential moments are available in closed
form, and on a segment grid the measure is reduced to a vector of lag weights
that integrates piecewise-linear histories exactly, with the mass older than
the stored window attached to the oldest grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .fading_memory import Segment, cr_norm, sup_norm

WEIGHT_TOL = 1e-12


class TruncationError(ValueError):
    def __init__(self, message: str, bound: float):
        super().__init__(message)
        self.bound = bound


@dataclass(frozen=True)
class Atom:
    theta: float
    w: float


@dataclass(frozen=True)
class ExpComponent:
    rho: float
    w: float


@dataclass(frozen=True)
class FadingMeasure:
    atoms: tuple[Atom, ...] = ()
    exp_components: tuple[ExpComponent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "exp_components", tuple(self.exp_components))
        if not self.atoms and not self.exp_components:
            raise ValueError("measure has no components")
        total = 0.0
        for a in self.atoms:
            if not (a.theta <= 0 and math.isfinite(a.theta)):
                raise ValueError(f"atom delay must be <= 0, got {a.theta}")
            if not a.w > 0:
                raise ValueError(f"weights must be positive, got {a.w}")
            total += a.w
        for e in self.exp_components:
            if not (e.rho > 0 and math.isfinite(e.rho)):
                raise ValueError(f"rates must be positive, got {e.rho}")
            if not e.w > 0:
                raise ValueError(f"weights must be positive, got {e.w}")
            total += e.w
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")

    @classmethod
    def atom(cls, theta: float) -> "FadingMeasure":
        return cls(atoms=(Atom(theta, 1.0),))

    @classmethod
    def exponential(cls, rho: float) -> "FadingMeasure":
        return cls(exp_components=(ExpComponent(rho, 1.0),))

    def to_json(self) -> dict:
        return {
            "atoms": [{"theta": a.theta, "w": a.w} for a in self.atoms],
            "exp": [{"rho": e.rho, "w": e.w} for e in self.exp_components],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FadingMeasure":
        unknown = set(data) - {"atoms", "exp"}
        if unknown:
            raise ValueError(f"unknown measure fields: {sorted(unknown)}")
        atoms = tuple(Atom(float(a["theta"]), float(a["w"])) for a in data.get("atoms", []))
        exps = tuple(ExpComponent(float(e["rho"]), float(e["w"])) for e in data.get("exp", []))
        return cls(atoms, exps)

    def tail(self, T: float, s: float) -> float:
        """``int_{(-inf, -T)} exp(-s * theta) mu(d theta)``; inf when it diverges."""
        total = math.fsum(a.w * math.exp(-s * a.theta) for a in self.atoms if a.theta < -T)
        for e in self.exp_components:
            if e.rho <= s:
                return math.inf
            total += e.w * e.rho / (e.rho - s) * math.exp(-(e.rho - s) * T)
        return total


def r_moment(mu: FadingMeasure, r: float) -> float:
    """``mu^(r) = int exp(-r theta) mu(d theta)``; ``math.inf`` if mu is not in M_r."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    terms = [a.w * math.exp(-r * a.theta) for a in mu.atoms]
    for e in mu.exp_components:
        if e.rho <= r:
            return math.inf
        terms.append(e.w * e.rho / (e.rho - r))
    return math.fsum(terms)


def in_Mr(mu: FadingMeasure, r: float) -> bool:
    return math.isfinite(r_moment(mu, r))


def required_depth(mu: FadingMeasure, r: float, tol_tail: float,
                   h: float | None = None) -> float:
    """Smallest window ``T`` with ``int_{(-inf,-T)} exp(-2 r theta) mu < tol_tail``.

    Atoms are always covered.  With ``h`` given, ``T`` is rounded up to the grid.
    """
    if not in_Mr(mu, 2 * r):
        raise ValueError(f"measure is not in M_2r for r={r}")
    T_atoms = max((-a.theta for a in mu.atoms), default=0.0)
    s = 2 * r

    def exp_tail(T):
        return math.fsum(e.w * e.rho / (e.rho - s) * math.exp(-(e.rho - s) * T)
                         for e in mu.exp_components)

    T = T_atoms
    if mu.exp_components and exp_tail(T) >= tol_tail:
        n = len(mu.exp_components)
        hi = max(math.log(n * e.w * e.rho / ((e.rho - s) * tol_tail)) / (e.rho - s)
                 for e in mu.exp_components)
        hi = max(hi, T) + 1.0
        lo = T
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if exp_tail(mid) < tol_tail:
                hi = mid
            else:
                lo = mid
        T = hi
    if h is not None:
        n_steps = math.ceil(T / h - 1e-9)
        while mu.exp_components and exp_tail(n_steps * h) >= tol_tail:
            n_steps += 1
        T = n_steps * h
    return T


def _exp_cell_weights(beta: float) -> tuple[float, float]:
    """``a = int_0^1 (1-s) beta e^{-beta s} ds`` and ``b = int_0^1 s beta e^{-beta s} ds``."""
    if beta < 0.05:
        # series; the closed form loses digits to cancellation here
        b = 0.0
        term = beta
        for k in range(12):
            b += term / (k + 2)
            term *= -beta / (k + 1)
    else:
        b = -math.expm1(-beta) / beta - math.exp(-beta)
    a = -math.expm1(-beta) - b
    return a, b


@lru_cache(maxsize=64)
def _lag_weights(mu: FadingMeasure, h: float, depth: int) -> np.ndarray:
    L = depth - 1
    W = np.zeros(depth)  # indexed by lag: 0 is theta = 0
    for e in mu.exp_components:
        if L == 0:
            W[0] += e.w
            continue
        a, b = _exp_cell_weights(e.rho * h)
        q = math.exp(-e.rho * h)
        lags = np.arange(depth, dtype=float)
        wl = np.exp(-e.rho * h * lags) * (a + b / q)
        wl[0] = a
        wl[L] = math.exp(-e.rho * h * L) * (b / q + 1.0)
        W += e.w * wl
    for at in mu.atoms:
        pos = -at.theta / h
        lo = int(math.floor(pos + 1e-12))
        frac = max(pos - lo, 0.0)
        if lo > L or (lo == L and frac > 1e-12):
            raise TruncationError(f"atom at {at.theta} lies outside the window", math.inf)
        if frac <= 1e-12:
            W[lo] += at.w
        else:
            W[lo] += at.w * (1.0 - frac)
            W[lo + 1] += at.w * frac
    W = W[::-1].copy()  # oldest first, aligned with Segment.values
    W.setflags(write=False)
    return W


def lag_weights(mu: FadingMeasure, h: float, depth: int) -> np.ndarray:
    """Quadrature weights on a segment grid (oldest first), summing to one."""
    return _lag_weights(mu, float(h), int(depth))


class Integral(NamedTuple):
    value: np.ndarray | float
    bound: float


def integrate_segment(mu: FadingMeasure, seg: Segment, mode: str = "linear",
                      r: float = 0.0, tol_tail: float = 1e-8) -> Integral:
    """Integrate ``phi`` (linear) or ``|phi|^2`` (squared) against ``mu``.

    ``tol_tail`` is relative to ``mu^(2r)``.  The returned bound covers the
    truncation of the past beyond the stored window.
    """
    if mode not in ("linear", "squared"):
        raise ValueError(f"unknown mode {mode!r}")
    T = seg.t_mem
    if any(a.theta < -T - 1e-12 * max(1.0, T) for a in mu.atoms):
        raise TruncationError("an atom lies outside the stored window", math.inf)
    if r > 0:
        tail2 = mu.tail(T, 2 * r)
        scale = r_moment(mu, 2 * r)
        norm = cr_norm(seg, r)
    else:
        tail2 = mu.tail(T, 0.0)
        scale = 1.0
        norm = sup_norm(seg)
    bound2 = norm ** 2 * tail2
    if tail2 >= tol_tail * scale:
        raise TruncationError(
            f"tail beyond -{T:g} carries {tail2:.3g} (> {tol_tail:g} relative)", bound2)
    W = lag_weights(mu, seg.h, seg.depth)
    if mode == "squared":
        return Integral(float(W @ np.sum(seg.values ** 2, axis=1)), bound2)
    bound1 = 2.0 * norm * mu.tail(T, r)
    return Integral(W @ seg.values, bound1)
