"""Monte Carlo checks of mean-square boundedness, coupling decay and stability in distribution.

Every curve carries its own bound and a per-point verdict.  A point passes when
``estimate - 3 * stderr - slack <= bound`` where ``slack = h * max(1, |estimate|)``
stands for the O(h) discretisation error of the scheme.

The bounded-Lipschitz distance between two samples of segments is estimated
from below by maximising over a random family of clipped affine functionals of
weighted coordinates ``phi(theta) * exp(r * theta)``.  Each functional is
Lipschitz with constant at most one in the sup norm and bounded by one, so
every member is admissible and the maximum is a certified lower bound.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fading_memory import Segment, cr_norm, cr_norm_values
from .integrator import (Ensemble, SchemeConfig, _require, _simulate_many,
                         simulate_coupled_ensembles)
from .measures import lag_weights, r_moment
from .model import ConstantLedger, NeutralModel


class FitError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class Curve:
    name: str
    t: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    slack: np.ndarray

    @classmethod
    def build(cls, name, t, estimate, stderr, bound=None, h=0.0):
        t = np.asarray(t, dtype=float)
        est = np.asarray(estimate, dtype=float)
        se = np.asarray(stderr, dtype=float)
        bd = np.full_like(est, np.nan) if bound is None else np.broadcast_to(
            np.asarray(bound, dtype=float), est.shape).copy()
        slack = h * np.maximum(1.0, np.abs(est))
        return cls(name, t, est, se, bd, slack)

    @property
    def passes(self) -> np.ndarray:
        ok = self.estimate - 3 * self.stderr - self.slack <= self.bound
        return np.where(np.isnan(self.bound), True, ok)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.passes))

    def violations(self) -> list[dict]:
        """Counterexample records for the points that fail."""
        out = []
        for i in np.flatnonzero(~self.passes):
            out.append({"curve": self.name, "t": float(self.t[i]),
                        "estimate": float(self.estimate[i]), "stderr": float(self.stderr[i]),
                        "slack": float(self.slack[i]), "bound": float(self.bound[i])})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "estimate", "stderr", "bound", "pass"])
        for t, e, s, b, p in zip(self.t, self.estimate, self.stderr, self.bound, self.passes):
            w.writerow([_fmt(t), _fmt(e), _fmt(s), "" if np.isnan(b) else _fmt(b),
                        "true" if p else "false"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"name": self.name, "points": int(self.t.size), "passed": self.passed,
                "violations": self.violations()}


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.shape[0]
    if n == 0:
        raise ValueError("empty ensemble")
    m = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return m, se


def default_checkpoints(T: float, h: float) -> list[float]:
    """Grid times 0..T, at most about 200 of them."""
    n = int(round(T / h))
    stride = max(1, math.ceil(n / 200))
    return [i * h for i in range(0, n + 1, stride)]


def second_moment_curve(ens: Ensemble, checkpoints=None,
                        ledger: ConstantLedger | None = None, r: float | None = None) -> Curve:
    """Sample mean of |x(t)|^2 with standard errors; bounded by C1 + C2 E||xi||_r^2 e^{-lambda t}."""
    if ens.n_paths < 1:
        raise ValueError("empty ensemble")
    ts = default_checkpoints(ens.cfg.T, ens.h) if checkpoints is None else list(checkpoints)
    stats = [_mean_se(np.sum(ens.values_at(t) ** 2, axis=1)) for t in ts]
    bound = None
    if ledger is not None and ledger.admissible:
        bound = ledger.mean_square_bound(ts, cr_norm(ens.xi, r or ledger.r) ** 2)
    return Curve.build("second_moment", ts, [s[0] for s in stats], [s[1] for s in stats],
                       bound, ens.h)


def segment_norm_curve(ens: Ensemble, r: float, checkpoints=None,
                       ledger: ConstantLedger | None = None) -> Curve:
    """Sample mean of ||x_t||_r^2; bounded by C4 + C5 E||xi||_r^2 e^{-lambda t}."""
    ts = default_checkpoints(ens.cfg.T, ens.h) if checkpoints is None else list(checkpoints)
    stats = [_mean_se(cr_norm_values(ens.segments_at(t), ens.h, r) ** 2) for t in ts]
    bound = None
    if ledger is not None and ledger.admissible:
        bound = ledger.segment_bound(ts, cr_norm(ens.xi, r) ** 2)
    return Curve.build("segment_norm", ts, [s[0] for s in stats], [s[1] for s in stats],
                       bound, ens.h)


@dataclass
class Fit:
    rate: float
    intercept: float
    r2: float
    plateau: float = 0.0


def fit_decay_rate(t, values=None, plateau_mode: str = "zero", tail_fraction: float = 0.25) -> Fit:
    """Least squares of ``log(value - plateau)`` against ``t``.

    Accepts a :class:`Curve` or two arrays.  With ``plateau_mode="estimated"``
    the plateau is the mean of the last ``tail_fraction`` of the points, which
    are then excluded from the fit.
    """
    if isinstance(t, Curve):
        t, values = t.t, t.estimate
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size < 4:
        raise FitError("need at least 4 points")
    if plateau_mode == "zero":
        plateau = 0.0
    elif plateau_mode == "estimated":
        n_tail = max(1, int(round(tail_fraction * t.size)))
        plateau = float(np.mean(v[-n_tail:]))
        t, v = t[:-n_tail], v[:-n_tail]
        if t.size < 3:
            raise FitError("too few points before the plateau")
    else:
        raise ValueError(f"unknown plateau_mode {plateau_mode!r}")
    resid = v - plateau
    if np.any(resid <= 0):
        raise FitError("non-positive values after plateau subtraction")
    y = np.log(resid)
    slope, intercept = np.polyfit(t, y, 1)
    pred = slope * t + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return Fit(float(-slope), float(intercept), r2, plateau)


@dataclass
class CouplingResult:
    literal: Curve
    envelope: Curve
    segment: Curve
    fit: Fit | None
    fit_error: str | None
    window: float
    identical: bool = False

    @property
    def passed(self) -> bool:
        return self.literal.passed and self.segment.passed and self.fit_error is None

    def summary(self, lam: float | None = None) -> dict:
        out = {"literal": self.literal.summary(), "envelope": self.envelope.summary(),
               "segment": self.segment.summary(), "window": self.window,
               "identical_initial_data": self.identical}
        if self.fit is not None:
            out["fit"] = asdict(self.fit)
        if self.fit_error is not None:
            out["fit_error"] = self.fit_error
            out["violation_candidate"] = True
        if lam is not None and self.fit is not None:
            out["rate_over_lambda"] = self.fit.rate / lam
        return out


def coupling_decay(model: NeutralModel, xi: Segment, eta: Segment, cfg: SchemeConfig,
                   n_pairs: int, ledger: ConstantLedger | None = None, checkpoints=None,
                   window: float = 1.0, burn_in: float | None = None, fit_step: float = 0.25,
                   threads: int | None = None, force: bool = False) -> CouplingResult:
    """Shared-noise coupling of the solutions from ``xi`` and ``eta``.

    Three curves are produced: the running sup ``E sup_{0<s<=t} |Delta(s)|^2``
    against ``C3 ||xi-eta||_r^2 e^{-lambda t}``, the trailing-window envelope
    ``E sup_{t-window<s<=t} |Delta(s)|^2`` (decay diagnostic, fitted for a rate
    on the grid ``burn_in, burn_in + fit_step, ...``) and the segment distance
    ``E ||x_t(xi) - x_t(eta)||_r^2`` against ``C6 ||xi-eta||_r^2 e^{-lambda t}``.
    """
    h = cfg.h
    ts = default_checkpoints(cfg.T, h) if checkpoints is None else list(checkpoints)
    r = model.r
    diff_norm2 = cr_norm(xi - eta, r) ** 2
    use_ledger = ledger is not None and ledger.admissible
    identical = xi == eta
    if identical:
        _require(model, cfg, xi, force)
        zeros = np.zeros(len(ts))
        mk = lambda name: Curve.build(name, ts, zeros, zeros, None, h)  # noqa: E731
        return CouplingResult(mk("coupling_sup"), mk("coupling_envelope"),
                              mk("coupling_segment"), None, None, window, True)
    ea, eb = simulate_coupled_ensembles(model, xi, eta, n_pairs, cfg, threads, force)
    delta = ea.trajectory() - eb.trajectory()
    d2 = np.sum(delta ** 2, axis=2)  # (P, N+1), times 0..T
    running = np.maximum.accumulate(d2[:, 1:], axis=1)
    w = max(1, int(round(window / h)))

    def sup_upto(t):
        n = int(round(t / h))
        return running[:, n - 1] if n >= 1 else d2[:, 0]

    def envelope(t):
        n = int(round(t / h))
        return d2[:, max(0, n - w + 1):n + 1].max(axis=1)

    lit = [_mean_se(sup_upto(t)) for t in ts]
    env = [_mean_se(envelope(t)) for t in ts]
    seg = [_mean_se(cr_norm_values(ea.segments_at(t) - eb.segments_at(t), h, r) ** 2)
           for t in ts]
    literal = Curve.build("coupling_sup", ts, [s[0] for s in lit], [s[1] for s in lit],
                          ledger.coupling_bound(ts, diff_norm2) if use_ledger else None, h)
    env_curve = Curve.build("coupling_envelope", ts, [s[0] for s in env], [s[1] for s in env],
                            None, h)
    segment = Curve.build("coupling_segment", ts, [s[0] for s in seg], [s[1] for s in seg],
                          ledger.segment_coupling_bound(ts, diff_norm2) if use_ledger else None,
                          h)
    start = window if burn_in is None else burn_in
    fit_ts = np.arange(start, cfg.T + 0.5 * h, fit_step)
    fit, err = None, None
    try:
        fit = fit_decay_rate(fit_ts, [float(np.mean(envelope(t))) for t in fit_ts], "zero")
        if not fit.rate > 0:
            err = f"envelope does not decay (fitted rate {fit.rate:.4g})"
    except FitError as exc:
        err = str(exc)
    return CouplingResult(literal, env_curve, segment, fit, err, window)


# ---------------------------------------------------------------- d_L estimation


@dataclass(frozen=True)
class FunctionalFamily:
    """Clipped affine functionals ``clip(a0 + sum_i a_i phi(theta_i) e^{r theta_i}, -1, 1)``."""

    lags: np.ndarray    # (F, 4) lag counts, 0 is theta = 0
    dims: np.ndarray    # (F, 4)
    coefs: np.ndarray   # (F, 4), sum of |coef| == 1, unused slots are 0
    a0: np.ndarray      # (F,)

    @classmethod
    def draw(cls, size: int, depth: int, dim: int, seed: int) -> "FunctionalFamily":
        L = depth - 1
        lags = np.zeros((size, 4), dtype=np.int64)
        dims = np.zeros((size, 4), dtype=np.int64)
        coefs = np.zeros((size, 4))
        a0 = np.zeros(size)
        for j in range(size):
            rng = np.random.default_rng([seed, j])
            K = 1 if rng.random() < 0.5 else int(rng.integers(2, 5))
            lags[j, :K] = np.floor(L * rng.random(K) ** 3).astype(np.int64)
            dims[j, :K] = rng.integers(0, dim, K)
            mag = rng.exponential(size=K)
            coefs[j, :K] = rng.choice([-1.0, 1.0], size=K) * mag / mag.sum()
            a0[j] = rng.uniform(-1.0, 1.0)
        return cls(lags, dims, coefs, a0)

    def evaluate(self, values: np.ndarray, h: float, r: float) -> np.ndarray:
        """g_j(phi) for a stack of segments (n, depth, d) -> (n, F)."""
        depth = values.shape[1]
        idx = depth - 1 - self.lags
        weights = self.coefs * np.exp(-r * h * self.lags)
        picked = values[:, idx, self.dims]  # (n, F, 4)
        return np.clip(self.a0 + np.einsum("nfk,fk->nf", picked, weights), -1.0, 1.0)


def _as_stack(segs) -> tuple[np.ndarray, float | None]:
    if isinstance(segs, np.ndarray):
        return segs, None
    segs = list(segs)
    if not segs:
        raise ValueError("empty sample")
    return np.stack([s.values for s in segs]), segs[0].h


def empirical_dl_arrays(A: np.ndarray, B: np.ndarray, h: float, r: float, family_size: int,
                        seed: int = 0, family: FunctionalFamily | None = None) -> float:
    if A.shape[1:] != B.shape[1:]:
        raise ValueError(f"segment shapes differ: {A.shape[1:]} vs {B.shape[1:]}")
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("empty sample")
    fam = family or FunctionalFamily.draw(family_size, A.shape[1], A.shape[2], seed)
    ga = fam.evaluate(A, h, r).mean(axis=0)
    gb = fam.evaluate(B, h, r).mean(axis=0)
    return float(np.max(np.abs(ga - gb)))


def empirical_dl(segsA, segsB, family_size: int = 1000, seed: int = 0, r: float = 0.0,
                 h: float | None = None) -> float:
    """Lower bound on d_L between the empirical laws of two samples of segments."""
    A, hA = _as_stack(segsA)
    B, hB = _as_stack(segsB)
    h = h if h is not None else (hA or hB or 1.0)
    return empirical_dl_arrays(A, B, h, r, family_size, seed)


@dataclass
class DLReport:
    checkpoints: list[float]
    family_size: int
    cross: dict[str, list[float]]
    consecutive: dict[str, list[float]]
    noise_floor: list[float]
    tolerance: float = 0.05
    cross_decreasing: dict[str, bool] = field(default_factory=dict)
    cross_final_ok: dict[str, bool] = field(default_factory=dict)
    consecutive_decreasing: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.cross_decreasing.values()) and all(self.cross_final_ok.values())

    def to_json(self) -> dict:
        return {"estimator": "lower bound (random clipped affine family)",
                "checkpoints": self.checkpoints, "family_size": self.family_size,
                "decision_threshold": self.tolerance, "noise_floor": self.noise_floor,
                "cross": self.cross, "consecutive": self.consecutive,
                "cross_decreasing": self.cross_decreasing, "cross_final_ok": self.cross_final_ok,
                "consecutive_decreasing": self.consecutive_decreasing, "passed": self.passed}


def decreasing_beyond_floor(values, floors) -> bool:
    """Each drop must exceed the later noise floor.

    Values within twice their floor count as indistinguishable from zero; from
    there on the sequence only has to stay at that level.
    """
    for k in range(len(values) - 1):
        if values[k] <= 2 * floors[k]:
            if values[k + 1] > 2 * floors[k + 1] + floors[k]:
                return False
            continue
        if not values[k] - values[k + 1] > floors[k + 1]:
            return False
    return True


def stability_in_distribution_report(model: NeutralModel, xi_list: list[Segment],
                                     cfg: SchemeConfig, checkpoints, n_paths: int,
                                     family_size: int = 1000, seed: int | None = None,
                                     tolerance: float = 0.05, threads: int | None = None,
                                     force: bool = False) -> DLReport:
    """Empirical d_L between ensembles started from different initial data.

    All ensembles use the same master seed.  The noise floor at a checkpoint is
    the largest split-half distance inside any single ensemble.
    """
    if len(xi_list) < 2:
        raise ValueError("need at least two initial data")
    ts = [float(t) for t in checkpoints]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("checkpoints must be increasing")
    if n_paths < 2:
        raise ValueError("need at least two paths for a noise floor")
    for xi in xi_list:
        _require(model, cfg, xi, force)
    seed = cfg.master_seed if seed is None else seed
    out, _, _ = _simulate_many(model, xi_list, n_paths, cfg, threads)
    ens = [Ensemble(model.name, cfg, xi, out[i]) for i, xi in enumerate(xi_list)]
    depth, h, r = xi_list[0].depth, cfg.h, model.r
    fam = FunctionalFamily.draw(family_size, depth, model.dim, seed)
    half = n_paths // 2

    def dl(A, B):
        return empirical_dl_arrays(A, B, h, r, family_size, family=fam)

    segs = [[e.segments_at(t) for t in ts] for e in ens]
    floors = [max(dl(segs[i][k][:half], segs[i][k][half:2 * half]) for i in range(len(ens)))
              for k in range(len(ts))]
    cross, dec, final = {}, {}, {}
    for i in range(len(ens)):
        for j in range(i + 1, len(ens)):
            key = f"{i}-{j}"
            cross[key] = [dl(segs[i][k], segs[j][k]) for k in range(len(ts))]
            dec[key] = decreasing_beyond_floor(cross[key], floors)
            final[key] = cross[key][-1] <= floors[-1] + tolerance
    consec, cdec = {}, {}
    for i in range(len(ens)):
        consec[str(i)] = [dl(segs[i][k], segs[i][k + 1]) for k in range(len(ts) - 1)]
        cdec[str(i)] = decreasing_beyond_floor(consec[str(i)], floors[1:])
    return DLReport(ts, family_size, cross, consec, floors, tolerance, dec, final, cdec)


# ---------------------------------------------------------------- path invariants


@dataclass
class InvariantCheck:
    name: str
    paths: int
    max_excess: float
    passed: bool
    witness: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _window_sums(series: np.ndarray, W: np.ndarray) -> np.ndarray:
    """sum_k W[k] * series[n + k] for every full window (series along axis 0)."""
    if series.ndim == 1:
        return np.correlate(series, W, mode="valid")
    return np.stack([np.correlate(series[:, j], W, mode="valid")
                     for j in range(series.shape[1])], axis=1)


def _trapz_cum(v: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:] = np.cumsum(0.5 * h * (v[1:] + v[:-1]))
    return out


def path_invariants(model: NeutralModel, ens: Ensemble, ledger: ConstantLedger | None = None,
                    max_paths: int = 20) -> list[InvariantCheck]:
    """Pathwise checks of the memory-energy inequality and the neutral-term sup lemma.

    Memory energy: ``int_0^t int |x(s+theta)|^2 mu ds <= ||xi||_r^2 mu^(2r) / 2r + int_0^t |x|^2``.
    Sup lemma: ``sup |x(s)|^2 <= k1 ||xi||_r^2 + k2 sup |x(s) - D(x_s)|^2`` over ``0 < s <= t``.
    Both allow O(h) slack ``h * max(1, |lhs|)``.
    """
    h, r, mu = ens.h, model.r, model.mu
    W = lag_weights(mu, h, ens.depth)
    xi_n2 = cr_norm(ens.xi, r) ** 2
    mu2r = r_moment(mu, 2 * r)
    kk = model.declared.k
    k1 = kk * mu2r / (1 - kk) if ledger is None else ledger.k1
    k2 = 1 / (1 - kk) ** 2 if ledger is None else ledger.k2
    n = min(max_paths, ens.n_paths)
    worst_u, worst_l = (-np.inf, None), (-np.inf, None)
    for p in range(n):
        full = ens.paths[p]
        x = full[ens.depth - 1:]
        sq = np.sum(full ** 2, axis=1)
        mem_sq = _window_sums(sq, W)
        lhs = _trapz_cum(mem_sq, h)
        rhs = xi_n2 * mu2r / (2 * r) + _trapz_cum(np.sum(x ** 2, axis=1), h)
        ex = (lhs - rhs) / np.maximum(1.0, np.abs(lhs)) - h
        i = int(np.argmax(ex))
        if ex[i] > worst_u[0]:
            worst_u = (float(ex[i]), {"path": p, "t": i * h, "lhs": float(lhs[i]),
                                      "rhs": float(rhs[i])})
        mem = _window_sums(full, W)
        y = x - model.neutral(mem)
        sup_x = np.maximum.accumulate(np.sum(x[1:] ** 2, axis=1))
        sup_y = np.maximum.accumulate(np.sum(y[1:] ** 2, axis=1))
        bound = k1 * xi_n2 + k2 * sup_y
        ex = (sup_x - bound) / np.maximum(1.0, sup_x) - h
        i = int(np.argmax(ex))
        if ex[i] > worst_l[0]:
            worst_l = (float(ex[i]), {"path": p, "t": (i + 1) * h, "lhs": float(sup_x[i]),
                                      "rhs": float(bound[i])})
    return [InvariantCheck("memory_energy", n, worst_u[0], worst_u[0] <= 0,
                           worst_u[1] if worst_u[0] > 0 else None),
            InvariantCheck("neutral_sup", n, worst_l[0], worst_l[0] <= 0,
                           worst_l[1] if worst_l[0] > 0 else None)]
