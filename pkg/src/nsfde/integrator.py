"""Fixed-step strong integration of d[x(t) - D(x_t)] = b(x_t) dt + sigma(x_t) dw(t).

The scheme advances the transformed variable ``y = x - D(x_t)`` by an
Euler-Maruyama step and recovers the new state from ``y`` by a fixed-point
solve for the neutral term.  With ``drift_implicit`` the drift is evaluated at
the new segment instead (a linear solve, since ``b`` is affine), which keeps
stiff drifts stable at large steps.

Memory integrals over exponential components are carried by O(1) sliding
accumulators; atoms are looked up by linear interpolation in the stored path.
Paths of an ensemble are simulated as one vectorised batch per chunk, each
path driven by its own counter-based stream, so results do not depend on how
chunks are scheduled across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .fading_memory import Path, Segment, grid_index
from .measures import r_moment, required_depth
from .model import NeutralModel, constant_ledger

CHUNK = 256


class SchemeError(RuntimeError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, message, time, paths):
        super().__init__(message)
        self.time = time
        self.paths = paths


class InadmissibleModelError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    h: float
    T: float
    fp_tol: float = 1e-12
    fp_max_iter: int = 64
    tol_tail: float = 1e-8
    master_seed: int = 0
    drift_implicit: bool = False
    predictor: bool = False
    blowup: float = 1e12

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.T >= self.h:
            raise ValueError("T must be at least one step")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")

    @property
    def n_steps(self) -> int:
        return grid_index(self.T, self.h)


@dataclass(frozen=True)
class NoiseStream:
    """Gaussian increments for one path, keyed by ``(master_seed, path_index)``.

    Draws are sequential in the step index, so the increment of a given step
    does not depend on how many steps are requested.
    """

    master_seed: int
    path_index: int
    noise_dim: int = 1

    def generator(self) -> np.random.Generator:
        key = np.random.SeedSequence([self.master_seed, self.path_index]).generate_state(2, np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def increments(self, n_steps: int, h: float) -> np.ndarray:
        return math.sqrt(h) * self.generator().standard_normal((n_steps, self.noise_dim))


def history_depth(model: NeutralModel, cfg: SchemeConfig) -> int:
    """Number of grid points needed to hold the truncated memory."""
    tol = cfg.tol_tail * r_moment(model.mu, 2 * model.r)
    T_mem = required_depth(model.mu, model.r, tol, cfg.h)
    return int(round(T_mem / cfg.h)) + 1


def initial_segment(model: NeutralModel, cfg: SchemeConfig, value) -> Segment:
    """Initial data on the scheme grid; ``value`` is a constant vector or a function of theta."""
    depth = history_depth(model, cfg)
    if callable(value):
        return Segment.from_function(value, cfg.h, depth)
    v = np.broadcast_to(np.atleast_1d(np.asarray(value, dtype=float)), (model.dim,))
    return Segment.constant(v, cfg.h, depth)


def _require(model: NeutralModel, cfg: SchemeConfig, xi: Segment, force: bool) -> None:
    if xi.h != cfg.h:
        raise ValueError(f"initial data grid h={xi.h} differs from scheme h={cfg.h}")
    if xi.dim != model.dim:
        raise ValueError("initial data dimension does not match the model")
    need = history_depth(model, cfg)
    if xi.depth < need:
        raise ValueError(f"initial data depth {xi.depth} < required {need} for the memory window")
    if not force:
        led = constant_ledger(model)
        if not led.admissible:
            raise InadmissibleModelError(
                "model is not admissible (" + "; ".join(led.reasons) + "); pass force=True")


class _Memory:
    """Sliding evaluation of ``int x(t+theta) mu(d theta)`` on the stored path."""

    def __init__(self, model: NeutralModel, h: float, depth: int):
        self.L = L = depth - 1
        self.exp = []
        w0 = 0.0
        from .measures import _exp_cell_weights
        for e in model.mu.exp_components:
            if L == 0:
                w0 += e.w
                continue
            a, b = _exp_cell_weights(e.rho * h)
            q = math.exp(-e.rho * h)
            self.exp.append(dict(v=e.w, a=a, c=a + b / q, q=q, qL=q ** L, qL1=q ** (L + 1),
                                 powers=q ** np.arange(L, -1, -1, dtype=float)))
            w0 += e.w * a
        self.atoms = []
        for at in model.mu.atoms:
            pos = -at.theta / h
            lo = int(math.floor(pos + 1e-12))
            frac = max(pos - lo, 0.0)
            if frac <= 1e-12:
                frac = 0.0
            if lo == 0:
                w0 += at.w * (1.0 - frac)
            self.atoms.append((at.w, lo, frac))
        self.w0 = w0

    def init(self, full: np.ndarray) -> None:
        """Accumulators for the window ending at index L (time 0)."""
        window = full[:, : self.L + 1]
        self.S = [np.einsum("k,pkd->pd", e["powers"], window) for e in self.exp]

    def rest(self, full: np.ndarray, new: int) -> np.ndarray:
        """Memory at index ``new`` excluding the (unknown) value stored at ``new``."""
        out = np.zeros(full.shape[::2])
        L = self.L
        for e, S in zip(self.exp, self.S):
            shifted = e["q"] * S - e["qL1"] * full[:, new - L - 1]
            out += e["v"] * (e["c"] * shifted + e["qL"] * (1 - e["a"]) * full[:, new - L])
        for w, lo, frac in self.atoms:
            if lo > 0:
                out += w * (1 - frac) * full[:, new - lo]
            if frac > 0:
                out += w * frac * full[:, new - lo - 1]
        return out

    def advance(self, full: np.ndarray, new: int) -> None:
        x = full[:, new]
        for j, e in enumerate(self.exp):
            self.S[j] = e["q"] * self.S[j] + x - e["qL1"] * full[:, new - self.L - 1]


@dataclass
class BatchResult:
    paths: np.ndarray
    fp_iterations: int
    y_residual: float


def _integrate(model: NeutralModel, xi_values: np.ndarray, cfg: SchemeConfig,
               dW: np.ndarray) -> BatchResult:
    """Integrate a batch. ``xi_values`` is (P, depth, d), ``dW`` is (P, N, m)."""
    P, depth, d = xi_values.shape
    N = dW.shape[1]
    h = cfg.h
    L = depth - 1
    full = np.empty((P, depth + N, d))
    full[:, :depth] = xi_values
    mem = _Memory(model, h, depth)
    mem.init(full)
    kappa = model.kappa
    m_cur = model.memory(xi_values, h)
    y = full[:, L] - model.neutral(m_cur)
    contraction = mem.w0 * float(np.linalg.norm(kappa, 2))
    if cfg.drift_implicit:
        J = np.eye(d) - mem.w0 * kappa - h * (model.A + mem.w0 * model.B)
        Jinv_T = np.linalg.inv(J).T
    max_iter = 0
    max_res = float(np.max(np.abs(y - (full[:, L] - model.neutral(m_cur)))))
    for n in range(N):
        cur, new = L + n, L + n + 1
        x_cur = full[:, cur]
        noise = np.einsum("pij,pj->pi", model.diffusion(x_cur, m_cur), dW[:, n])
        m_rest = mem.rest(full, new)
        x = x_cur.copy()
        if cfg.drift_implicit:
            rhs = y + noise
            for it in range(1, cfg.fp_max_iter + 1):
                m_new = m_rest + mem.w0 * x
                F = x - model.neutral(m_new) - h * model.drift(x, m_new) - rhs
                dx = -F @ Jinv_T
                x = x + dx
                if np.all(np.abs(dx) <= cfg.fp_tol * (1 + np.abs(x))):
                    break
            else:
                raise SchemeError(f"implicit solve did not converge at t={new * h - L * h:g}")
            m_new = m_rest + mem.w0 * x
            y_new = rhs + h * model.drift(x, m_new)
        else:
            y_new = y + h * model.drift(x_cur, m_cur) + noise
            if cfg.predictor:
                it = 1
                x = y_new + model.neutral(m_rest + mem.w0 * x)
            else:
                for it in range(1, cfg.fp_max_iter + 1):
                    x_next = y_new + model.neutral(m_rest + mem.w0 * x)
                    done = np.all(np.abs(x_next - x) <= cfg.fp_tol * (1 + np.abs(x_next)))
                    x = x_next
                    if done:
                        break
                else:
                    raise SchemeError(
                        f"neutral fixed point did not converge in {cfg.fp_max_iter} iterations "
                        f"at t={(n + 1) * h:g}; contraction estimate {contraction:.3g}")
            m_new = m_rest + mem.w0 * x
        bad = ~np.all(np.isfinite(x), axis=1) | (np.max(np.abs(x), axis=1) > cfg.blowup)
        if np.any(bad):
            t = (n + 1) * h
            raise BlowUpError(f"explosion at t={t:g} on {int(bad.sum())} path(s)", t,
                              np.flatnonzero(bad).tolist())
        full[:, new] = x
        mem.advance(full, new)
        max_iter = max(max_iter, it)
        if not cfg.predictor:
            res = np.abs(y_new - (x - model.neutral(m_new)))
            max_res = max(max_res, float(np.max(res / (1 + np.abs(x)))))
        y, m_cur = y_new, m_new
    return BatchResult(full, max_iter, max_res)


def simulate_path(model: NeutralModel, xi: Segment, cfg: SchemeConfig,
                  stream: NoiseStream | None = None, force: bool = False,
                  dW: np.ndarray | None = None) -> Path:
    _require(model, cfg, xi, force)
    if dW is None:
        stream = stream or NoiseStream(cfg.master_seed, 0, model.noise_dim)
        dW = stream.increments(cfg.n_steps, cfg.h)
    res = _integrate(model, xi.values[None], cfg, dW[None])
    return Path(cfg.h, xi, res.paths[0, xi.depth:])


def simulate_coupled_pair(model: NeutralModel, xi: Segment, eta: Segment, cfg: SchemeConfig,
                          stream: NoiseStream | None = None,
                          force: bool = False) -> tuple[Path, Path]:
    """Two solutions driven by the same Brownian increments."""
    if xi.values.shape != eta.values.shape or xi.h != eta.h:
        raise ValueError("initial data must have the same shape")
    _require(model, cfg, xi, force)
    stream = stream or NoiseStream(cfg.master_seed, 0, model.noise_dim)
    dW = stream.increments(cfg.n_steps, cfg.h)
    res = _integrate(model, np.stack([xi.values, eta.values]), cfg, np.stack([dW, dW]))
    return (Path(cfg.h, xi, res.paths[0, xi.depth:]), Path(cfg.h, eta, res.paths[1, eta.depth:]))


@dataclass
class Ensemble:
    """Simulated paths of one initial datum; ``paths`` holds history + trajectory."""

    model_name: str
    cfg: SchemeConfig
    xi: Segment
    paths: np.ndarray = field(repr=False)
    fp_iterations: int = 0
    y_residual: float = 0.0

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def depth(self) -> int:
        return self.xi.depth

    @property
    def h(self) -> float:
        return self.cfg.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.paths.shape[1] - self.depth + 1, dtype=float)

    def index(self, t: float) -> int:
        n = grid_index(t, self.h)
        if not 0 <= n <= self.paths.shape[1] - self.depth:
            raise ValueError(f"t={t} outside the simulated horizon")
        return n

    def values_at(self, t: float) -> np.ndarray:
        return self.paths[:, self.depth - 1 + self.index(t)]

    def trajectory(self) -> np.ndarray:
        """x at times 0, h, ..., T: (P, N+1, d)."""
        return self.paths[:, self.depth - 1:]

    def segments_at(self, t: float) -> np.ndarray:
        n = self.index(t)
        return self.paths[:, n:n + self.depth]

    def path(self, i: int) -> Path:
        return Path(self.h, self.xi, self.paths[i, self.depth:])


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("NSFDE_THREADS", "1"))
    return max(1, int(threads))


def _run_chunks(n_paths: int, work: Callable[[int, int], None], threads: int,
                chunk: int = CHUNK) -> None:
    bounds = [(i, min(i + chunk, n_paths)) for i in range(0, n_paths, chunk)]
    if threads == 1 or len(bounds) == 1:
        for lo, hi in bounds:
            work(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(work, lo, hi) for lo, hi in bounds]:
            fut.result()


def _chunk_noise(model, cfg, lo, hi, n_steps=None, h=None, seed=None):
    n_steps = cfg.n_steps if n_steps is None else n_steps
    h = cfg.h if h is None else h
    seed = cfg.master_seed if seed is None else seed
    return np.stack([NoiseStream(seed, i, model.noise_dim).increments(n_steps, h)
                     for i in range(lo, hi)])


def _simulate_many(model, xis, n_paths, cfg, threads):
    """Ensembles for several initial data sharing path-wise noise: (len(xis), P, depth+N, d)."""
    depth = xis[0].depth
    N = cfg.n_steps
    out = np.empty((len(xis), n_paths, depth + N, model.dim))
    diag = []

    def work(lo, hi):
        dW = _chunk_noise(model, cfg, lo, hi)
        batch = np.concatenate([np.broadcast_to(x.values, (hi - lo, depth, model.dim))
                                for x in xis])
        try:
            res = _integrate(model, batch, cfg, np.concatenate([dW] * len(xis)))
        except BlowUpError as err:
            paths = sorted({lo + p % (hi - lo) for p in err.paths})
            raise BlowUpError(f"{err} (path indices {paths[:10]})", err.time, paths) from err
        out[:, lo:hi] = res.paths.reshape(len(xis), hi - lo, depth + N, model.dim)
        diag.append((res.fp_iterations, res.y_residual))

    _run_chunks(n_paths, work, resolve_threads(threads))
    iters = max(d[0] for d in diag)
    resid = max(d[1] for d in diag)
    return out, iters, resid


def simulate_ensemble(model: NeutralModel, xi: Segment, n_paths: int, cfg: SchemeConfig,
                      threads: int | None = None, force: bool = False) -> Ensemble:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    _require(model, cfg, xi, force)
    out, iters, resid = _simulate_many(model, [xi], n_paths, cfg, threads)
    return Ensemble(model.name, cfg, xi, out[0], iters, resid)


def simulate_coupled_ensembles(model: NeutralModel, xi: Segment, eta: Segment, n_pairs: int,
                               cfg: SchemeConfig, threads: int | None = None,
                               force: bool = False) -> tuple[Ensemble, Ensemble]:
    """Pairs of solutions from ``xi`` and ``eta``; pair ``i`` shares noise stream ``i``."""
    if xi.values.shape != eta.values.shape:
        raise ValueError("initial data must have the same shape")
    _require(model, cfg, xi, force)
    out, iters, resid = _simulate_many(model, [xi, eta], n_pairs, cfg, threads)
    return (Ensemble(model.name, cfg, xi, out[0], iters, resid),
            Ensemble(model.name, cfg, eta, out[1], iters, resid))


@dataclass
class OrderResult:
    slope: float
    hs: list[float]
    rms_errors: list[float]
    h_ref: float


def strong_order_probe(model: NeutralModel, xi, h_list, T: float, n_paths: int,
                       seed: int = 0, ref_factor: int = 16, drift_implicit: bool = False,
                       force: bool = False) -> OrderResult:
    """Slope of log RMS endpoint error against log h.

    Each level is compared with a reference run at ``min(h_list) / ref_factor``
    driven by the same Brownian increments (fine increments are summed).
    ``xi`` is a constant vector or a function of theta.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least 3 step sizes")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly descending")
    h_ref = h_list[-1] / ref_factor
    ratios = [h / h_ref for h in h_list]
    if any(abs(q - round(q)) > 1e-9 for q in ratios):
        raise ValueError("step sizes must be nested")
    ratios = [int(round(q)) for q in ratios]
    for a, b in zip(ratios, ratios[1:]):
        if a % b:
            raise ValueError("step sizes must be nested")
    coarse = SchemeConfig(h=h_list[0], T=T, drift_implicit=drift_implicit, master_seed=seed)
    span = (history_depth(model, coarse) - 1) * h_list[0]

    def xi_at(h):
        depth = int(round(span / h)) + 1
        if callable(xi):
            return Segment.from_function(xi, h, depth)
        return Segment.constant(np.broadcast_to(np.atleast_1d(xi), (model.dim,)), h, depth)

    n_ref = grid_index(T, h_ref)
    ends = {}
    for h, q in zip(h_list + [h_ref], ratios + [1]):
        cfg = replace(coarse, h=h)
        seg = xi_at(h)
        _require(model, cfg, seg, force)
        out = np.empty((n_paths, model.dim))

        def work(lo, hi, cfg=cfg, seg=seg, q=q):
            fine = _chunk_noise(model, cfg, lo, hi, n_steps=n_ref, h=h_ref, seed=seed)
            dW = fine.reshape(hi - lo, n_ref // q, q, model.noise_dim).sum(axis=2)
            res = _integrate(model, np.broadcast_to(seg.values, (hi - lo,) + seg.values.shape),
                             cfg, dW)
            out[lo:hi] = res.paths[:, -1]

        _run_chunks(n_paths, work, 1, chunk=4096)
        ends[h] = out
    ref = ends[h_ref]
    errs = [float(np.sqrt(np.mean(np.sum((ends[h] - ref) ** 2, axis=1)))) for h in h_list]
    scale = max(1.0, float(np.sqrt(np.mean(np.sum(ref ** 2, axis=1)))))
    if min(errs) <= 1e-12 * scale:  # roundoff only
        raise SchemeError("zero error at some step size: the scheme is exact for this "
                          "model, so no order can be estimated")
    slope = float(np.polyfit(np.log(h_list), np.log(errs), 1)[0])
    return OrderResult(slope, h_list, errs, h_ref)
