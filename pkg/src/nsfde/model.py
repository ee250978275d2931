"""Structured neutral coefficients, randomized condition checkers and derived constants.

The coefficients are affine in the history plus one pointwise nonlinearity in
the diffusion::

    D(phi)     = kappa @ m(phi)
    b(phi)     = A @ phi(0) + B @ m(phi) + b0
    sigma(phi) = diag(g(phi(0))) @ S + C . m(phi) + sigma0

with ``m(phi) = int phi(theta) mu(d theta)``.  Checker verdicts are
falsification results: "pass" only means no violation turned up in the
sampled segments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fading_memory import Segment, cr_norm_values
from .measures import FadingMeasure, lag_weights, r_moment, required_depth

TOL_CHECK = 1e-9
BDG_FACTOR = 73.0

EPS1_GRID = tuple(float(v) for v in np.logspace(-3, 0, 7))
EPS2_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
EPS_REFINE_STEPS = 12


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise map applied componentwise to ``phi(0)``."""

    kind: str = "zero"
    knots: tuple[float, ...] = ()
    table: tuple[float, ...] = ()

    KINDS = ("zero", "identity", "cos", "sin", "table")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "table":
            k = np.asarray(self.knots, dtype=float)
            if len(k) < 2 or len(k) != len(self.table) or np.any(np.diff(k) <= 0):
                raise ValueError("table nonlinearity needs >= 2 increasing knots and matching values")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "identity":
            return x
        if self.kind == "cos":
            return np.cos(x)
        if self.kind == "sin":
            return np.sin(x)
        return np.interp(x, self.knots, self.table)

    @property
    def lipschitz(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "table":
            return float(np.max(np.abs(np.diff(self.table) / np.diff(self.knots))))
        return 1.0

    def to_json(self):
        if self.kind == "table":
            return {"kind": "table", "knots": list(self.knots), "values": list(self.table)}
        return self.kind

    @classmethod
    def from_json(cls, data) -> "Nonlinearity":
        if isinstance(data, str):
            return cls(data)
        return cls("table", tuple(map(float, data["knots"])), tuple(map(float, data["values"])))


@dataclass(frozen=True)
class DeclaredParams:
    k: float
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    def __post_init__(self):
        if not 0 < self.k < 1:
            raise ValueError(f"k must lie in (0, 1), got {self.k}")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def _matrix(value, shape) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        if len(shape) == 1:
            return np.full(shape, float(arr))
        if len(shape) == 2:
            return float(arr) * np.eye(*shape)
        d, m, _ = shape
        return float(arr) * np.eye(d, m)[:, :, None] * np.eye(d)[:, None, :]
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr.copy()


@dataclass(frozen=True, eq=False)
class NeutralModel:
    mu: FadingMeasure
    r: float
    declared: DeclaredParams
    dim: int = 1
    noise_dim: int = 1
    kappa: np.ndarray = 0.0
    A: np.ndarray = 0.0
    B: np.ndarray = 0.0
    b0: np.ndarray = 0.0
    g: Nonlinearity = field(default_factory=Nonlinearity)
    S: np.ndarray = 0.0
    C: np.ndarray = 0.0
    sigma0: np.ndarray = 0.0
    name: str = "model"

    def __post_init__(self):
        d, m = self.dim, self.noise_dim
        if not self.r > 0:
            raise ValueError("r must be positive")
        for attr, shape in (("kappa", (d, d)), ("A", (d, d)), ("B", (d, d)), ("b0", (d,)),
                            ("S", (d, m)), ("C", (d, m, d)), ("sigma0", (d, m))):
            arr = _matrix(getattr(self, attr), shape)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    # batch evaluation: x0 is (P, d), mem is (P, d) = int phi mu

    def neutral(self, mem: np.ndarray) -> np.ndarray:
        return mem @ self.kappa.T

    def drift(self, x0: np.ndarray, mem: np.ndarray) -> np.ndarray:
        return x0 @ self.A.T + mem @ self.B.T + self.b0

    def diffusion(self, x0: np.ndarray, mem: np.ndarray) -> np.ndarray:
        out = self.g(x0)[:, :, None] * self.S
        if np.any(self.C):
            out = out + np.einsum("ijl,pl->pij", self.C, mem)
        return out + self.sigma0

    def memory(self, values: np.ndarray, h: float) -> np.ndarray:
        """``int phi mu`` for a batch of segment values (P, depth, d)."""
        W = lag_weights(self.mu, h, values.shape[-2])
        return np.einsum("k,...kd->...d", W, values)

    def memory_sq(self, values: np.ndarray, h: float) -> np.ndarray:
        W = lag_weights(self.mu, h, values.shape[-2])
        return np.einsum("k,...k->...", W, np.sum(values ** 2, axis=-1))

    def D(self, seg: Segment) -> np.ndarray:
        return self.neutral(self.memory(seg.values[None], seg.h))[0]

    def b(self, seg: Segment) -> np.ndarray:
        v = seg.values[None]
        return self.drift(v[:, -1], self.memory(v, seg.h))[0]

    def sigma(self, seg: Segment) -> np.ndarray:
        v = seg.values[None]
        return self.diffusion(v[:, -1], self.memory(v, seg.h))[0]

    @property
    def b_at_zero(self) -> np.ndarray:
        return np.array(self.b0)

    @property
    def sigma_at_zero(self) -> np.ndarray:
        return self.g(np.zeros((1, self.dim)))[0][:, None] * self.S + self.sigma0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "noise_dim": self.noise_dim,
            "r": self.r,
            "measure": self.mu.to_json(),
            "D": {"kappa": self.kappa.tolist()},
            "b": {"A": self.A.tolist(), "B": self.B.tolist(), "b0": self.b0.tolist()},
            "sigma": {"g": self.g.to_json(), "S": self.S.tolist(), "C": self.C.tolist(),
                      "sigma0": self.sigma0.tolist()},
            "declared": asdict(self.declared),
        }

    @classmethod
    def from_json(cls, data: dict) -> "NeutralModel":
        def pick(section, allowed, where):
            section = section or {}
            unknown = set(section) - set(allowed)
            if unknown:
                raise ValueError(f"{where}: unknown fields {sorted(unknown)}")
            return section

        pick(data, ("name", "dim", "noise_dim", "r", "measure", "D", "b", "sigma",
                    "declared"), "model")
        D = pick(data.get("D"), ("kappa",), "model.D")
        b = pick(data.get("b"), ("A", "B", "b0"), "model.b")
        s = pick(data.get("sigma"), ("g", "S", "C", "sigma0"), "model.sigma")
        decl = pick(data.get("declared"), ("k", "lambda1", "lambda2", "lambda3", "lambda4"),
                    "model.declared")
        for key in ("r", "measure", "declared"):
            if key not in data:
                raise ValueError(f"model: missing field {key!r}")
        return cls(
            mu=FadingMeasure.from_json(data["measure"]),
            r=float(data["r"]),
            declared=DeclaredParams(**{k: float(v) for k, v in decl.items()}),
            dim=int(data.get("dim", 1)),
            noise_dim=int(data.get("noise_dim", 1)),
            kappa=D.get("kappa", 0.0),
            A=b.get("A", 0.0), B=b.get("B", 0.0), b0=b.get("b0", 0.0),
            g=Nonlinearity.from_json(s.get("g", "zero")),
            S=s.get("S", 0.0), C=s.get("C", 0.0), sigma0=s.get("sigma0", 0.0),
            name=str(data.get("name", "model")),
        )


# ---------------------------------------------------------------- the worked example

def example5_declared(c: float, eps: float, mu2r: float | None = None,
                      variant: str = "published") -> DeclaredParams:
    """Declared constants for the scalar example.

    ``variant="published"`` uses ``(1/4, c, c/4, 1+eps, (1+eps)/eps)``.  The drift pair
    ``(c, c/4)`` is violated by constant difference segments; ``variant="valid"``
    replaces it with ``(c (1 - a/4), c / (4a))``, ``a = sqrt(mu2r)``, which follows
    from Young's inequality and Jensen.
    """
    l3, l4 = 1.0 + eps, (1.0 + eps) / eps
    if variant == "published":
        return DeclaredParams(0.25, c, c / 4.0, l3, l4)
    if variant == "valid":
        a = math.sqrt(mu2r)
        if a >= 4:
            raise ValueError("mu2r >= 16 leaves no valid drift constant")
        return DeclaredParams(0.25, c * (1.0 - a / 4.0), c / (4.0 * a), l3, l4)
    raise ValueError(f"unknown variant {variant!r}")


def example5_model(c: float, eps: float, rho: float, r: float,
                   variant: str = "published") -> NeutralModel:
    """``d[x - D(x_t)] = -c x dt + (cos x + int x_t mu) dw`` with ``D = (1/2) int x_t mu``."""
    if not (c > 0 and eps > 0 and rho > 0 and r > 0):
        raise ValueError("example parameters must be positive")
    if rho <= 2 * r:
        raise ValueError(f"rho={rho} <= 2r={2 * r}: the exponential measure is not in M_2r")
    mu = FadingMeasure.exponential(rho)
    mu2r = r_moment(mu, 2 * r)
    return NeutralModel(
        mu=mu, r=r, declared=example5_declared(c, eps, mu2r, variant),
        kappa=0.5, A=-c, g=Nonlinearity("cos"), S=1.0, C=1.0,
        name=f"example5(c={c:g},eps={eps:g},rho={rho:g},r={r:g})",
    )


def example5_threshold(eps: float, mu2r: float) -> float:
    """Smallest admissible ``c`` claimed for the example."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if mu2r >= 4:
        raise ValueError(f"mu2r={mu2r} >= 4: no admissible c exists")
    return (4 + 146 * (1 + eps) + 146 * (1 + 1 / eps) * mu2r) / (4 - mu2r)


# ---------------------------------------------------------------- random segments

SHAPES = ("constant", "smooth", "piecewise", "spike", "extremal")


def sample_segments(rng: np.random.Generator, n: int, depth: int, h: float, dim: int,
                    r: float) -> tuple[np.ndarray, np.ndarray]:
    """Random segment values (n, depth, dim) and the shape index of each."""
    thetas = -h * np.arange(depth - 1, -1, -1, dtype=float)
    span = max(depth - 1, 1) * h
    kinds = rng.integers(0, len(SHAPES), size=n)
    scale = 10.0 ** rng.uniform(-3, 3, size=(n, 1, 1))
    out = np.empty((n, depth, dim))
    for k in range(len(SHAPES)):
        idx = np.flatnonzero(kinds == k)
        if not len(idx):
            continue
        shape = (len(idx), depth, dim)
        if SHAPES[k] == "constant":
            vals = np.broadcast_to(rng.standard_normal((len(idx), 1, dim)), shape)
        elif SHAPES[k] == "smooth":
            gamma = rng.uniform(0, 1, (len(idx), 1, dim))
            omega = rng.uniform(0, 6 * np.pi / span, (len(idx), 1, dim))
            phase = rng.uniform(0, 2 * np.pi, (len(idx), 1, dim))
            off = rng.standard_normal((len(idx), 1, dim))
            th = thetas[None, :, None]
            vals = off + np.exp(-gamma * r * th) * np.sin(omega * th + phase)
        elif SHAPES[k] == "piecewise":
            cuts = np.sort(rng.integers(0, depth, (len(idx), 3)), axis=1)
            levels = rng.standard_normal((len(idx), 4, dim))
            pos = np.arange(depth)[None, :]
            seg_id = np.sum(pos[:, :, None] >= cuts[:, None, :], axis=2)
            vals = np.take_along_axis(levels, seg_id[:, :, None].repeat(dim, 2), axis=1)
        elif SHAPES[k] == "spike":
            vals = np.zeros(shape)
            lag = np.where(rng.random(len(idx)) < 0.5, 0, rng.integers(0, depth, len(idx)))
            vals[np.arange(len(idx)), depth - 1 - lag] = rng.standard_normal((len(idx), dim))
        else:
            signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
            vals = signs * np.exp(-r * thetas)[None, :, None]
        out[idx] = vals
    return out * scale, kinds


# ---------------------------------------------------------------- checkers

@dataclass
class CheckReport:
    name: str
    statistic: str
    max_value: float
    threshold: float
    passed: bool
    trials: int
    witness: dict | None = None
    note: str = "falsification test: pass means no violation was found among the samples"

    def to_json(self) -> dict:
        out = asdict(self)
        if math.isinf(self.max_value):
            out["max_value"] = "inf"
        return out


def _check_grid(model: NeutralModel, depth: int = 256) -> tuple[float, int]:
    T = required_depth(model.mu, model.r, 1e-8 * r_moment(model.mu, 2 * model.r))
    if T == 0:
        return 1.0, 1
    return T / (depth - 1), depth


def _run_pairs(model, trials, seed, stat_fn, chunk=2048):
    """Evaluate ``stat_fn`` on random segment pairs and keep the worst sample."""
    h, depth = _check_grid(model)
    best_val, best = -math.inf, None
    for ci, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        rng = np.random.default_rng([seed, ci])
        phi, kind_a = sample_segments(rng, n, depth, h, model.dim, model.r)
        delta, kind_b = sample_segments(rng, n, depth, h, model.dim, model.r)
        # a few exact duplicates exercise the phi == psi branch
        delta[rng.random(n) < 0.02] = 0.0
        psi = phi - delta
        stat, lhs, rhs = stat_fn(phi, psi, h)
        i = int(np.argmax(stat))
        if stat[i] > best_val:
            best_val = float(stat[i])
            best = {
                "shape_phi": SHAPES[kind_a[i]], "shape_delta": SHAPES[kind_b[i]],
                "lhs": float(lhs[i]), "rhs": float(rhs[i]),
                "phi": Segment(h, phi[i]), "psi": Segment(h, psi[i]),
            }
    return best_val, best


def _witness_json(w):
    if w is None:
        return None
    out = {k: v for k, v in w.items() if not isinstance(v, Segment)}
    for key in ("phi", "psi"):
        if key in w:
            seg = w[key]
            out[key] = {"h": seg.h, "theta0_value": seg.values[-1].tolist(),
                        "values": seg.values.tolist()}
    return out


def _report(name, statistic, value, threshold, trials, witness):
    passed = bool(value <= threshold)
    return CheckReport(name, statistic, value, threshold, passed, trials,
                       None if passed else _witness_json(witness))


def verify_h1(model: NeutralModel, trials: int = 10_000, seed: int = 0,
              tol: float = TOL_CHECK) -> CheckReport:
    """Max of ``|D(phi)-D(psi)|^2 / int |phi-psi|^2 mu`` against the declared ``k``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def stat(phi, psi, h):
        dD = model.neutral(model.memory(phi, h) - model.memory(psi, h))
        lhs = np.sum(dD ** 2, axis=1)
        rhs = model.memory_sq(phi - psi, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0),
                             np.where(lhs > 0, np.inf, 0.0))
        return ratio, lhs, model.declared.k * rhs

    val, w = _run_pairs(model, trials, seed, stat)
    return _report("h1", "max |D(phi)-D(psi)|^2 / int|phi-psi|^2 dmu", val,
                   model.declared.k * (1 + tol), trials, w)


def _normalised(excess, scale):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, excess / np.where(scale > 0, scale, 1.0),
                        np.where(excess > 0, np.inf, 0.0))


def verify_h2_drift(model: NeutralModel, trials: int = 10_000, seed: int = 0,
                    tol: float = TOL_CHECK) -> CheckReport:
    p = model.declared

    def stat(phi, psi, h):
        m_phi, m_psi = model.memory(phi, h), model.memory(psi, h)
        d0 = phi[:, -1] - psi[:, -1]
        left = d0 - model.neutral(m_phi - m_psi)
        db = model.drift(phi[:, -1], m_phi) - model.drift(psi[:, -1], m_psi)
        lhs = np.sum(left * db, axis=1)
        d0sq = np.sum(d0 ** 2, axis=1)
        memsq = model.memory_sq(phi - psi, h)
        rhs = -p.lambda1 * d0sq + p.lambda2 * memsq
        return _normalised(lhs - rhs, d0sq + memsq), lhs, rhs

    val, w = _run_pairs(model, trials, seed, stat)
    return _report("h2_drift", "max (lhs - rhs) / (|dphi(0)|^2 + int|dphi|^2 dmu)",
                   val, tol, trials, w)


def verify_h2_diffusion(model: NeutralModel, trials: int = 10_000, seed: int = 0,
                        tol: float = TOL_CHECK) -> CheckReport:
    p = model.declared

    def stat(phi, psi, h):
        m_phi, m_psi = model.memory(phi, h), model.memory(psi, h)
        ds = model.diffusion(phi[:, -1], m_phi) - model.diffusion(psi[:, -1], m_psi)
        lhs = np.sum(ds ** 2, axis=(1, 2))
        d0sq = np.sum((phi[:, -1] - psi[:, -1]) ** 2, axis=1)
        memsq = model.memory_sq(phi - psi, h)
        rhs = p.lambda3 * d0sq + p.lambda4 * memsq
        return _normalised(lhs - rhs, d0sq + memsq), lhs, rhs

    val, w = _run_pairs(model, trials, seed, stat)
    return _report("h2_diffusion", "max (lhs - rhs) / (|dphi(0)|^2 + int|dphi|^2 dmu)",
                   val, tol, trials, w)


def monotone_check(model: NeutralModel, ledger: "ConstantLedger", trials: int = 10_000,
                   seed: int = 0, tol: float = TOL_CHECK) -> CheckReport:
    """Randomized test of the one-argument dissipativity inequality with the ledger's constants."""
    h, depth = _check_grid(model)
    best_val, best = -math.inf, None
    chunk = 2048
    for ci, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        rng = np.random.default_rng([seed, ci, 1])
        phi, kinds = sample_segments(rng, n, depth, h, model.dim, model.r)
        phi[0] = 0.0
        m = model.memory(phi, h)
        x0 = phi[:, -1]
        lhs = (2 * np.sum((x0 - model.neutral(m)) * model.drift(x0, m), axis=1)
               + np.sum(model.diffusion(x0, m) ** 2, axis=(1, 2)))
        x0sq = np.sum(x0 ** 2, axis=1)
        memsq = model.memory_sq(phi, h)
        rhs = -ledger.alpha1 * x0sq + ledger.alpha2 * memsq + ledger.N
        stat = _normalised(lhs - rhs, x0sq + memsq + ledger.N)
        i = int(np.argmax(stat))
        if stat[i] > best_val:
            best_val = float(stat[i])
            best = {"shape_phi": SHAPES[kinds[i]], "lhs": float(lhs[i]), "rhs": float(rhs[i]),
                    "phi": Segment(h, phi[i])}
    return _report("monotone", "max (lhs - rhs) / (|phi(0)|^2 + int|phi|^2 dmu + N)",
                   best_val, tol, trials, best)


# ---------------------------------------------------------------- constant ledger

@dataclass
class ConstantLedger:
    eps1: float
    eps2: float
    k: float
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    r: float
    mu2r: float
    alpha1: float
    alpha2: float
    N: float
    M: float
    k1: float
    k2: float
    k3: float
    k4: float
    theorem_margin: float
    lambda_max: float
    lam: float | None
    bracket: float | None
    C1: float | None = None
    C2: float | None = None
    C3: float | None = None
    C4: float | None = None
    C5: float | None = None
    C6: float | None = None
    admissible: bool = False
    reasons: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        for key, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[key] = repr(v)
        return out

    def _need(self):
        if not self.admissible:
            raise ValueError("ledger is not admissible; bounds are undefined")

    def mean_square_bound(self, t, xi_norm2):
        """Bound on E|x(t)|^2."""
        self._need()
        return self.C1 + self.C2 * xi_norm2 * np.exp(-self.lam * np.asarray(t))

    def coupling_bound(self, t, diff_norm2):
        """Bound on E sup |x(t; xi) - x(t; eta)|^2 (squared-norm reading)."""
        self._need()
        return self.C3 * diff_norm2 * np.exp(-self.lam * np.asarray(t))

    def segment_bound(self, t, xi_norm2):
        """Bound on E ||x_t||_r^2; C5 is stored as the coefficient of E||xi||_r^2."""
        self._need()
        return self.C4 + self.C5 * xi_norm2 * np.exp(-self.lam * np.asarray(t))

    def segment_coupling_bound(self, t, diff_norm2):
        self._need()
        return self.C6 * diff_norm2 * np.exp(-self.lam * np.asarray(t))


def _bracket(p: DeclaredParams, M, mu2r, lam, eps1, eps2):
    k = p.k
    return (2 * p.lambda1 - M * lam - 2 * eps1 - BDG_FACTOR * p.lambda3 / (1 - eps2)
            - (2 * p.lambda2 + 2 * k * eps1 + BDG_FACTOR * p.lambda4 / (1 - eps2)) * mu2r)


def constant_ledger(model: NeutralModel, eps1: float | None = None,
                    eps2: float | None = None,
                    lambda_choice: float | None = None) -> ConstantLedger:
    """All derived constants for the declared parameters, with an admissibility verdict.

    Missing ``eps1``/``eps2`` are picked from a coarse grid maximizing the
    positivity bracket; ``lambda`` defaults to half of ``lambda_max``.
    """
    p, r = model.declared, model.r
    k = p.k
    mu2r = r_moment(model.mu, 2 * r)
    if not math.isfinite(mu2r):
        raise ValueError("measure is not in M_2r")
    M = (1 + k) * (1 + mu2r)
    k1 = k * mu2r / (1 - k)
    k2 = 1.0 / (1 - k) ** 2
    margin = (2 * p.lambda1 - BDG_FACTOR * p.lambda3 - 2 * p.lambda2 * mu2r
              - BDG_FACTOR * p.lambda4 * mu2r)
    lambda_max = min(margin / M, 2 * r)
    reasons = []
    lam = None
    if lambda_max > 0:
        if lambda_choice is None:
            lam = lambda_max / 2
        elif 0 < lambda_choice < lambda_max:
            lam = float(lambda_choice)
        else:
            raise ValueError(f"lambda={lambda_choice} outside (0, {lambda_max})")

    if eps1 is None or eps2 is None:
        grid1 = EPS1_GRID if eps1 is None else (eps1,)
        grid2 = EPS2_GRID if eps2 is None else (eps2,)
        lam_eval = 0.0 if lam is None else lam
        free1, free2 = grid1 is EPS1_GRID, grid2 is EPS2_GRID
        eps1, eps2 = max(itertools.product(grid1, grid2),
                         key=lambda e: _bracket(p, M, mu2r, lam_eval, *e))
        # "sufficiently small": the grid floor is arbitrary, so keep shrinking
        # the free epsilons while the bracket is the only obstacle
        shrink = 0
        while (margin > 0 and lam is not None and shrink < EPS_REFINE_STEPS
               and not _bracket(p, M, mu2r, lam, eps1, eps2) > 0 and (free1 or free2)):
            shrink += 1
            eps1 = eps1 / 10 if free1 else eps1
            eps2 = eps2 / 10 if free2 else eps2
    if not eps1 > 0 or not 0 < eps2 < 1:
        raise ValueError("need eps1 > 0 and 0 < eps2 < 1")

    b0sq = float(np.sum(model.b_at_zero ** 2))
    s0sq = float(np.sum(model.sigma_at_zero ** 2))
    alpha1 = 2 * p.lambda1 - 2 * eps1 - p.lambda3 / (1 - eps2)
    alpha2 = 2 * p.lambda2 + 2 * k * eps1 + p.lambda4 / (1 - eps2)
    N = b0sq / eps1 + s0sq / eps2

    if not margin > 0:
        reasons.append(f"2*lambda1 > 73*lambda3 + (2*lambda2 + 73*lambda4)*mu2r fails "
                       f"(margin {margin:.6g})")
    if not k * mu2r < 1:
        reasons.append(f"k*mu2r < 1 fails ({k * mu2r:.6g})")
    bracket = None
    if lam is not None:
        bracket = _bracket(p, M, mu2r, lam, eps1, eps2)
        if not bracket > 0:
            reasons.append(f"eps-dependent bracket is not positive ({bracket:.6g})")
    led = ConstantLedger(eps1=eps1, eps2=eps2, k=k, lambda1=p.lambda1, lambda2=p.lambda2,
                         lambda3=p.lambda3, lambda4=p.lambda4, r=r, mu2r=mu2r,
                         alpha1=alpha1, alpha2=alpha2, N=N, M=M, k1=k1, k2=k2, k3=k1, k4=k2,
                         theorem_margin=margin, lambda_max=lambda_max, lam=lam,
                         bracket=bracket, reasons=reasons)
    led.admissible = not reasons
    if lam is not None:
        inner2 = ((1 + k) * lam + 2 * p.lambda2 + 2 * k * eps1
                  + BDG_FACTOR * p.lambda4 / (1 - eps2))
        inner3 = (1 + k) * lam + 2 * p.lambda2 + BDG_FACTOR * p.lambda4
        led.C1 = 2 * k2 / lam * (BDG_FACTOR * s0sq / eps2 + b0sq / eps1)
        led.C2 = k1 + 2 * k2 * (M + mu2r / (2 * r - lam) * inner2)
        led.C3 = k1 + 2 * k2 * (M + mu2r / (2 * r - lam) * inner3)
        led.C4 = led.C1
        led.C5 = 1 + led.C2
        led.C6 = 1 + led.C3
    return led


# ---------------------------------------------------------------- lemma inequalities

def lemma_neutral_bound(model: NeutralModel, values: np.ndarray, h: float,
                        M: float) -> np.ndarray:
    """``|xi(0) - D(xi)|^2 - M ||xi||_r^2`` per segment; non-positive when the lemma holds."""
    m = model.memory(values, h)
    lhs = np.sum((values[..., -1, :] - model.neutral(m)) ** 2, axis=-1)
    return lhs - M * cr_norm_values(values, h, model.r) ** 2


def neutral_contraction_bound(model: NeutralModel, values_a: np.ndarray,
                              values_b: np.ndarray, h: float) -> np.ndarray:
    """``|D(a) - D(b)|^2 - k mu^(2r) ||a - b||_r^2``."""
    dm = model.memory(values_a - values_b, h)
    lhs = np.sum(model.neutral(dm) ** 2, axis=-1)
    mu2r = r_moment(model.mu, 2 * model.r)
    return lhs - model.declared.k * mu2r * cr_norm_values(values_a - values_b, h, model.r) ** 2
