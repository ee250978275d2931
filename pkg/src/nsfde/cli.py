"""Batch front-end: ``nsfde run <config.json>`` and ``nsfde example5``.

A config is a JSON object::

    {
      "kind": "check" | "constants" | "simulate" | "coupling" | "distribution" | "order" | "example5",
      "model": {...model JSON...} or {"preset": "example5", "c": 450, "eps": 1.41421, "rho": 1, "r": 0.25},
      "scheme": {"h": 0.01, "T": 16, "master_seed": 0, ...},
      "params": {...kind-specific...},
      "out": "results/run1"
    }

Exit codes: 0 when every verdict passes (an inadmissible model or a falsified
hypothesis check of ``example5`` is a finding, not a failure), 2 when a
simulated bound or path inequality is violated or a ``check`` run falsifies a
declared hypothesis, 1 for configuration and runtime errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
import types
import typing
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path as FsPath
from typing import Any

import numpy as np

from . import __version__
from .fading_memory import Segment
from .integrator import (BlowUpError, InadmissibleModelError, SchemeConfig, SchemeError,
                         history_depth, initial_segment, resolve_threads, simulate_ensemble,
                         strong_order_probe)
from .measures import r_moment
from .model import (NeutralModel, constant_ledger, example5_model, example5_threshold,
                    monotone_check, verify_h1, verify_h2_diffusion, verify_h2_drift)
from .stability_lab import (coupling_decay, path_invariants, second_moment_curve,
                            segment_norm_curve, stability_in_distribution_report)

KINDS = ("check", "constants", "simulate", "coupling", "distribution", "order", "example5")

CSV_HELP = """\
output files:
  report.json        verdicts, constants, fitted rates (byte-reproducible)
  metadata.json      timestamp, thread count, command line (not reproducible)
  <curve>.csv        columns t, estimate, stderr, bound, pass
                     (bound empty when no admissible ledger; pass is true/false)
  path_<i>.csv       columns t, x_1..x_d for simulate runs with write_paths > 0
  order.csv          columns h, rms_error
"""


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- strict config parsing


def _coerce(value, tp, where):
    origin = typing.get_origin(tp)
    if tp is Any:
        return value
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        errors = []
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(value, a, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[0] if errors else f"{where}: invalid value")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{where}[{i}]") for i, v in enumerate(value)]
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def build(cls, data, where: str):
    """Instantiate dataclass ``cls`` from JSON, rejecting unknown and mistyped fields."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    by_key = {f.metadata.get("json", f.name): f for f in fields(cls)}
    unknown = sorted(set(data) - set(by_key))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}")
    kwargs = {}
    for key, f in by_key.items():
        if key in data:
            kwargs[f.name] = _coerce(data[key], hints[f.name], f"{where}.{key}")
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"{where}: missing required field {key!r}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _lam():
    return field(default=None, metadata={"json": "lambda"})


@dataclass
class SchemeSpec:
    h: float
    T: float
    fp_tol: float = 1e-12
    fp_max_iter: int = 64
    tol_tail: float = 1e-8
    master_seed: int = 0
    drift_implicit: bool = False
    predictor: bool = False
    blowup: float = 1e12


@dataclass
class Example5Preset:
    preset: str
    c: float
    eps: float
    rho: float
    r: float
    variant: str = "published"


@dataclass
class ConstantsParams:
    eps1: float | None = None
    eps2: float | None = None
    lam: float | None = _lam()


@dataclass
class CheckParams:
    trials: int = 10_000
    eps1: float | None = None
    eps2: float | None = None
    lam: float | None = _lam()


@dataclass
class SimulateParams:
    n_paths: int = 1000
    xi: dict | float = 1.0
    checkpoints: list[float] | None = None
    invariant_paths: int = 20
    write_paths: int = 0
    force: bool = False
    eps1: float | None = None
    eps2: float | None = None
    lam: float | None = _lam()


@dataclass
class CouplingParams:
    n_pairs: int = 1000
    xi: dict | float = 1.0
    eta: dict | float = 0.0
    checkpoints: list[float] | None = None
    window: float = 1.0
    burn_in: float | None = None
    min_rate_fraction: float = 0.8
    force: bool = False
    eps1: float | None = None
    eps2: float | None = None
    lam: float | None = _lam()


@dataclass
class DistributionParams:
    n_paths: int = 1000
    initial_data: list[Any] = field(default_factory=lambda: [1.0, 0.0])
    checkpoints: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    family_size: int = 1000
    tolerance: float = 0.05
    force: bool = False


@dataclass
class OrderParams:
    h_list: list[float]
    n_paths: int = 200
    xi: dict | float = 1.0
    ref_factor: int = 16
    force: bool = False


@dataclass
class Example5Params:
    c: float = 450.0
    eps: float = math.sqrt(2.0)
    rho: float = 1.0
    r: float = 0.25
    variant: str = "published"
    n_paths: int = 2000
    trials: int = 10_000
    checkpoints: list[float] | None = None  # default: 1, 2, 4, ... up to T
    family_size: int = 1000
    window: float = 1.0
    min_rate_fraction: float = 0.8
    invariant_paths: int = 20
    eps1: float | None = None
    eps2: float | None = None
    lam: float | None = _lam()


PARAMS = {"check": CheckParams, "constants": ConstantsParams, "simulate": SimulateParams,
          "coupling": CouplingParams, "distribution": DistributionParams,
          "order": OrderParams, "example5": Example5Params}

EXAMPLE5_SCHEME = {"h": 0.01, "T": 16.0, "drift_implicit": True}


@dataclass
class ExperimentConfig:
    kind: str
    params: Any
    model: NeutralModel | None
    scheme: SchemeConfig | None
    out: str | None
    base_dir: FsPath


def parse_config(data: dict, base_dir: FsPath = FsPath("."), seed: int | None = None
                 ) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    unknown = sorted(set(data) - {"kind", "model", "scheme", "params", "out"})
    if unknown:
        raise ConfigError(f"config: unknown field(s) {unknown}")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"config.kind: expected one of {list(KINDS)}, got {kind!r}")
    params = build(PARAMS[kind], data.get("params"), "config.params")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("config.out: expected a string")

    model = None
    if kind == "example5":
        if "model" in data:
            raise ConfigError("config.model: example5 builds its own model from params")
        try:
            model = example5_model(params.c, params.eps, params.rho, params.r, params.variant)
        except ValueError as exc:
            raise ConfigError(f"config.params: {exc}") from exc
    else:
        if "model" not in data:
            raise ConfigError("config: missing required field 'model'")
        model = parse_model(data["model"])

    scheme = None
    raw_scheme = data.get("scheme")
    if kind == "example5":
        raw_scheme = {**EXAMPLE5_SCHEME, **(raw_scheme or {})}
    if raw_scheme is not None:
        spec = build(SchemeSpec, raw_scheme, "config.scheme")
        if seed is not None:
            spec.master_seed = seed
        try:
            scheme = SchemeConfig(**asdict(spec))
        except ValueError as exc:
            raise ConfigError(f"config.scheme: {exc}") from exc
    elif kind in ("simulate", "coupling", "distribution", "order"):
        raise ConfigError(f"config: kind {kind!r} needs a 'scheme'")
    return ExperimentConfig(kind, params, model, scheme, out, base_dir)


def parse_model(data) -> NeutralModel:
    if isinstance(data, dict) and "preset" in data:
        p = build(Example5Preset, data, "config.model")
        if p.preset != "example5":
            raise ConfigError(f"config.model.preset: unknown preset {p.preset!r}")
        try:
            return example5_model(p.c, p.eps, p.rho, p.r, p.variant)
        except ValueError as exc:
            raise ConfigError(f"config.model: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config.model: expected an object")
    try:
        return NeutralModel.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config.{exc}" if str(exc).startswith("model") else
                          f"config.model: {exc}") from exc


def initial_data(spec, model: NeutralModel, scheme: SchemeConfig, base_dir: FsPath,
                 where: str) -> Segment:
    """``1.0`` / ``[1, 2]`` / ``{"constant": v}`` / ``{"csv": "file.csv"}``.

    A CSV history shorter than the memory window is extended backwards by its
    oldest value.
    """
    if isinstance(spec, (int, float, list)) and not isinstance(spec, bool):
        spec = {"constant": spec}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"{where}: expected a number or an object with 'constant' or 'csv'")
    (key, value), = spec.items()
    if key == "constant":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        if v.size not in (1, model.dim):
            raise ConfigError(f"{where}.constant: expected {model.dim} value(s)")
        return initial_segment(model, scheme, np.broadcast_to(v, (model.dim,)))
    if key == "csv":
        try:
            seg = Segment.from_csv((base_dir / value).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where}.csv: {exc}") from exc
        if seg.dim != model.dim:
            raise ConfigError(f"{where}.csv: dimension {seg.dim} != model dimension")
        if seg.depth > 1 and not math.isclose(seg.h, scheme.h, rel_tol=1e-9):
            raise ConfigError(f"{where}.csv: grid step {seg.h} != scheme h {scheme.h}")
        need = history_depth(model, scheme)
        vals = seg.values
        if vals.shape[0] < need:
            pad = np.repeat(vals[:1], need - vals.shape[0], axis=0)
            vals = np.vstack([pad, vals])
        return Segment(scheme.h, vals)
    raise ConfigError(f"{where}: unknown initial data kind {key!r}")


# ---------------------------------------------------------------- experiments


@dataclass
class Outcome:
    report: dict
    files: dict[str, str] = field(default_factory=dict)

    @property
    def code(self) -> int:
        return exit_code(self.report)


def exit_code(report: dict) -> int:
    """2 when the report records a violation, else 0."""
    return 2 if report.get("violation") else 0


def _ledger(model, p):
    try:
        return constant_ledger(model, p.eps1, p.eps2, p.lam)
    except ValueError as exc:
        raise ConfigError(f"config.params: {exc}") from exc


def _checkpoints(p, scheme):
    ts = p.checkpoints
    if ts is None:
        n = scheme.n_steps
        ts = [scheme.h * i for i in range(max(1, n // 16), n + 1, max(1, n // 16))]
    if any(t <= 0 or t > scheme.T + 0.5 * scheme.h for t in ts):
        raise ConfigError("config.params.checkpoints: must lie in (0, T]")
    return [float(t) for t in ts]


def run_constants(cfg: ExperimentConfig, threads: int) -> Outcome:
    led = _ledger(cfg.model, cfg.params)
    return Outcome({"ledger": led.to_json(), "admissible": led.admissible, "violation": False})


def _hchecks(model, trials, seed):
    return [verify_h1(model, trials, seed), verify_h2_drift(model, trials, seed + 1),
            verify_h2_diffusion(model, trials, seed + 2)]


def run_check(cfg: ExperimentConfig, threads: int) -> Outcome:
    p = cfg.params
    seed = cfg.scheme.master_seed if cfg.scheme else 0
    reports = _hchecks(cfg.model, p.trials, seed)
    led = _ledger(cfg.model, p)
    reports.append(monotone_check(cfg.model, led, p.trials, seed + 3))
    return Outcome({"checks": [c.to_json() for c in reports], "ledger": led.to_json(),
                    "admissible": led.admissible,
                    "violation": not all(c.passed for c in reports)})


def _simulate_block(model, led, scheme, xi, n_paths, ts, invariant_paths, threads, force):
    ens = simulate_ensemble(model, xi, n_paths, scheme, threads, force)
    curves = [second_moment_curve(ens, ts, led, model.r),
              segment_norm_curve(ens, model.r, ts, led)]
    inv = path_invariants(model, ens, led, invariant_paths) if invariant_paths > 0 else []
    violation = any(not c.passed for c in curves) or any(not i.passed for i in inv)
    rep = {"curves": [c.summary() for c in curves],
           "invariants": [i.to_json() for i in inv],
           "fixed_point_iterations_max": ens.fp_iterations,
           "y_residual_max": ens.y_residual,
           "xi_norm2": float(np.max(np.sum(xi.values ** 2, axis=1))),
           "violation": violation}
    files = {f"{c.name}.csv": c.to_csv() for c in curves}
    return ens, rep, files


def run_simulate(cfg: ExperimentConfig, threads: int) -> Outcome:
    p, model, scheme = cfg.params, cfg.model, cfg.scheme
    led = _ledger(model, p)
    xi = initial_data(p.xi, model, scheme, cfg.base_dir, "config.params.xi")
    ts = _checkpoints(p, scheme)
    ens, rep, files = _simulate_block(model, led, scheme, xi, p.n_paths, ts,
                                      p.invariant_paths, threads, p.force)
    for i in range(min(p.write_paths, ens.n_paths)):
        files[f"path_{i}.csv"] = ens.path(i).to_csv()
    rep.update({"ledger": led.to_json(), "admissible": led.admissible,
                "bounds_checked": led.admissible})
    return Outcome(rep, files)


def _coupling_block(model, led, scheme, xi, eta, p, ts, threads, force):
    res = coupling_decay(model, xi, eta, scheme, p.n_pairs if hasattr(p, "n_pairs")
                         else p.n_paths, led, ts, window=p.window,
                         burn_in=getattr(p, "burn_in", None), threads=threads, force=force)
    lam = led.lam if led.admissible else None
    rep = res.summary(lam)
    rate_ok = True
    if lam is not None and res.fit is not None:
        rate_ok = res.fit.rate >= p.min_rate_fraction * lam
        rep["rate_ok"] = rate_ok
    rep["violation"] = (not res.identical) and (not res.passed or not rate_ok)
    files = {f"{c.name}.csv": c.to_csv() for c in (res.literal, res.envelope, res.segment)}
    return rep, files


def run_coupling(cfg: ExperimentConfig, threads: int) -> Outcome:
    p, model, scheme = cfg.params, cfg.model, cfg.scheme
    led = _ledger(model, p)
    xi = initial_data(p.xi, model, scheme, cfg.base_dir, "config.params.xi")
    eta = initial_data(p.eta, model, scheme, cfg.base_dir, "config.params.eta")
    rep, files = _coupling_block(model, led, scheme, xi, eta, p, _checkpoints(p, scheme),
                                 threads, p.force)
    rep.update({"ledger": led.to_json(), "admissible": led.admissible})
    return Outcome(rep, files)


def run_distribution(cfg: ExperimentConfig, threads: int) -> Outcome:
    p, model, scheme = cfg.params, cfg.model, cfg.scheme
    xis = [initial_data(s, model, scheme, cfg.base_dir, f"config.params.initial_data[{i}]")
           for i, s in enumerate(p.initial_data)]
    rep = stability_in_distribution_report(model, xis, scheme, _checkpoints(p, scheme),
                                           p.n_paths, p.family_size, None, p.tolerance,
                                           threads, p.force)
    out = rep.to_json()
    out["violation"] = not rep.passed
    return Outcome(out, {"dl.json": dumps(rep.to_json())})


def run_order(cfg: ExperimentConfig, threads: int) -> Outcome:
    p, model, scheme = cfg.params, cfg.model, cfg.scheme
    xi = p.xi if not isinstance(p.xi, dict) else p.xi.get("constant")
    if xi is None:
        raise ConfigError("config.params.xi: order probes take constant initial data")
    try:
        res = strong_order_probe(model, xi, p.h_list, scheme.T, p.n_paths,
                                 scheme.master_seed, p.ref_factor, scheme.drift_implicit,
                                 p.force)
    except ValueError as exc:
        if isinstance(exc, InadmissibleModelError):
            raise
        raise ConfigError(f"config.params: {exc}") from exc
    lines = ["h,rms_error"] + [f"{h!r},{e!r}" for h, e in zip(res.hs, res.rms_errors)]
    return Outcome({"slope": res.slope, "h": res.hs, "rms_error": res.rms_errors,
                    "h_ref": res.h_ref, "violation": False},
                   {"order.csv": "\n".join(lines) + "\n"})


def run_example5(cfg: ExperimentConfig, threads: int) -> Outcome:
    p, model, scheme = cfg.params, cfg.model, cfg.scheme
    mu2r = r_moment(model.mu, 2 * p.r)
    try:
        threshold = example5_threshold(p.eps, mu2r)
    except ValueError:
        threshold = math.inf
    led = _ledger(model, p)
    seed = scheme.master_seed
    checks = _hchecks(model, p.trials, seed)
    checks.append(monotone_check(model, led, p.trials, seed + 3))
    report = {"parameters": {"c": p.c, "eps": p.eps, "rho": p.rho, "r": p.r,
                             "variant": p.variant, "mu2r": mu2r},
              "threshold_c": threshold, "above_threshold": p.c > threshold,
              "checks": [c.to_json() for c in checks],
              "hypotheses_falsified": [c.name for c in checks if not c.passed],
              "ledger": led.to_json(), "admissible": led.admissible}
    files = {}
    violation = False
    if not led.admissible:
        report["simulation"] = "skipped: ledger inadmissible, no bounds to verify"
    else:
        ts = p.checkpoints or ([2.0 ** j for j in range(int(math.log2(scheme.T)) + 1)]
                               if scheme.T >= 1 else [scheme.T])
        ts = _checkpoints(replace(p, checkpoints=ts), scheme)
        xi = initial_segment(model, scheme, 1.0)
        eta = initial_segment(model, scheme, 0.0)
        _, sim, f1 = _simulate_block(model, led, scheme, xi, p.n_paths, ts,
                                     p.invariant_paths, threads, True)
        coup, f2 = _coupling_block(model, led, scheme, xi, eta, p, ts, threads, True)
        dl = stability_in_distribution_report(model, [xi, eta], scheme, ts, p.n_paths,
                                              p.family_size, None, 0.05, threads, True)
        report.update({"mean_square": sim, "coupling": coup, "distribution": dl.to_json()})
        files.update(f1)
        files.update(f2)
        files["dl.json"] = dumps(dl.to_json())
        violation = sim["violation"] or coup["violation"] or not dl.passed
    findings = []
    if report["hypotheses_falsified"]:
        findings.append("declared constants falsified by randomized checks: "
                        + ", ".join(report["hypotheses_falsified"]))
    if not led.admissible:
        findings.append("ledger inadmissible: " + "; ".join(led.reasons))
    report["findings"] = findings
    report["violation"] = violation
    return Outcome(report, files)


RUNNERS = {"check": run_check, "constants": run_constants, "simulate": run_simulate,
           "coupling": run_coupling, "distribution": run_distribution, "order": run_order,
           "example5": run_example5}


def execute(cfg: ExperimentConfig, threads: int = 1) -> Outcome:
    out = RUNNERS[cfg.kind](cfg, threads)
    head = {"kind": cfg.kind, "version": __version__}
    if cfg.model is not None:
        head["model"] = cfg.model.to_json()
    if cfg.scheme is not None:
        head["scheme"] = asdict(cfg.scheme)
    head["params"] = {f.metadata.get("json", f.name): getattr(cfg.params, f.name)
                      for f in fields(cfg.params)}
    out.report = {**head, **out.report}
    return out


# ---------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write(path: FsPath, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out_dir: FsPath, outcome: Outcome, meta: dict) -> None:
    for name, text in sorted(outcome.files.items()):
        atomic_write(out_dir / name, text)
    atomic_write(out_dir / "report.json", dumps(outcome.report))
    atomic_write(out_dir / "metadata.json", dumps(meta))


def run(config_path: str, out: str | None = None, seed: int | None = None,
        threads: int | None = None, argv=None) -> int:
    """Run one config file; returns the exit code."""
    try:
        path = FsPath(config_path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: malformed JSON at line {exc.lineno} "
                              f"column {exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        cfg = parse_config(data, path.parent, seed)
        return _run_parsed(cfg, out, threads, argv)
    except ConfigError as exc:
        print(f"nsfde: configuration error: {exc}", file=sys.stderr)
        return 1


def _run_parsed(cfg: ExperimentConfig, out: str | None, threads: int | None, argv) -> int:
    k = resolve_threads(threads)
    out_dir = FsPath(out or cfg.out or "nsfde_out")
    try:
        outcome = execute(cfg, k)
    except ConfigError as exc:
        print(f"nsfde: configuration error: {exc}", file=sys.stderr)
        return 1
    except InadmissibleModelError as exc:
        print(f"nsfde: {exc}", file=sys.stderr)
        return 1
    except (SchemeError, BlowUpError) as exc:
        print(f"nsfde: simulation error: {exc}", file=sys.stderr)
        return 1
    meta = {"created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "threads": k, "argv": list(argv or sys.argv), "exit_code": outcome.code}
    try:
        write_outputs(out_dir, outcome, meta)
    except OSError as exc:
        print(f"nsfde: cannot write outputs: {exc}", file=sys.stderr)
        return 1
    verdict = {0: "all verdicts pass", 2: "bound violation detected"}[outcome.code]
    print(f"nsfde {cfg.kind}: {verdict}; artifacts in {out_dir}")
    for finding in outcome.report.get("findings", []):
        print(f"  finding: {finding}")
    return outcome.code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nsfde", description="Stability experiments for neutral stochastic functional "
        "differential equations with fading memory.", epilog=CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override scheme.master_seed")
        p.add_argument("--threads", type=int,
                       help="worker threads (default: $NSFDE_THREADS or 1)")

    p_run = sub.add_parser("run", help="run an experiment config", epilog=CSV_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
    p_run.add_argument("config")
    common(p_run)

    p_ex = sub.add_parser("example5", help="the scalar worked example end to end",
                          epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p_ex.add_argument("--c", type=float, default=450.0)
    p_ex.add_argument("--eps", type=float, default=math.sqrt(2.0))
    p_ex.add_argument("--rho", type=float, default=1.0)
    p_ex.add_argument("--r", type=float, default=0.25)
    p_ex.add_argument("--variant", choices=("published", "valid"), default="published",
                      help="declared drift constants: as published, or the corrected pair")
    p_ex.add_argument("--paths", type=int, default=2000)
    p_ex.add_argument("--trials", type=int, default=10_000)
    p_ex.add_argument("--h", type=float, default=0.01)
    p_ex.add_argument("--T", type=float, default=16.0)
    p_ex.add_argument("--family-size", type=int, default=1000)
    p_ex.add_argument("--explicit", action="store_true",
                      help="explicit drift (unstable when c*h is large)")
    common(p_ex)

    args = parser.parse_args(argv)
    argv_list = list(sys.argv if argv is None else ["nsfde", *argv])
    if args.command == "run":
        return run(args.config, args.out, args.seed, args.threads, argv_list)
    data = {"kind": "example5",
            "scheme": {"h": args.h, "T": args.T, "drift_implicit": not args.explicit},
            "params": {"c": args.c, "eps": args.eps, "rho": args.rho, "r": args.r,
                       "variant": args.variant, "n_paths": args.paths,
                       "trials": args.trials, "family_size": args.family_size}}
    try:
        cfg = parse_config(data, FsPath("."), args.seed)
    except ConfigError as exc:
        print(f"nsfde: configuration error: {exc}", file=sys.stderr)
        return 1
    return _run_parsed(cfg, args.out or "nsfde_example5", args.threads, argv_list)


if __name__ == "__main__":
    sys.exit(main())
