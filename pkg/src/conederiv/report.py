"""Experiment configs, suite reports, and their JSON/CSV artifacts."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import scipy

from . import __version__
from .blackbox import worker_count
from .estimators import (
    DEFAULT_OPTIONS,
    DerivativeEstimate,
    Options,
    compose_and_check,
    estimate_directional,
    estimate_tangential,
)
from .fixtures import UnknownFixture, catalog, chain_cases, get_fixture
from .paths import PiecewisePath, interp_deriv, interp_eval, pullback_test
from .sampling import InsufficientSamples, ScaleSchedule, schedule_scales

KINDS = ("estimate", "chain", "path", "suite")
ESTIMATORS = ("tangential", "directional")
CURVE_HEADER = ["level", "delta", "theta", "residual", "growth"]
REPORT_FORMAT = 1


class ConfigError(ValueError):
    """The config file is malformed or violates a schedule/option invariant."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    fixture: Optional[str] = None
    estimators: tuple[str, ...] = ESTIMATORS
    case: Optional[str] = None
    fixtures: Optional[tuple[str, ...]] = None  # suite; None means the whole catalog
    cases: Optional[tuple[str, ...]] = None
    path: Optional[dict] = None
    n_eval: int = 9
    schedule: ScaleSchedule = ScaleSchedule()
    options: Options = DEFAULT_OPTIONS
    seed: int = 0
    out: Optional[str] = None
    expect: dict = field(default_factory=dict)  # entry name -> expected outcome override

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "kind": self.kind,
            "schedule": self.schedule.to_dict(),
            "options": self.options.to_dict(),
            "seed": self.seed,
        }
        if self.kind == "estimate":
            d["fixture"] = self.fixture
            d["estimators"] = list(self.estimators)
        elif self.kind == "chain":
            d["case"] = self.case
        elif self.kind == "path":
            d["path"] = self.path
            d["n_eval"] = self.n_eval
            if self.fixture is not None:
                d["fixture"] = self.fixture
        else:
            d["fixtures"] = None if self.fixtures is None else list(self.fixtures)
            d["cases"] = None if self.cases is None else list(self.cases)
            d["estimators"] = list(self.estimators)
        if self.expect:
            d["expect"] = dict(self.expect)
        return d


def parse_config(data: Any, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Validate a decoded JSON config. Raises :class:`ConfigError` or :class:`UnknownFixture`."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    unknown = set(data.get("schedule", {})) - {"delta0", "theta0", "rho", "levels"}
    if unknown:
        raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
    try:
        sched = ScaleSchedule.from_dict(data.get("schedule", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule: {exc}") from None
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    try:
        opts = Options.from_dict({**data.get("options", {}), "seed": seed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"options: {exc}") from None

    ests = tuple(data.get("estimators", ESTIMATORS))
    bad = [e for e in ests if e not in ESTIMATORS]
    if bad or not ests:
        raise ConfigError(f"estimators must be drawn from {ESTIMATORS}, got {list(ests)}")
    expect = data.get("expect", {})
    if not isinstance(expect, dict):
        raise ConfigError("expect must map entry names to outcomes")

    cat = catalog()
    kw: dict[str, Any] = {}
    if kind == "estimate":
        name = data.get("fixture")
        if not isinstance(name, str):
            raise ConfigError("estimate config needs a fixture name")
        if name not in cat:
            raise UnknownFixture(name)
        kw["fixture"] = name
    elif kind == "chain":
        case = data.get("case")
        if case not in chain_cases():
            raise UnknownFixture(f"unknown chain case {case!r}")
        kw["case"] = case
    elif kind == "path":
        kw["path"] = _load_path_field(data, base_dir)
        n_eval = data.get("n_eval", 9)
        if not isinstance(n_eval, int) or n_eval < 2:
            raise ConfigError("n_eval must be an integer >= 2")
        kw["n_eval"] = n_eval
        if data.get("fixture") is not None:
            if data["fixture"] not in cat:
                raise UnknownFixture(data["fixture"])
            kw["fixture"] = data["fixture"]
    else:
        names = data.get("fixtures")
        if names is not None:
            for n in names:
                if n not in cat:
                    raise UnknownFixture(n)
            kw["fixtures"] = tuple(names)
        cases = data.get("cases")
        if cases is not None:
            known = chain_cases()
            for c in cases:
                if c not in known:
                    raise UnknownFixture(f"unknown chain case {c!r}")
            kw["cases"] = tuple(cases)
    return ExperimentConfig(
        kind, estimators=ests, schedule=sched, options=opts, seed=seed,
        out=data.get("out"), expect=dict(expect), **kw,
    )


def _load_path_field(data: dict, base_dir: Optional[Path]) -> dict:
    if "path" in data:
        p = data["path"]
    elif "path_file" in data:
        f = Path(data["path_file"])
        if base_dir is not None and not f.is_absolute():
            f = base_dir / f
        try:
            p = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read path file {f}: {exc}") from None
    else:
        raise ConfigError("path config needs 'path' or 'path_file'")
    try:
        PiecewisePath.from_dict(p)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid path: {exc}") from None
    return p


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path.parent)


def versions() -> dict:
    return {"conederiv": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "format": REPORT_FORMAT}


@dataclass
class SuiteReport:
    config: dict
    defaults: dict
    versions: dict
    entries: list[dict]

    @property
    def all_passed(self) -> bool:
        return all(e["passed"] for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "defaults": self.defaults,
            "versions": self.versions,
            "entries": self.entries,
            "all_passed": self.all_passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> SuiteReport:
        return cls(d["config"], d["defaults"], d["versions"], d["entries"])

    @classmethod
    def from_json(cls, text: str) -> SuiteReport:
        return cls.from_dict(json.loads(text))


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: SuiteReport, path) -> None:
    write_atomic(path, report.to_json())


def read_report(path) -> SuiteReport:
    return SuiteReport.from_json(Path(path).read_text(encoding="utf-8"))


def strip_wall_clock(d: dict) -> dict:
    """Copy of a report dict with timing fields removed."""
    out = dict(d)
    out["entries"] = [{k: v for k, v in e.items() if k != "wall_clock"} for e in d["entries"]]
    return out


# --- entries -------------------------------------------------------------

def _curves(est: DerivativeEstimate) -> list[dict]:
    return [
        {"level": k, "delta": d, "theta": th, "residual": r, "growth": g}
        for k, ((d, r), (_, g), th) in enumerate(zip(est.residuals, est.growth, est.thetas))
    ]


def _entry(name: str, expected, run: Callable[[], tuple[Any, str, dict]]) -> dict:
    """Run one experiment; sampling failures become failed entries."""
    t0 = time.perf_counter()
    try:
        outcome, reason, extra = run()
        passed = expected is None or outcome == expected
    except InsufficientSamples as exc:
        outcome, reason, extra, passed = "Error", f"sampling failure: {exc}", {}, False
    return {
        "name": name,
        "expected": expected,
        "outcome": outcome,
        "passed": bool(passed),
        "reason": reason,
        **extra,
        "wall_clock": round(time.perf_counter() - t0, 6),
    }


def _estimate_job(fx_name: str, estimator: str, cfg: ExperimentConfig):
    name = f"{fx_name}/{estimator}"
    fx = get_fixture(fx_name)
    expected = cfg.expect.get(name, fx.expected.get(estimator))

    def run():
        fn = estimate_tangential if estimator == "tangential" else estimate_directional
        est = fn(fx.f, fx.base_point, fx.subspace, cfg.schedule, cfg.options)
        extra = {"fixture": fx_name, "estimator": estimator, "L": est.L.matrix.tolist(), "curves": _curves(est)}
        return est.verdict.value, est.reason, extra

    return name, expected, run


def _chain_job(case_name: str, cfg: ExperimentConfig):
    name = f"chain/{case_name}"
    case = chain_cases()[case_name]
    expected = cfg.expect.get(name, "Holds" if case.holds else "Fails")

    def run():
        rep = compose_and_check(case.f, case.g, case.base_point, case.subspace, cfg.schedule, cfg.options)
        ch = rep.chain
        outcome = "Holds" if ch.holds else "Fails"
        if not rep.consistent:
            outcome += " (inconsistent with composite)"
        scales = schedule_scales(cfg.schedule)
        curves = [
            {"level": k, "delta": d, "theta": th, "residual": c, "growth": g}
            for k, ((d, th), (_, c), (_, g)) in enumerate(zip(scales, ch.curve, ch.fixed_curve))
        ]
        extra = {
            "case": case_name,
            "branch": case.branch,
            "composite_verdict": rep.composite.verdict.value,
            "match_error": rep.match_error,
            "min_gain": rep.min_gain,
            "g_lipschitz_bounded": rep.g_lipschitz.bounded,
            "vacuous_levels": ch.vacuous_levels,
            "curves": curves,
        }
        return outcome, ch.reason, extra

    return name, expected, run


def eval_table(p: PiecewisePath, n_eval: int) -> list[list[float]]:
    """Rows ``t, gamma(t), gamma'(t)`` at every knot and ``n_eval - 1`` interior points per segment."""
    tk = np.append(p.knots_t, 0.0)
    ts = []
    for n in range(len(p.knots_t)):
        ts.extend(np.linspace(tk[n], tk[n + 1], n_eval)[:-1].tolist())
    ts.append(0.0)
    ts = np.array(ts)
    X = interp_eval(p, ts)
    D = interp_deriv(p, ts)
    return [[float(t), *x.tolist(), *d.tolist()] for t, x, d in zip(ts, X, D)]


def _path_job(cfg: ExperimentConfig):
    p = PiecewisePath.from_dict(cfg.path)
    jobs = []

    def run_eval():
        X = interp_eval(p, p.knots_t)
        scale = max(1.0, float(np.abs(p.knots_x).max()))
        knot_err = float(np.abs(X - p.knots_x).max()) / scale
        vel_err = float(np.abs(interp_deriv(p, p.knots_t) - p.velocity[None, :]).max())
        ok = knot_err <= 1e-13 and vel_err == 0.0
        extra = {
            "knot_error": knot_err,
            "velocity_error": vel_err,
            "ratio_bound": p.ratio_bound,
            "table": eval_table(p, cfg.n_eval),
        }
        return ("Interpolates" if ok else "Fails"), f"knot error {knot_err:.3g}, velocity error {vel_err:.3g}", extra

    jobs.append(("path/eval", cfg.expect.get("path/eval", "Interpolates"), run_eval))
    if cfg.fixture is not None:
        fx = get_fixture(cfg.fixture)
        name = f"path/pullback/{cfg.fixture}"
        expected = cfg.expect.get(name, fx.expected.get("tangential"))

        def run_pullback():
            est = estimate_tangential(fx.f, fx.base_point, fx.subspace, cfg.schedule, cfg.options)
            res = pullback_test(fx.f, p, est.L, opts=cfg.options, l_error=est.drift)
            curves = [
                {"level": k, "delta": t, "theta": 0.0, "residual": r, "growth": q}
                for k, (t, r, q) in enumerate(zip(res.times, res.residuals, res.quotients))
            ]
            return res.verdict.value, res.reason, {"fixture": cfg.fixture, "curves": curves}

        jobs.append((name, expected, run_pullback))
    return jobs


def _jobs(cfg: ExperimentConfig) -> list[tuple[str, Any, Callable]]:
    if cfg.kind == "estimate":
        return [_estimate_job(cfg.fixture, e, cfg) for e in cfg.estimators]
    if cfg.kind == "chain":
        return [_chain_job(cfg.case, cfg)]
    if cfg.kind == "path":
        return _path_job(cfg)
    names = list(cfg.fixtures) if cfg.fixtures is not None else list(catalog())
    cases = list(cfg.cases) if cfg.cases is not None else list(chain_cases())
    jobs = [_estimate_job(n, e, cfg) for n in names for e in cfg.estimators]
    jobs += [_chain_job(c, cfg) for c in cases]
    return jobs


def run_experiment(cfg: ExperimentConfig) -> SuiteReport:
    jobs = _jobs(cfg)
    workers = min(worker_count(), len(jobs)) or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda j: _entry(*j), jobs))
    else:
        entries = [_entry(*j) for j in jobs]
    defaults = {"schedule": ScaleSchedule().to_dict(), "options": DEFAULT_OPTIONS.to_dict()}
    return SuiteReport(cfg.to_dict(), defaults, versions(), entries)


def with_overrides(cfg: ExperimentConfig, *, seed=None, schedule: Optional[dict] = None, tol_abs=None) -> ExperimentConfig:
    """Apply command-line overrides; invalid schedules raise :class:`ConfigError`."""
    changes: dict[str, Any] = {}
    if schedule:
        try:
            changes["schedule"] = replace(cfg.schedule, **schedule)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"schedule: {exc}") from None
    opts = cfg.options
    if seed is not None:
        changes["seed"] = seed
        opts = replace(opts, seed=seed)
    if tol_abs is not None:
        if not tol_abs > 0:
            raise ConfigError("tol-abs must be positive")
        opts = replace(opts, tol_abs=tol_abs)
    changes["options"] = opts
    return replace(cfg, **changes)


# --- CSV -----------------------------------------------------------------

def sanitize(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("._")
    return s or "experiment"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return repr(v) if isinstance(v, float) else str(v)


def emit_curves(report: SuiteReport, directory) -> list[Path]:
    """One CSV per entry that carries curves; returns the files written."""
    directory = Path(directory)
    with_curves = [e for e in report.entries if e.get("curves")]
    if not with_curves:
        warnings.warn("report has no curves; no CSV files written", stacklevel=2)
        return []
    written = []
    used: set[str] = set()
    for e in with_curves:
        stem = sanitize(e["name"])
        base, i = stem, 1
        while stem in used:
            i += 1
            stem = f"{base}_{i}"
        used.add(stem)
        target = directory / f"{stem}.csv"
        rows = sorted(e["curves"], key=lambda r: r["level"])
        try:
            directory.mkdir(parents=True, exist_ok=True)
            with open(target, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CURVE_HEADER)
                for r in rows:
                    w.writerow([_cell(r[k]) for k in CURVE_HEADER])
        except OSError as exc:
            raise OSError(f"cannot write {target}: {exc}") from exc
        written.append(target)
    return written


def write_table(rows: list[list[float]], m: int, path) -> None:
    header = ["t"] + [f"x{i + 1}" for i in range(m)] + [f"dx{i + 1}" for i in range(m)]
    lines = [",".join(header)] + [",".join(repr(v) for v in r) for r in rows]
    write_atomic(path, "\n".join(lines) + "\n")
