"""Sampling-based decision procedures for directional and tangential derivatives.

Every procedure walks a :class:`ScaleSchedule` from coarse to fine. A candidate
derivative ``L`` is fitted by weighted least squares on the two finest levels
and then scored at every level by the worst definitional ratio

    ||f(x) - f(a) - L[v]|| / ||x - a||,   v = P_V(x - a).

Verdict rule (``Options`` holds the constants):

* Divergent if the cone growth ``max ||f(x) - f(a)|| / ||x - a||`` exceeds
  ``cap`` or rises by ``divergence_factor`` along a strictly increasing run
  of at least three levels.
* Differentiable if the finest residual is below ``tol_abs``, the residuals
  over the finest half of the levels are nonincreasing up to ``slack``, and
  refitting on the finest level alone moves ``L`` by less than ``refit_drift``.
* Inconclusive otherwise.

Residuals use apertures ``theta_k = theta0 * rho**k`` that shrink with the
radius. Growth is measured in a cone of fixed aperture ``theta0``: a coupled
aperture would hide growth like ``theta * r**-alpha`` whenever ``alpha < 1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .blackbox import BlackBoxFn, compose
from .linalg import LinearMap, Subspace, as_vec, min_gain, operator_norm
from .sampling import Cloud, InsufficientSamples, ScaleSchedule, build_cloud, schedule_scales

NOISE = 1e-12


class Verdict(str, Enum):
    DIFFERENTIABLE = "Differentiable"
    DIVERGENT = "Divergent"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Options:
    tol_abs: float = 1e-3
    slack: float = 1.1
    refit_drift: float = 0.05
    divergence_factor: float = 2.0
    cap: float = 1e6
    n_dirs: int = 6
    n_apertures: int = 4
    n_perp: int = 4
    min_fraction: float = 0.25
    seed: int = 0
    match_tol: float = 1e-5
    gain_tol: float = 1e-8
    resolution: float = 1e-7  # residual changes below this are not resolved

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> Options:
        fields = cls.__dataclass_fields__
        unknown = set(data) - set(fields)
        if unknown:
            raise ValueError(f"unknown options: {sorted(unknown)}")
        return replace(cls(), **data)


DEFAULT_OPTIONS = Options()


@dataclass(frozen=True, eq=False)
class DerivativeEstimate:
    L: LinearMap
    residuals: list[tuple[float, float]]
    growth: list[tuple[float, float]]
    verdict: Verdict
    reason: str
    thetas: list[float] = field(default_factory=list)
    growth_theta: float = 0.0
    drift: float = 0.0  # ||L_finest - L||, a proxy for the error in L

    @property
    def differentiable(self) -> bool:
        return self.verdict is Verdict.DIFFERENTIABLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "L": self.L.to_dict(),
            "residuals": [[d, r] for d, r in self.residuals],
            "growth": [[d, g] for d, g in self.growth],
            "thetas": list(self.thetas),
            "growth_theta": self.growth_theta,
            "drift": self.drift,
        }


def residual_rule(values: Sequence[float], opts: Options, floor: float = 0.0) -> tuple[bool, str]:
    """Finest value below ``tol_abs`` and nonincreasing (up to slack) over the finest half.

    ``floor`` is the resolution of the residuals themselves: rises smaller than it are ignored.
    """
    vals = list(values)
    h = math.ceil(len(vals) / 2)
    tail = vals[-h:]
    if vals[-1] > opts.tol_abs:
        return False, f"finest residual {vals[-1]:.3g} above tol_abs {opts.tol_abs:g}"
    for i in range(len(tail) - 1):
        if tail[i + 1] > opts.slack * tail[i] + NOISE + opts.resolution + floor:
            return False, f"residual rises from {tail[i]:.3g} to {tail[i + 1]:.3g} in the finest levels"
    return True, f"finest residual {vals[-1]:.3g} <= {opts.tol_abs:g}, nonincreasing"


def divergence_rule(values: Sequence[float], opts: Options) -> tuple[bool, str]:
    vals = [v for v in values if v is not None]
    for v in vals:
        if v > opts.cap:
            return True, f"growth {v:.3g} exceeds cap {opts.cap:g}"
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or not vals[i] > vals[i - 1] * (1 + 1e-9) + NOISE:
            # strictly increasing run vals[start..i-1]
            if i - 1 - start >= 2 and vals[start] > NOISE:
                factor = vals[i - 1] / vals[start]
                if factor >= opts.divergence_factor:
                    return True, (
                        f"growth rises by {factor:.3g}x over levels {start}..{i - 1}"
                    )
            start = i
    return False, "growth bounded"


def _fit(
    coords: np.ndarray, df: np.ndarray, radius: np.ndarray, extra: Optional[np.ndarray] = None
) -> np.ndarray:
    """Weighted least squares ``df ~ coords @ X.T``; returns ``X`` (n x k).

    Rows are divided by the radius so each sample enters as its definitional ratio.
    ``extra`` columns are nuisance regressors whose coefficients are discarded.
    """
    k = coords.shape[1]
    design = coords if extra is None else np.hstack([coords, extra])
    w = 1.0 / radius
    sol, *_ = np.linalg.lstsq(design * w[:, None], df * w[:, None], rcond=None)
    return sol[:k].T


@dataclass
class _Level:
    delta: float
    theta: float
    cloud: Cloud
    df: np.ndarray


def _level_clouds(f, a, fa, V, sched, opts, theta_of, ray=None) -> list[_Level]:
    out = []
    for k, (delta, theta) in enumerate(schedule_scales(sched)):
        th = theta_of(k, theta)
        cloud = build_cloud(
            a, V, delta, th,
            n_dirs=opts.n_dirs, n_apertures=opts.n_apertures, n_perp=opts.n_perp,
            domain=f.domain, seed=opts.seed, min_fraction=opts.min_fraction, ray=ray,
        )
        df = f.many(cloud.points) - fa[None, :]
        if not np.all(np.isfinite(df)):
            raise ValueError(f"f returned non-finite values in the cone at delta = {delta:g}")
        out.append(_Level(delta, th, cloud, df))
    return out


def _estimate(
    f: BlackBoxFn,
    a,
    V: Subspace,
    sched: ScaleSchedule,
    opts: Options,
    *,
    directional: bool,
    ray: Optional[np.ndarray] = None,
) -> DerivativeEstimate:
    a = as_vec(a, f.m)
    if V.ambient_dim != f.m:
        raise ValueError(f"subspace lives in R^{V.ambient_dim}, f takes R^{f.m}")
    scales = schedule_scales(sched)
    if V.dim == 0:
        return DerivativeEstimate(
            LinearMap.zero(V, f.n),
            [(d, 0.0) for d, _ in scales],
            [(d, 0.0) for d, _ in scales],
            Verdict.DIFFERENTIABLE,
            "vacuous: V = {0} admits no sample with x != a in a cone of aperture < 1",
            [0.0] * len(scales),
            0.0,
        )
    fa = f(a)
    if not np.all(np.isfinite(fa)):
        raise ValueError(f"f(a) = {fa.tolist()} is not finite")

    if directional:
        levels = _level_clouds(f, a, fa, V, sched, opts, lambda k, th: 0.0, ray)
        growth_levels = levels
        growth_theta = 0.0
    else:
        levels = _level_clouds(f, a, fa, V, sched, opts, lambda k, th: th, ray)
        growth_theta = sched.theta0
        growth_levels = _level_clouds(f, a, fa, V, sched, opts, lambda k, th: sched.theta0, ray)

    def extra(lv_list):
        if ray is None:
            return None
        c = np.concatenate([lv.cloud.vcoords for lv in lv_list])
        return c**2

    fine = levels[-2:]
    coords = np.concatenate([lv.cloud.vcoords for lv in fine])
    df = np.concatenate([lv.df for lv in fine])
    rad = np.concatenate([lv.cloud.radius for lv in fine])
    mat = _fit(coords, df, rad, extra(fine))
    if np.linalg.matrix_rank(coords) < V.dim:
        raise InsufficientSamples(coords.shape[0], V.dim, "samples do not span V")
    L = LinearMap(V, mat)
    last = levels[-1]
    mat_fine = _fit(last.cloud.vcoords, last.df, last.cloud.radius, extra([last]))

    residuals, growth = [], []
    for lv in levels:
        pred = lv.cloud.vcoords @ mat.T
        r = np.linalg.norm(lv.df - pred, axis=1) / lv.cloud.radius
        residuals.append((lv.delta, float(r.max())))
    for lv in growth_levels:
        g = np.linalg.norm(lv.df, axis=1) / lv.cloud.radius
        growth.append((lv.delta, float(g.max())))

    drift = float(np.linalg.norm(mat_fine - mat))
    drift_ok = drift <= opts.refit_drift * max(operator_norm(L), opts.tol_abs)
    verdict, reason = decide([r for _, r in residuals], [g for _, g in growth], drift_ok, drift, opts)
    return DerivativeEstimate(
        L, residuals, growth, verdict, reason,
        [lv.theta for lv in levels], growth_theta, drift,
    )


def decide(
    residuals, growth, drift_ok: bool, drift: float, opts: Options, floor: float = 0.0
) -> tuple[Verdict, str]:
    div, why = divergence_rule(growth, opts)
    if div:
        return Verdict.DIVERGENT, why
    ok, why = residual_rule(residuals, opts, floor)
    if ok and drift_ok:
        return Verdict.DIFFERENTIABLE, why
    if ok:
        return Verdict.INCONCLUSIVE, f"refit on the finest level drifts by {drift:.3g}"
    return Verdict.INCONCLUSIVE, why


def estimate_tangential(
    f: BlackBoxFn, a, V: Subspace, sched: ScaleSchedule = ScaleSchedule(), opts: Options = DEFAULT_OPTIONS
) -> DerivativeEstimate:
    """Fit ``L`` on sharp cones around ``a + V`` and classify."""
    return _estimate(f, a, V, sched, opts, directional=False)


def estimate_directional(
    f: BlackBoxFn, a, V: Subspace, sched: ScaleSchedule = ScaleSchedule(), opts: Options = DEFAULT_OPTIONS
) -> DerivativeEstimate:
    """Same pipeline restricted to the affine slice ``a + V``."""
    return _estimate(f, a, V, sched, opts, directional=True)


def cone_growth(
    f: BlackBoxFn,
    a,
    V: Subspace,
    sched: ScaleSchedule = ScaleSchedule(),
    opts: Options = DEFAULT_OPTIONS,
    *,
    fixed_aperture: bool = True,
) -> tuple[list[tuple[float, float]], float]:
    """Growth curve and its log-log slope over the finest half of the levels."""
    a = as_vec(a, f.m)
    fa = f(a)
    theta_of = (lambda k, th: sched.theta0) if fixed_aperture else (lambda k, th: th)
    levels = _level_clouds(f, a, fa, V, sched, opts, theta_of)
    curve = []
    for lv in levels:
        if len(lv.cloud) == 0:
            curve.append((lv.delta, 0.0))
            continue
        g = np.linalg.norm(lv.df, axis=1) / lv.cloud.radius
        curve.append((lv.delta, float(g.max())))
    h = math.ceil(len(curve) / 2)
    tail = [(d, g) for d, g in curve[-h:] if g > 0]
    if len(tail) < 2:
        return curve, 0.0
    slope = np.polyfit(np.log([d for d, _ in tail]), np.log([g for _, g in tail]), 1)[0]
    return curve, float(slope)


@dataclass(frozen=True, eq=False)
class DirectionResult:
    direction: np.ndarray
    estimate: Optional[DerivativeEstimate]
    value: Optional[np.ndarray]  # L[v] along the ray
    error: str = ""

    @property
    def differentiable(self) -> bool:
        return self.estimate is not None and self.estimate.differentiable

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.tolist(),
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
            "value": None if self.value is None else self.value.tolist(),
            "error": self.error,
        }


@dataclass(frozen=True, eq=False)
class DirectionProfile:
    entries: list[DirectionResult]
    linear_fit: Optional[LinearMap]
    linearity_residual: float

    @property
    def all_differentiable(self) -> bool:
        return all(e.differentiable for e in self.entries)

    def predicts_differentiable(self, opts: Options = DEFAULT_OPTIONS) -> bool:
        return self.all_differentiable and self.linearity_residual <= opts.tol_abs

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "linear_fit": None if self.linear_fit is None else self.linear_fit.to_dict(),
            "linearity_residual": self.linearity_residual,
        }


def per_direction_profile(
    f: BlackBoxFn,
    a,
    V: Subspace,
    dirs: Sequence,
    sched: ScaleSchedule = ScaleSchedule(),
    opts: Options = DEFAULT_OPTIONS,
) -> DirectionProfile:
    """One-sided limits along each ray ``a + t v`` plus a single linear fit through them.

    Each ray uses sharp cones around the half-line, so ``(x - a)/||x - a||``
    tends to ``v``. Along the ray a quadratic nuisance term is fitted next to
    the slope; one-sided samples cannot cancel curvature by symmetry.
    """
    a = as_vec(a, f.m)
    entries: list[DirectionResult] = []
    for v in dirs:
        v = as_vec(v, f.m)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9 or not V.contains(v):
            raise ValueError("profile directions must be unit vectors in V")
        line = Subspace.span([v], f.m)
        try:
            est = _estimate(f, a, line, sched, opts, directional=False, ray=v)
        except InsufficientSamples as exc:
            entries.append(DirectionResult(v, None, None, str(exc)))
            continue
        entries.append(DirectionResult(v, est, est.L.apply(v)))

    fitted = [(V.coords(e.direction), e.value) for e in entries if e.value is not None]
    if not fitted or V.dim == 0:
        return DirectionProfile(entries, None, 0.0)
    Z = np.array([z for z, _ in fitted])
    D = np.array([d for _, d in fitted])
    sol, *_ = np.linalg.lstsq(Z, D, rcond=None)
    M = LinearMap(V, sol.T)
    dev = np.linalg.norm(D - Z @ sol, axis=1)
    return DirectionProfile(entries, M, float(dev.max()))


@dataclass(frozen=True)
class LipschitzProbe:
    curve: list[tuple[float, float]]
    bounded: bool
    reason: str

    def to_dict(self) -> dict:
        return {"curve": [[d, q] for d, q in self.curve], "bounded": self.bounded, "reason": self.reason}


def _max_pair_quotient(points: np.ndarray, values: np.ndarray) -> float:
    dx = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    dv = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=2)
    mask = dx > 0
    if not mask.any():
        return 0.0
    return float((dv[mask] / dx[mask]).max())


def two_point_cone_lipschitz(
    f: BlackBoxFn, a, V: Subspace, sched: ScaleSchedule = ScaleSchedule(), opts: Options = DEFAULT_OPTIONS
) -> LipschitzProbe:
    """Worst difference quotient over pairs of points in the same sharp cone level."""
    a = as_vec(a, f.m)
    fa = f(a)
    levels = _level_clouds(f, a, fa, V, sched, opts, lambda k, th: th)
    curve = []
    for lv in levels:
        q = _max_pair_quotient(lv.cloud.points, lv.df) if len(lv.cloud) > 1 else 0.0
        curve.append((lv.delta, q))
    qs = [q for _, q in curve]
    if max(qs, default=0.0) > opts.cap:
        return LipschitzProbe(curve, False, f"quotient exceeds cap {opts.cap:g}")
    for k in range(2, len(qs) - 1):
        if qs[k + 1] > opts.slack * qs[k] + NOISE:
            return LipschitzProbe(curve, False, f"quotient rises from {qs[k]:.3g} to {qs[k + 1]:.3g} at level {k + 1}")
    return LipschitzProbe(curve, True, f"quotient nonincreasing beyond level 2, max {max(qs, default=0.0):.3g}")


@dataclass(frozen=True, eq=False)
class ChainResult:
    holds: bool
    curve: list[tuple[float, Optional[float]]]
    fixed_curve: list[tuple[float, Optional[float]]]
    vacuous_levels: list[int]
    witnesses: list[Optional[list[float]]]
    min_gain: Optional[float]
    reason: str

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "curve": [[d, c] for d, c in self.curve],
            "fixed_curve": [[d, c] for d, c in self.fixed_curve],
            "vacuous_levels": list(self.vacuous_levels),
            "witnesses": self.witnesses,
            "min_gain": self.min_gain,
            "reason": self.reason,
        }


def _chain_levels(f, g, a, fa, gfa, V, sched, opts, theta_of):
    """Per level: max ||g(f(x)) - g(f(a))|| / ||x - a|| over samples with ||f(x) - f(a)|| <= theta_k ||x - a||."""
    out = []
    for k, (delta, theta) in enumerate(schedule_scales(sched)):
        cloud = build_cloud(
            a, V, delta, theta_of(k, theta),
            n_dirs=opts.n_dirs, n_apertures=opts.n_apertures, n_perp=opts.n_perp,
            domain=f.domain, seed=opts.seed, min_fraction=opts.min_fraction,
        )
        fx = f.many(cloud.points)
        keep = np.linalg.norm(fx - fa[None, :], axis=1) <= theta * cloud.radius
        if not keep.any():
            out.append((delta, None, None))
            continue
        c = np.linalg.norm(g.many(fx[keep]) - gfa[None, :], axis=1) / cloud.radius[keep]
        i = int(np.argmax(c))
        out.append((delta, float(c[i]), cloud.points[keep][i].tolist()))
    return out


def chain_condition(
    f: BlackBoxFn,
    g: BlackBoxFn,
    a,
    V: Subspace,
    L: Optional[LinearMap] = None,
    sched: ScaleSchedule = ScaleSchedule(),
    opts: Options = DEFAULT_OPTIONS,
) -> ChainResult:
    """Check the limit condition under which ``K o L`` is a tangential derivative of ``g o f``.

    The co-filter ``||f(x) - f(a)|| <= kappa_k ||x - a||`` uses ``kappa_k = theta_k``.
    Levels with no surviving sample are vacuous and count toward Holds.
    """
    a = as_vec(a, f.m)
    fa = f(a)
    gfa = g(fa)
    if V.dim == 0:
        n = len(schedule_scales(sched))
        return ChainResult(True, [], [], list(range(n)), [None] * n, None, "vacuous: V = {0}")
    coupled = _chain_levels(f, g, a, fa, gfa, V, sched, opts, lambda k, th: th)
    fixed = _chain_levels(f, g, a, fa, gfa, V, sched, opts, lambda k, th: sched.theta0)
    curve = [(d, c) for d, c, _ in coupled]
    fixed_curve = [(d, c) for d, c, _ in fixed]
    vacuous = [k for k, (_, c) in enumerate(curve) if c is None]
    gain = None if L is None else min_gain(L)

    div, why_div = divergence_rule([c for _, c in fixed_curve], opts)
    ok, why_ok = residual_rule([0.0 if c is None else c for _, c in curve], opts)
    if div:
        holds, reason = False, f"fixed-aperture quotient: {why_div}"
    elif ok:
        holds, reason = True, why_ok + (f"; {len(vacuous)} vacuous levels" if vacuous else "")
    else:
        holds, reason = False, why_ok
    return ChainResult(holds, curve, fixed_curve, vacuous, [w for _, _, w in coupled], gain, reason)


@dataclass(frozen=True, eq=False)
class ComposeReport:
    f_estimate: DerivativeEstimate
    g_estimate: DerivativeEstimate
    composite: DerivativeEstimate
    KL: np.ndarray
    match_error: float
    match: bool
    chain: ChainResult
    injective: bool
    min_gain: float
    g_lipschitz: LipschitzProbe

    @property
    def composite_ok(self) -> bool:
        return self.composite.differentiable and self.match

    @property
    def preconditions_met(self) -> bool:
        return self.f_estimate.differentiable and self.g_estimate.differentiable

    @property
    def consistent(self) -> bool:
        return self.chain.holds == self.composite_ok

    def to_dict(self) -> dict:
        return {
            "f": self.f_estimate.to_dict(),
            "g": self.g_estimate.to_dict(),
            "composite": self.composite.to_dict(),
            "KL": self.KL.tolist(),
            "match_error": self.match_error,
            "match": self.match,
            "chain": self.chain.to_dict(),
            "injective": self.injective,
            "min_gain": self.min_gain,
            "g_lipschitz": self.g_lipschitz.to_dict(),
            "preconditions_met": self.preconditions_met,
            "composite_ok": self.composite_ok,
            "consistent": self.consistent,
        }


def compose_and_check(
    f: BlackBoxFn,
    g: BlackBoxFn,
    a,
    V: Subspace,
    sched: ScaleSchedule = ScaleSchedule(),
    opts: Options = DEFAULT_OPTIONS,
) -> ComposeReport:
    """Estimate ``L`` for f, ``K`` for g on ``L[V]`` and ``C`` for g o f; compare ``C`` with ``K L``."""
    a = as_vec(a, f.m)
    est_f = estimate_tangential(f, a, V, sched, opts)
    L = est_f.L
    W = L.image()
    fa = f(a)
    est_g = estimate_tangential(g, fa, W, sched, opts)
    K = est_g.L
    est_c = estimate_tangential(compose(g, f), a, V, sched, opts)
    KL = K.matrix @ W.basis.T @ L.matrix
    err = float(np.linalg.norm(est_c.L.matrix - KL)) / max(1.0, float(np.linalg.norm(KL)))
    chain = chain_condition(f, g, a, V, L, sched, opts)
    gain = min_gain(L)
    lip = two_point_cone_lipschitz(g, fa, Subspace.full(g.m), sched, opts)
    return ComposeReport(
        est_f, est_g, est_c, KL, err, err <= opts.match_tol, chain,
        gain > opts.gain_tol, gain, lip,
    )
