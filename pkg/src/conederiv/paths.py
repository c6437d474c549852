"""C^1 paths through a sequence of points approaching ``a`` tangentially to ``v``.

On ``(t_{n+1}, t_n]`` the path is the cubic Hermite blend

    gamma(t) = x_{n+1} (1 - p(s)) + x_n p(s) + (t_n - t_{n+1}) q(s) v,
    s = (t - t_{n+1}) / (t_n - t_{n+1}),  p(s) = 3s^2 - 2s^3,  q(s) = s - p(s),

so ``gamma(t_n) = x_n`` and ``gamma'(t_n) = v`` at every knot. Below the last
stored knot an implicit knot ``(0, a)`` closes the path with the same blend,
and for ``t < 0`` the path continues as ``a + t v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .blackbox import BlackBoxFn
from .estimators import (
    DEFAULT_OPTIONS,
    DerivativeEstimate,
    Options,
    Verdict,
    decide,
    estimate_directional,
)
from .linalg import LinearMap, Subspace, as_vec, orthonormalize
from .sampling import ScaleSchedule, schedule_scales


class RatioViolation(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class FirstCoordinateDegenerate(ValueError):
    pass


class OutOfRange(ValueError):
    pass


def hermite_p(s):
    return 3.0 * s**2 - 2.0 * s**3


def hermite_q(s):
    return s - hermite_p(s)


def hermite_dp(s):
    return 6.0 * s - 6.0 * s**2


def hermite_dq(s):
    return 1.0 - hermite_dp(s)


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    base: np.ndarray
    knots_t: np.ndarray
    knots_x: np.ndarray
    velocity: np.ndarray
    ratio_bound: float
    last_deviation: float = 0.0  # ||(x_N - a)/t_N - v||, recorded, not judged

    @property
    def t0(self) -> float:
        return float(self.knots_t[0])

    @property
    def m(self) -> int:
        return self.base.shape[0]

    def __call__(self, t):
        return interp_eval(self, t)

    def to_dict(self) -> dict:
        return {
            "base": self.base.tolist(),
            "knots_t": self.knots_t.tolist(),
            "knots_x": self.knots_x.tolist(),
            "velocity": self.velocity.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> PiecewisePath:
        return build_path(data["base"], data["knots_t"], data["knots_x"], data["velocity"])


def build_path(a, knots_t: Sequence[float], knots_x: Sequence, v) -> PiecewisePath:
    a = as_vec(a)
    m = a.shape[0]
    v = as_vec(v, m)
    t = np.asarray(knots_t, dtype=float).reshape(-1)
    x = np.asarray(knots_x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, m)
    if t.shape[0] != x.shape[0]:
        raise LengthMismatch(f"{t.shape[0]} knot times but {x.shape[0]} knot points")
    if t.shape[0] < 2:
        raise LengthMismatch("need at least two knots")
    if x.shape[1] != m:
        raise LengthMismatch(f"knot points have dimension {x.shape[1]}, base has {m}")
    if not np.all(np.isfinite(t)) or not np.all(np.isfinite(x)):
        raise ValueError("knots must be finite")
    if np.any(t <= 0):
        raise RatioViolation("knot times must be positive")
    ratios = t[1:] / t[:-1]
    if np.any(ratios >= 1):
        i = int(np.argmax(ratios >= 1))
        raise RatioViolation(f"knot times must decrease strictly: t[{i + 1}] = {t[i + 1]} >= t[{i}] = {t[i]}")
    dev = float(np.linalg.norm((x[-1] - a) / t[-1] - v))
    for arr in (a, t, x, v):
        arr.setflags(write=False)
    return PiecewisePath(a, t, x, v, float(ratios.max()), dev)


def _segments(p: PiecewisePath, t: np.ndarray):
    """Upper/lower knot times and points of the segment containing each ``t > 0``."""
    tk = np.append(p.knots_t, 0.0)
    xk = np.vstack([p.knots_x, p.base[None, :]])
    # segment n covers (tk[n+1], tk[n]]; tk is decreasing
    idx = np.searchsorted(-tk, -t, side="left") - 1
    idx = np.clip(idx, 0, len(p.knots_t) - 1)
    return tk[idx], tk[idx + 1], xk[idx], xk[idx + 1]


def _check_range(p: PiecewisePath, t: np.ndarray, extend: bool):
    lo = -math.inf if extend else 0.0
    if np.any(t > p.t0) or np.any(t < lo) or not np.all(np.isfinite(t)):
        raise OutOfRange(f"t must lie in [{'-inf' if extend else 0}, {p.t0}]")


def interp_eval(p: PiecewisePath, t, extend: bool = False):
    """Evaluate the path; arrays of ``t`` give one row per time."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    _check_range(p, tt, extend)
    out = np.empty((tt.shape[0], p.m))
    neg = tt <= 0
    out[neg] = p.base[None, :] + tt[neg, None] * p.velocity[None, :]
    pos = ~neg
    if pos.any():
        tn, tn1, xn, xn1 = _segments(p, tt[pos])
        h = tn - tn1
        s = (tt[pos] - tn1) / h
        ps, qs = hermite_p(s), hermite_q(s)
        out[pos] = xn1 * (1.0 - ps)[:, None] + xn * ps[:, None] + (h * qs)[:, None] * p.velocity[None, :]
    return out[0] if scalar else out


def interp_deriv(p: PiecewisePath, t, extend: bool = False):
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    _check_range(p, tt, extend)
    out = np.empty((tt.shape[0], p.m))
    neg = tt <= 0
    out[neg] = p.velocity[None, :]
    pos = ~neg
    if pos.any():
        tn, tn1, xn, xn1 = _segments(p, tt[pos])
        h = tn - tn1
        s = (tt[pos] - tn1) / h
        slope = (xn - xn1) / h[:, None]
        out[pos] = slope * hermite_dp(s)[:, None] + hermite_dq(s)[:, None] * p.velocity[None, :]
    return out[0] if scalar else out


@dataclass(frozen=True)
class PullbackResult:
    verdict: Verdict
    reason: str
    times: list[float]
    residuals: list[float]  # ||(f(gamma(t)) - f(a))/t - L[v]||, max per segment
    quotients: list[float]  # ||(f(gamma(t)) - f(a))/t||

    @property
    def differentiable(self) -> bool:
        return self.verdict is Verdict.DIFFERENTIABLE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "times": self.times,
            "residuals": self.residuals,
            "quotients": self.quotients,
        }


def pullback_test(
    f: BlackBoxFn,
    p: PiecewisePath,
    L: LinearMap,
    sched: Optional[ScaleSchedule] = None,
    opts: Options = DEFAULT_OPTIONS,
    l_error: float = 0.0,
) -> PullbackResult:
    """Does ``(f(gamma(t)) - f(a)) / t`` converge to ``L[gamma'(0)]``?

    Without a schedule each knot and its segment midpoint form one level;
    with one, the levels are ``delta_k`` and ``0.75 delta_k`` (clipped to the path).
    When ``L`` is itself an estimate, pass its uncertainty as ``l_error``: the
    residuals then level off near that bias, and rises below it are not held
    against convergence.
    """
    if sched is None:
        tk = np.append(p.knots_t, 0.0)
        pairs = [(tk[n], 0.5 * (tk[n] + tk[n + 1])) for n in range(len(p.knots_t))]
    else:
        pairs = [(min(d, p.t0), min(0.75 * d, p.t0)) for d, _ in schedule_scales(sched)]
    times = np.array(pairs).reshape(-1)
    fa = f(p.base)
    vals = f.many(interp_eval(p, times))
    quot = (vals - fa[None, :]) / times[:, None]
    target = L.apply(p.velocity)
    res = np.linalg.norm(quot - target[None, :], axis=1).reshape(-1, 2).max(axis=1)
    qn = np.linalg.norm(quot, axis=1).reshape(-1, 2).max(axis=1)
    verdict, reason = decide(res.tolist(), qn.tolist(), True, 0.0, opts, floor=l_error)
    return PullbackResult(verdict, reason, [float(a) for a, _ in pairs], res.tolist(), qn.tolist())


@dataclass(frozen=True, eq=False)
class Straightening:
    """``psi~(y1, y'') = gamma(y1) + (0, y'')`` and its inverse on ``y1 in box``."""

    forward: BlackBoxFn
    inverse: BlackBoxFn
    box: tuple[float, float]
    path: PiecewisePath

    def jacobian_at_zero(self) -> np.ndarray:
        J = np.eye(self.path.m)
        J[:, 0] = self.path.velocity
        return J


def _monotone_extent(p: PiecewisePath, sign: float, per_segment: int = 64) -> float:
    """Largest ``T <= t0`` with ``sign * gamma_1' > 0`` on ``(0, T]`` (checked on a grid)."""
    tk = np.append(p.knots_t, 0.0)
    extent = 0.0
    for n in range(len(p.knots_t) - 1, -1, -1):
        grid = np.linspace(tk[n + 1], tk[n], per_segment + 1)[1:]
        if np.any(sign * interp_deriv(p, grid)[:, 0] <= 0):
            break
        extent = float(tk[n])
    return extent


def straightening_map(p: PiecewisePath) -> Straightening:
    v1 = float(p.velocity[0])
    if abs(v1) < 1e-8:
        raise FirstCoordinateDegenerate("gamma'(0) has (near) zero first coordinate; permute coordinates first")
    sign = math.copysign(1.0, v1)
    hi = _monotone_extent(p, sign)
    if hi <= 0:
        raise FirstCoordinateDegenerate("first coordinate of the path is not monotone near 0")
    lo = -hi
    m = p.m

    def gamma(y1):
        return interp_eval(p, y1, extend=True)

    def fwd(Y):
        out = gamma(Y[:, 0])
        out[:, 1:] += Y[:, 1:]
        return out

    g_lo, g_hi = sorted((gamma(lo)[0], gamma(hi)[0]))

    def inv(Z):
        out = np.empty_like(Z)
        for i, z in enumerate(Z):
            if not g_lo <= z[0] <= g_hi:
                raise OutOfRange(f"z1 = {z[0]} outside the invertibility box [{g_lo}, {g_hi}]")
            if z[0] == p.base[0]:
                y1 = 0.0
            else:
                y1 = brentq(lambda s: gamma(s)[0] - z[0], lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
            out[i, 0] = y1
            out[i, 1:] = z[1:] - gamma(y1)[1:]
        return out

    return Straightening(
        BlackBoxFn(fwd, m, m, "straighten", vectorized=True),
        BlackBoxFn(inv, m, m, "straighten^-1", vectorized=True),
        (lo, hi),
        p,
    )


def random_admissible_path(
    a,
    v,
    rng: np.random.Generator,
    *,
    n_knots: int = 20,
    t0: float = 0.5,
    ratio_range: tuple[float, float] = (0.3, 0.7),
    deviation: float = 1e-7,
) -> PiecewisePath:
    """Knots ``x_n = a + t_n (v + c (n+1)**-0.5 w)`` with random ratios ``t_{n+1}/t_n``.

    ``w`` is a fixed unit vector orthogonal to ``v``. The ``(n+1)**-0.5`` decay
    approaches ``a`` tangentially to ``v`` slower than any power of ``t_n``.
    """
    a = as_vec(a)
    v = as_vec(v, a.shape[0])
    ratios = rng.uniform(*ratio_range, size=n_knots - 1)
    t = t0 * np.concatenate([[1.0], np.cumprod(ratios)])
    w = rng.standard_normal(a.shape[0])
    vn = v / np.linalg.norm(v)
    w -= (w @ vn) * vn
    w /= np.linalg.norm(w)
    c = deviation * rng.uniform(0.5, 1.0)
    dev = c / np.sqrt(np.arange(n_knots) + 1.0)
    x = a[None, :] + t[:, None] * (v[None, :] + dev[:, None] * w[None, :])
    return build_path(a, t, x, v)


@dataclass(frozen=True, eq=False)
class TransportedEstimate:
    estimate: DerivativeEstimate
    subspace: Subspace  # D psi(a)[V] in straightened coordinates
    back: np.ndarray  # L' o D psi(a) on V, comparable with the original L

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "subspace": self.subspace.to_dict(), "back": self.back.tolist()}


def straightened_directional(
    f: BlackBoxFn,
    V: Subspace,
    p: PiecewisePath,
    sched: ScaleSchedule = ScaleSchedule(),
    opts: Options = DEFAULT_OPTIONS,
) -> TransportedEstimate:
    """Directional estimate of ``f o psi~`` at 0 with respect to ``psi~'(0)^-1 [V]``.

    With ``psi = psi~^-1`` this is the directional derivative of ``f o psi^-1``
    at ``psi(a)`` with respect to ``D psi(a)[V]``.
    """
    st = straightening_map(p)
    d0 = schedule_scales(sched)[0][0]
    if d0 > st.box[1]:
        raise OutOfRange(f"schedule reaches radius {d0} beyond the straightening box {st.box}")
    J = st.jacobian_at_zero()
    W = orthonormalize(list(np.linalg.solve(J, V.basis).T), f.m) if V.dim else Subspace.zero(f.m)
    g = BlackBoxFn(lambda Y: f.many(st.forward.many(Y)), f.m, f.n, f"{f.name}∘straighten", vectorized=True)
    est = estimate_directional(g, np.zeros(f.m), W, sched, opts)
    # L'[w] = L[J w]  =>  L = L' J^{-1} on V
    back = est.L.matrix @ W.basis.T @ np.linalg.solve(J, V.basis)
    return TransportedEstimate(est, W, back)
