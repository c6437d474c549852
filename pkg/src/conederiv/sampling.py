"""Point sets for the shrinking-limit tests.

Directions on the unit sphere of a subspace come from low-discrepancy
sequences (golden angle on circles, a Fibonacci lattice on 2-spheres, scrambled
Halton points pushed through the normal quantile otherwise). Cone clouds put
points at radius ``r`` in ``[delta/2, delta]`` and relative distance ``s <= theta``
from the subspace, along ``u*sqrt(1 - s**2) + w*s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm, qmc

from .linalg import Subspace, as_vec

GOLDEN_ANGLE = 2.0 * math.pi * ((1.0 + math.sqrt(5.0)) / 2.0 - 1.0)
DEDUP_TOL = 1e-9

DomainPredicate = Callable[[np.ndarray], bool]


class InsufficientSamples(RuntimeError):
    def __init__(self, survivors: int, required: int, where: str = ""):
        self.survivors = survivors
        self.required = required
        msg = f"only {survivors} samples survived domain filtering, need {required}"
        super().__init__(f"{msg} ({where})" if where else msg)


@dataclass(frozen=True)
class ScaleSchedule:
    delta0: float = 0.1
    theta0: float = 0.002
    rho: float = 0.5
    levels: int = 8

    def __post_init__(self):
        if not self.delta0 > 0:
            raise ValueError(f"delta0 must be positive, got {self.delta0}")
        if not 0 < self.theta0 <= 1:
            raise ValueError(f"theta0 must lie in (0, 1], got {self.theta0}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if int(self.levels) != self.levels or self.levels < 3:
            raise ValueError(f"levels must be an integer >= 3, got {self.levels}")

    def to_dict(self) -> dict:
        return {"delta0": self.delta0, "theta0": self.theta0, "rho": self.rho, "levels": self.levels}

    @classmethod
    def from_dict(cls, data: dict) -> ScaleSchedule:
        known = {k: data[k] for k in ("delta0", "theta0", "rho", "levels") if k in data}
        if "levels" in known:
            known["levels"] = int(known["levels"])
        return cls(**known)


def schedule_scales(s: ScaleSchedule) -> list[tuple[float, float]]:
    return [(s.delta0 * s.rho**k, s.theta0 * s.rho**k) for k in range(s.levels)]


@dataclass(frozen=True, eq=False)
class ConeSample:
    point: np.ndarray
    radius: float
    v_component: np.ndarray
    aperture_ratio: float

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "radius": self.radius,
            "v_component": self.v_component.tolist(),
            "aperture_ratio": self.aperture_ratio,
        }


@dataclass(frozen=True, eq=False)
class Cloud:
    """Array form of a list of cone samples, in generation order."""

    points: np.ndarray  # (N, m)
    disp: np.ndarray  # x - a
    radius: np.ndarray  # (N,)
    vcoords: np.ndarray  # (N, k) coordinates of P_V(x - a)
    ratio: np.ndarray  # aperture ratios

    def __len__(self) -> int:
        return self.points.shape[0]

    def samples(self, V: Subspace) -> list[ConeSample]:
        vs = self.vcoords @ V.basis.T
        return [
            ConeSample(self.points[i].copy(), float(self.radius[i]), vs[i], float(self.ratio[i]))
            for i in range(len(self))
        ]


def _sphere_coords(k: int, n: int, rng: np.random.Generator, seed: int) -> np.ndarray:
    """``n`` low-discrepancy unit vectors in R^k (k >= 2)."""
    if k == 2:
        ang = rng.uniform(0.0, 2.0 * math.pi) + GOLDEN_ANGLE * np.arange(n)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if k == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        rr = np.sqrt(1.0 - z * z)
        phi = rng.uniform(0.0, 2.0 * math.pi) + GOLDEN_ANGLE * np.arange(n)
        pts = np.column_stack([rr * np.cos(phi), rr * np.sin(phi), z])
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        return pts @ q.T
    pts = qmc.Halton(d=k, scramble=True, seed=seed).random(n)
    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _half_mesh(k: int, count_per_dim: int, seed: int) -> np.ndarray:
    """Directions in V-coordinates with no two equal up to sign; basis first."""
    rng = np.random.default_rng(seed)
    cand = [np.eye(k)]
    if k >= 2:
        cand.append(_sphere_coords(k, 2 * count_per_dim ** (k - 1), rng, seed))
    cand = np.vstack(cand)
    kept: list[np.ndarray] = []
    for z in cand:
        if all(np.linalg.norm(z - y) > DEDUP_TOL and np.linalg.norm(z + y) > DEDUP_TOL for y in kept):
            kept.append(z)
    return np.array(kept)


def mesh_array(V: Subspace, count_per_dim: int, seed: int) -> np.ndarray:
    """Unit vectors of V as rows; the second half is the negation of the first."""
    if count_per_dim < 1:
        raise ValueError("count_per_dim must be >= 1")
    if V.dim == 0:
        return np.zeros((0, V.ambient_dim))
    half = _half_mesh(V.dim, count_per_dim, seed) @ V.basis.T
    half /= np.linalg.norm(half, axis=1, keepdims=True)
    return np.vstack([half, -half])


def direction_mesh(V: Subspace, count_per_dim: int, seed: int = 0) -> list[np.ndarray]:
    return list(mesh_array(V, count_per_dim, seed))


def build_cloud(
    a: np.ndarray,
    V: Subspace,
    delta: float,
    theta: float,
    *,
    n_dirs: int = 6,
    n_apertures: int = 4,
    n_perp: int = 4,
    domain: Optional[DomainPredicate] = None,
    seed: int = 0,
    min_fraction: float = 0.25,
    ray: Optional[np.ndarray] = None,
) -> Cloud:
    """Cone cloud as arrays.

    With ``ray`` given, only the one-sided ray through that unit vector is
    used as the axis and the perpendicular directions span its complement.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    a = as_vec(a, V.ambient_dim)
    m = V.ambient_dim
    rng = np.random.default_rng(seed)
    if ray is not None:
        axis_space = Subspace.span([ray], m)
        U = as_vec(ray, m)[None, :] / np.linalg.norm(ray)
        frac = rng.uniform(0.5, 1.0, size=1)
    else:
        axis_space = V
        U = mesh_array(V, n_dirs, seed)
        half = U.shape[0] // 2
        f = rng.uniform(0.5, 1.0, size=half)
        frac = np.concatenate([f, f])
    if U.shape[0] == 0:
        return Cloud(np.zeros((0, m)), np.zeros((0, m)), np.zeros(0), np.zeros((0, V.dim)), np.zeros(0))

    perp = axis_space.complement()
    W = mesh_array(perp, n_perp, seed + 1) if (theta > 0 and perp.dim > 0) else np.zeros((0, m))
    s_vals = theta * np.arange(1, n_apertures + 1) / n_apertures if W.shape[0] else np.zeros(0)

    # Unit offsets: s = 0 first, then every (w, s) pair.
    offs = [(np.zeros(m), 0.0)]
    for s in s_vals:
        for w in W:
            offs.append((w, float(s)))
    rad_fracs = np.column_stack([np.full(len(frac), 0.5), frac, np.ones(len(frac))])

    rows = []
    for i, u in enumerate(U):
        for rf in rad_fracs[i]:
            r = delta * rf
            for w, s in offs:
                rows.append(r * (u * math.sqrt(1.0 - s * s) + w * s))
    disp_gen = np.array(rows)
    points = a[None, :] + disp_gen
    disp = points - a[None, :]
    radius = np.linalg.norm(disp, axis=1)
    keep = radius > 0
    if domain is not None:
        keep &= np.array([bool(domain(p)) for p in points])
    requested = len(points)
    required = max(1, math.ceil(min_fraction * requested))
    if int(keep.sum()) < required:
        raise InsufficientSamples(int(keep.sum()), required, f"delta={delta:g}, theta={theta:g}")
    points, disp, radius = points[keep], disp[keep], radius[keep]
    vcoords = disp @ V.basis
    resid = disp - vcoords @ V.basis.T
    ratio = np.linalg.norm(resid, axis=1) / radius
    return Cloud(points, disp, radius, vcoords, ratio)


def cone_cloud(
    a,
    V: Subspace,
    delta: float,
    theta: float,
    n_dirs: int = 6,
    n_apertures: int = 4,
    domain: Optional[DomainPredicate] = None,
    seed: int = 0,
    *,
    n_perp: int = 4,
    min_fraction: float = 0.25,
) -> list[ConeSample]:
    """Sample the sharp cone of aperture ``theta`` around ``a + V`` in the shell ``[delta/2, delta]``.

    Raises :class:`InsufficientSamples` when fewer than ``min_fraction`` of the
    requested points lie in ``domain``.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    cloud = build_cloud(
        a, V, delta, theta,
        n_dirs=n_dirs, n_apertures=n_apertures, n_perp=n_perp,
        domain=domain, seed=seed, min_fraction=min_fraction,
    )
    return cloud.samples(V)
