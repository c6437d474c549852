"""Example and counterexample functions with their ground-truth verdicts.

All singular fixtures set ``f(0) = 0`` explicitly. ``K`` defaults to the last
coordinate functional, so ``ker K`` is spanned by the first ``m - 1`` axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blackbox import BlackBoxFn, compose
from .linalg import LinearMap, Subspace, as_vec, orthonormalize
from .sampling import GOLDEN_ANGLE

DIFF, DIV, INC = "Differentiable", "Divergent", "Inconclusive"


class UnknownFixture(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class Fixture:
    name: str
    f: BlackBoxFn
    base_point: np.ndarray
    subspace: Subspace
    expected: dict
    params: dict = field(default_factory=dict)
    description: str = ""
    jacobian: Optional[Callable] = None  # ambient Jacobian, smooth fixtures only

    def expected_L(self) -> Optional[np.ndarray]:
        if "L" in self.expected:
            return np.asarray(self.expected["L"], dtype=float).reshape(self.f.n, self.subspace.dim)
        if self.jacobian is not None:
            return np.atleast_2d(self.jacobian(self.base_point)) @ self.subspace.basis
        return None


def _norms(X: np.ndarray) -> np.ndarray:
    return np.linalg.norm(X, axis=1)


def last_coordinate_functional(m: int) -> LinearMap:
    row = np.zeros((1, m))
    row[0, -1] = 1.0
    return LinearMap(Subspace.full(m), row)


def _kernel(K: LinearMap) -> Subspace:
    return orthonormalize(list(K.ambient_matrix()), K.domain.ambient_dim).complement()


def kernel_singular(m: int = 2, K: Optional[LinearMap] = None, alpha: float = 0.5) -> Fixture:
    """``f(x) = K[x] / ||x||**alpha``, ``f(0) = 0``; directional but not tangential at 0 along ``ker K``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    K = K or last_coordinate_functional(m)
    Kmat = K.ambient_matrix()
    if not np.any(Kmat):
        raise ValueError("K must be nonzero")
    V = _kernel(K)
    if not 0 < V.dim < m:
        raise ValueError("ker K must be a proper nonzero subspace")

    def f(X):
        r = _norms(X)
        out = np.zeros((X.shape[0], Kmat.shape[0]))
        nz = r > 0
        out[nz] = (X[nz] @ Kmat.T) / r[nz, None] ** alpha
        return out

    fn = BlackBoxFn(f, m, Kmat.shape[0], f"kernel_singular(m={m}, alpha={alpha:g})", vectorized=True)
    return Fixture(
        f"kernel_singular_m{m}_a{alpha:g}",
        fn,
        np.zeros(m),
        V,
        {
            "directional": DIFF,
            "tangential": DIV,
            "L": np.zeros((Kmat.shape[0], V.dim)).tolist(),
            "cone_growth_slope": -alpha,
        },
        {"alpha": alpha, "m": m},
        "K[x]/|x|^alpha: directional derivative 0 along ker K, no tangential derivative",
    )


def chain_pair(m: int = 2, K: Optional[LinearMap] = None, beta: float = 2.0) -> tuple[Fixture, Fixture, dict]:
    """``f(x) = |K[x]|**beta / ||x||`` and ``g(t) = |t|**(1/beta)``; the chain rule fails for the pair."""
    if beta < 2:
        raise ValueError("beta must be >= 2")
    K = K or last_coordinate_functional(m)
    Kmat = K.ambient_matrix()
    if Kmat.shape[0] != 1:
        raise ValueError("K must be a functional")
    V = _kernel(K)
    if not 0 < V.dim < m:
        raise ValueError("ker K must be a proper nonzero subspace")

    def f(X):
        r = _norms(X)
        out = np.zeros((X.shape[0], 1))
        nz = r > 0
        out[nz, 0] = np.abs(X[nz] @ Kmat[0]) ** beta / r[nz]
        return out

    def g(T):
        return np.abs(T) ** (1.0 / beta)

    f_fx = Fixture(
        f"chain_f_b{beta:g}",
        BlackBoxFn(f, m, 1, f"chain_f(beta={beta:g})", vectorized=True),
        np.zeros(m),
        V,
        {"directional": DIFF, "tangential": DIFF, "L": np.zeros((1, V.dim)).tolist()},
        {"beta": beta, "m": m},
        "|K[x]|^beta/|x|: tangential derivative 0 along ker K",
    )
    g_fx = Fixture(
        f"chain_g_b{beta:g}",
        BlackBoxFn(g, 1, 1, f"|t|^(1/{beta:g})", vectorized=True),
        np.zeros(1),
        Subspace.zero(1),
        {"directional": DIFF, "tangential": DIFF, "L": np.zeros((1, 0)).tolist()},
        {"beta": beta},
        "|t|^(1/beta): tangential derivative with respect to {0} only",
    )
    composite = {"chain_condition": False, "composite": DIV}
    return f_fx, g_fx, composite


def dense_rays(n_rays: int, start: int = 0) -> np.ndarray:
    """Unit vectors at golden-angle increments, an equidistributed sequence on the circle."""
    ang = (GOLDEN_ANGLE * np.arange(start, start + n_rays)) % (2 * math.pi)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def dense_ray_indicator(m: int = 2, n_rays: int = 6, seed: int = 0) -> Fixture:
    """0 on the cones ``dist(x, <v_n>) <= 2**-(n+2) ||x||`` for ``n < n_rays``, 1 elsewhere.

    ``seed`` shifts the start of the golden-angle enumeration.
    """
    if m != 2:
        raise ValueError("dense_ray_indicator is defined for m = 2")
    if n_rays < 1:
        raise ValueError("n_rays must be >= 1")
    rays = dense_rays(n_rays, seed)
    widths = 2.0 ** -(np.arange(n_rays) + 2.0)

    def f(X):
        r = _norms(X)
        along = X @ rays.T  # (N, n_rays)
        dist = np.sqrt(np.maximum(r[:, None] ** 2 - along**2, 0.0))
        inside = dist <= widths[None, :] * r[:, None] * (1 + 1e-12)
        return np.where(inside.any(axis=1), 0.0, 1.0)[:, None]

    name = f"dense_ray_{n_rays}" + (f"_s{seed}" if seed else "")
    return Fixture(
        name,
        BlackBoxFn(f, 2, 1, name, vectorized=True),
        np.zeros(2),
        Subspace.full(2),
        {"tangential": DIV, "directional": DIV, "rays": DIFF},
        {"n_rays": n_rays, "seed": seed},
        "indicator of the complement of shrinking cones around a dense ray sequence",
    )


def _lip_f(X):
    r = _norms(X)
    out = np.zeros((X.shape[0], 1))
    nz = r > 0
    out[nz, 0] = X[nz, 0] * X[nz, 1] / r[nz]
    return out


def lipschitz_homogeneous(m: int = 2, full: bool = False) -> Fixture:
    """``x1 x2 / ||x||``: Lipschitz; derivative 0 along the axis, no total derivative at 0."""
    if m != 2:
        raise ValueError("lipschitz_homogeneous is defined for m = 2")
    fn = BlackBoxFn(_lip_f, 2, 1, "x1*x2/|x|", vectorized=True)
    if full:
        return Fixture(
            "lipschitz_homogeneous_full", fn, np.zeros(2), Subspace.full(2),
            {"tangential": INC, "directional": INC, "profile_linear": False},
            {}, "x1*x2/|x| on R^2: every ray has a limit, no linear map fits them",
        )
    return Fixture(
        "lipschitz_homogeneous", fn, np.zeros(2), Subspace.span([[1.0, 0.0]]),
        {"tangential": DIFF, "directional": DIFF, "L": [[0.0]], "lipschitz_bound": 2.0},
        {}, "x1*x2/|x| along e1: Lipschitz, both derivatives 0",
    )


def _sin_quad(X):
    return (np.sin(X[:, 0]) + X[:, 1] ** 2)[:, None]


def _sin_quad_jac(x):
    return np.array([[math.cos(x[0]), 2 * x[1]]])


def _poly(X):
    x1, x2 = X[:, 0], X[:, 1]
    return (x1**3 - 2 * x1 * x2 + x2**2 + 3 * x1 + 0.5 * x2)[:, None]


def _poly_jac(x):
    x1, x2 = x
    return np.array([[3 * x1**2 - 2 * x2 + 3, -2 * x1 + 2 * x2 + 0.5]])


def _expmix(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return np.column_stack([np.exp(x1 - x2) + x3**2, x1 * x2 * x3 + np.sin(x3)])


def _expmix_jac(x):
    x1, x2, x3 = x
    e = math.exp(x1 - x2)
    return np.array([[e, -e, 2 * x3], [x2 * x3, x1 * x3, x1 * x2 + math.cos(x3)]])


def _linear(X):
    return X @ np.array([[2.0, 0.0], [0.0, 3.0]]).T


SMOOTH = {
    "sin_quad": (_sin_quad, _sin_quad_jac, 2, 1, [0.0, 0.0], [[1.0, 0.0]], "sin(x1) + x2^2"),
    "poly": (_poly, _poly_jac, 2, 1, [0.5, -0.25], [[1.0, 1.0]], "x1^3 - 2 x1 x2 + x2^2 + 3 x1 + x2/2"),
    "expmix": (
        _expmix, _expmix_jac, 3, 2, [0.1, 0.2, -0.3], [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]],
        "(exp(x1 - x2) + x3^2, x1 x2 x3 + sin x3)",
    ),
    "linear": (
        _linear, lambda x: np.array([[2.0, 0.0], [0.0, 3.0]]), 2, 2, [0.0, 0.0], [[1.0, 0.0]],
        "diag(2, 3) x",
    ),
}


def smooth_control(expr_id: str) -> Fixture:
    try:
        func, jac, m, n, a, span, desc = SMOOTH[expr_id]
    except KeyError:
        raise UnknownFixture(f"unknown smooth control {expr_id!r}; known: {sorted(SMOOTH)}") from None
    return Fixture(
        f"smooth_{expr_id}",
        BlackBoxFn(func, m, n, desc, vectorized=True),
        np.array(a, dtype=float),
        orthonormalize(span, m),
        {"tangential": DIFF, "directional": DIFF},
        {},
        f"smooth control {desc}",
        jac,
    )


@dataclass(frozen=True, eq=False)
class Diffeo:
    """A local diffeomorphism of R^m with its inverse and Jacobian."""

    name: str
    forward: BlackBoxFn
    inverse: BlackBoxFn
    jacobian: Callable[[np.ndarray], np.ndarray]


def shear_diffeo(m: int = 2) -> Diffeo:
    """``psi(x) = x + x1**2 e2`` with inverse ``z - z1**2 e2``."""
    if m < 2:
        raise ValueError("shear_diffeo needs m >= 2")

    def fwd(X):
        Z = X.copy()
        Z[:, 1] += X[:, 0] ** 2
        return Z

    def inv(Z):
        X = Z.copy()
        X[:, 1] -= Z[:, 0] ** 2
        return X

    def jac(x):
        J = np.eye(m)
        J[1, 0] = 2.0 * x[0]
        return J

    return Diffeo(
        "shear",
        BlackBoxFn(fwd, m, m, "shear", vectorized=True),
        BlackBoxFn(inv, m, m, "shear^-1", vectorized=True),
        jac,
    )


def polynomial_diffeo(m: int = 2, seed: int = 0, scale: float = 0.3) -> Diffeo:
    """``psi(x) = x + Q[x, x] + C x**3`` with random coefficients; inverse by Newton's method.

    Invertible on a neighbourhood of 0 whose size shrinks as ``scale`` grows.
    """
    rng = np.random.default_rng(seed)
    Q = scale * rng.standard_normal((m, m, m))
    C = scale * rng.standard_normal((m, m))

    def fwd(X):
        return X + np.einsum("ijk,nj,nk->ni", Q, X, X) + (X**3) @ C.T

    def jac_batch(X):
        J = np.einsum("ijk,nk->nij", Q + Q.transpose(0, 2, 1), X)
        J += 3.0 * C[None, :, :] * (X**2)[:, None, :]
        J += np.eye(m)[None, :, :]
        return J

    def inv(Z):
        X = Z.copy()
        for _ in range(60):
            step = np.linalg.solve(jac_batch(X), (fwd(X) - Z)[:, :, None])[:, :, 0]
            X = X - step
            if np.max(np.abs(step), initial=0.0) <= 1e-16 * max(1.0, np.max(np.abs(X), initial=0.0)):
                break
        return X

    return Diffeo(
        f"poly_s{seed}",
        BlackBoxFn(fwd, m, m, f"poly_diffeo(seed={seed})", vectorized=True),
        BlackBoxFn(inv, m, m, f"poly_diffeo(seed={seed})^-1", vectorized=True),
        lambda x: jac_batch(as_vec(x, m)[None, :])[0],
    )


def transport(fx: Fixture, psi: Diffeo) -> tuple[BlackBoxFn, np.ndarray, Subspace, np.ndarray]:
    """``f o psi^-1`` at ``psi(a)`` with respect to ``Dpsi(a)[V]``.

    Also returns the matrix ``T`` with ``L'.matrix = L.matrix @ T`` for the
    transported candidate derivative.
    """
    a = fx.base_point
    b = psi.forward(a)
    J = psi.jacobian(a)
    W = orthonormalize(list((J @ fx.subspace.basis).T), fx.f.m) if fx.subspace.dim else Subspace.zero(fx.f.m)
    T = fx.subspace.basis.T @ np.linalg.solve(J, W.basis)
    g = compose(fx.f, psi.inverse, f"{fx.f.name}∘{psi.name}^-1")
    return g, b, W, T


def transport_back(Lp: LinearMap, fx: Fixture, psi: Diffeo) -> np.ndarray:
    """Matrix of ``L' o Dpsi(a)`` on the original subspace."""
    J = psi.jacobian(fx.base_point)
    return Lp.matrix @ Lp.domain.basis.T @ J @ fx.subspace.basis


@dataclass(frozen=True, eq=False)
class ChainCase:
    name: str
    f: BlackBoxFn
    g: BlackBoxFn
    base_point: np.ndarray
    subspace: Subspace
    holds: bool
    branch: str = ""  # which sufficient condition applies: "lipschitz" or "injective"
    description: str = ""


def _smooth_g(Y):
    return (np.sin(Y[:, 0]) + Y[:, 0] * Y[:, 1] + Y[:, 1] ** 2)[:, None]


def chain_cases() -> dict[str, ChainCase]:
    f2, g2, _ = chain_pair(2, beta=2.0)
    f3, g3, _ = chain_pair(2, beta=3.0)
    cases = [
        ChainCase("beta2", f2.f, g2.f, f2.base_point, f2.subspace, False, "", "|x2|^2/|x| then |t|^(1/2)"),
        ChainCase("beta3", f3.f, g3.f, f3.base_point, f3.subspace, False, "", "|x2|^3/|x| then |t|^(1/3)"),
        ChainCase(
            "beta2_abs", f2.f, BlackBoxFn(np.abs, 1, 1, "|t|", vectorized=True),
            f2.base_point, f2.subspace, True, "lipschitz", "|x2|^2/|x| then |t|",
        ),
        ChainCase(
            "beta2_linear", f2.f, BlackBoxFn(lambda T: 2.0 * T, 1, 1, "2t", vectorized=True),
            f2.base_point, f2.subspace, True, "lipschitz", "|x2|^2/|x| then 2t",
        ),
        ChainCase(
            "shear_smooth", shear_diffeo().forward,
            BlackBoxFn(_smooth_g, 2, 1, "sin(y1) + y1 y2 + y2^2", vectorized=True),
            np.array([0.3, -0.2]), Subspace.span([[1.0, 0.0]]), True, "injective",
            "shear then a smooth function",
        ),
    ]
    return {c.name: c for c in cases}


def catalog() -> dict[str, Fixture]:
    fixtures: list[Fixture] = []
    for m in (2, 3):
        for alpha in (0.25, 0.5, 1.0):
            fixtures.append(kernel_singular(m, alpha=alpha))
    for beta in (2.0, 3.0):
        f_fx, g_fx, _ = chain_pair(2, beta=beta)
        fixtures.extend([f_fx, g_fx])
    f2, g2, _ = chain_pair(2, beta=2.0)
    fixtures.append(
        Fixture(
            "chain_gf_b2", compose(g2.f, f2.f, "|x2|/|x|^(1/2)"), np.zeros(2), f2.subspace,
            {"tangential": DIV, "directional": DIFF, "L": [[0.0]]}, {"beta": 2.0},
            "composite of the beta = 2 pair, same form as K[x]/|x|^(1/2)",
        )
    )
    fixtures.append(dense_ray_indicator(2, 6))
    fixtures.append(lipschitz_homogeneous())
    fixtures.append(lipschitz_homogeneous(full=True))
    for expr in SMOOTH:
        fixtures.append(smooth_control(expr))
    return {fx.name: fx for fx in fixtures}


def get_fixture(name: str) -> Fixture:
    cat = catalog()
    if name not in cat:
        raise UnknownFixture(f"unknown fixture {name!r}; run `conederiv fixtures list`")
    return cat[name]
