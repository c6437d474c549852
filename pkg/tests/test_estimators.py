import numpy as np
import pytest
import sympy as sp

from conederiv.blackbox import BlackBoxFn, compose
from conederiv.estimators import (
    DEFAULT_OPTIONS,
    Options,
    Verdict,
    chain_condition,
    compose_and_check,
    cone_growth,
    divergence_rule,
    estimate_directional,
    estimate_tangential,
    per_direction_profile,
    residual_rule,
    two_point_cone_lipschitz,
)
from conederiv.fixtures import catalog, chain_cases, kernel_singular, lipschitz_homogeneous, smooth_control
from conederiv.linalg import LinearMap, Subspace
from conederiv.sampling import ScaleSchedule, schedule_scales

x1, x2, x3 = sp.symbols("x1 x2 x3")
SYMBOLIC = {
    "sin_quad": ([sp.sin(x1) + x2**2], (x1, x2)),
    "poly": ([x1**3 - 2 * x1 * x2 + x2**2 + 3 * x1 + x2 / 2], (x1, x2)),
    "expmix": ([sp.exp(x1 - x2) + x3**2, x1 * x2 * x3 + sp.sin(x3)], (x1, x2, x3)),
    "linear": ([2 * x1, 3 * x2], (x1, x2)),
}


def sympy_jacobian(expr_id, point):
    exprs, syms = SYMBOLIC[expr_id]
    J = sp.Matrix(exprs).jacobian(syms)
    return np.array(J.subs(dict(zip(syms, point))).evalf(30), dtype=float)


# --- rules ---------------------------------------------------------------

def test_residual_rule_accepts_decreasing_small_curve():
    ok, _ = residual_rule([1e-1, 1e-2, 1e-3, 1e-4], DEFAULT_OPTIONS)
    assert ok


def test_residual_rule_rejects_large_final_value():
    ok, why = residual_rule([1.0, 0.5, 0.25, 0.125], DEFAULT_OPTIONS)
    assert not ok and "above tol_abs" in why


def test_residual_rule_rejects_rise_in_fine_half():
    ok, why = residual_rule([1e-3, 9e-4, 1e-4, 5e-4], DEFAULT_OPTIONS)
    assert not ok and "rises" in why


def test_residual_rule_ignores_rises_below_resolution():
    opts = Options()
    ok, _ = residual_rule([1e-3, 1e-4, 1e-8, 5e-8], opts)
    assert ok
    ok, _ = residual_rule([1e-3, 1e-4, 1e-8, 5e-8], Options(resolution=0.0))
    assert not ok


def test_divergence_rule_needs_three_rising_levels_and_factor_two():
    assert divergence_rule([1.0, 1.5, 2.5], DEFAULT_OPTIONS)[0]
    assert not divergence_rule([1.0, 2.5], DEFAULT_OPTIONS)[0]
    assert not divergence_rule([1.0, 1.2, 1.4], DEFAULT_OPTIONS)[0]
    assert divergence_rule([1.0, 2e6], DEFAULT_OPTIONS)[0]  # cap
    assert not divergence_rule([None, 1.0, None, 1.0], DEFAULT_OPTIONS)[0]


def test_options_reject_unknown_keys():
    with pytest.raises(ValueError):
        Options.from_dict({"tolerance": 1.0})
    assert Options.from_dict({"tol_abs": 0.5}).tol_abs == 0.5


# --- estimators ----------------------------------------------------------

def test_linear_map_residual_is_exactly_the_normal_slope():
    # f = diag(2, 3) x with V = <e1>: f(x) - L[P_V x] = (0, 3 x2), and max |x2|/|x| = theta_k
    fx = smooth_control("linear")
    est = estimate_tangential(fx.f, fx.base_point, fx.subspace)
    np.testing.assert_allclose(est.L.matrix, [[2.0], [0.0]], atol=1e-12)
    for (_, r), (_, th) in zip(est.residuals, schedule_scales(ScaleSchedule())):
        assert r == pytest.approx(3 * th, rel=1e-9)
    assert est.verdict is Verdict.DIFFERENTIABLE


def test_linear_map_directional_residual_vanishes():
    fx = smooth_control("linear")
    est = estimate_directional(fx.f, fx.base_point, fx.subspace)
    assert max(r for _, r in est.residuals) < 1e-12


@pytest.mark.parametrize("expr_id", sorted(SYMBOLIC))
def test_smooth_controls_match_symbolic_jacobian(expr_id):
    fx = smooth_control(expr_id)
    J = sympy_jacobian(expr_id, fx.base_point)
    expected = J @ fx.subspace.basis
    for fn in (estimate_tangential, estimate_directional):
        est = fn(fx.f, fx.base_point, fx.subspace)
        assert est.verdict is Verdict.DIFFERENTIABLE, est.reason
        err = np.linalg.norm(est.L.matrix - expected) / np.linalg.norm(expected)
        assert err < 1e-5


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
def test_kernel_singular_separates_the_two_notions(alpha):
    fx = kernel_singular(2, alpha=alpha)
    d = estimate_directional(fx.f, fx.base_point, fx.subspace)
    t = estimate_tangential(fx.f, fx.base_point, fx.subspace)
    assert d.verdict is Verdict.DIFFERENTIABLE and np.linalg.norm(d.L.matrix) < 1e-6
    assert t.verdict is Verdict.DIVERGENT


@pytest.mark.parametrize("alpha", [0.25, 0.5])
def test_fixed_aperture_growth_has_slope_minus_alpha(alpha):
    # growth at fixed aperture theta0 is theta0 * r**-alpha up to the radius pattern
    fx = kernel_singular(3, alpha=alpha)
    curve, slope = cone_growth(fx.f, fx.base_point, fx.subspace)
    assert slope == pytest.approx(-alpha, abs=1e-6)
    assert len(curve) == ScaleSchedule().levels


def test_zero_subspace_is_vacuously_differentiable():
    f = BlackBoxFn(lambda x: np.sign(x[0]), 2, 1)
    est = estimate_tangential(f, [0.0, 0.0], Subspace.zero(2))
    assert est.verdict is Verdict.DIFFERENTIABLE
    assert est.L.matrix.shape == (1, 0)


def test_estimate_is_deterministic_and_thread_independent(monkeypatch):
    fx = kernel_singular(2, alpha=0.5)
    f = BlackBoxFn(lambda x: fx.f(x), 2, 1)  # per-point evaluation path
    a = estimate_tangential(f, fx.base_point, fx.subspace).to_dict()
    monkeypatch.setenv("CONEDERIV_THREADS", "4")
    b = estimate_tangential(f, fx.base_point, fx.subspace).to_dict()
    assert a == b


def test_estimate_dict_contains_curves():
    fx = smooth_control("poly")
    d = estimate_tangential(fx.f, fx.base_point, fx.subspace).to_dict()
    assert d["verdict"] == "Differentiable"
    assert len(d["residuals"]) == len(d["growth"]) == len(d["thetas"]) == 8


# --- profiles and Lipschitz probe ----------------------------------------

def test_profile_rejects_directions_outside_v():
    fx = lipschitz_homogeneous()
    with pytest.raises(ValueError):
        per_direction_profile(fx.f, fx.base_point, fx.subspace, [np.array([0.0, 1.0])])
    with pytest.raises(ValueError):
        per_direction_profile(fx.f, fx.base_point, fx.subspace, [np.array([2.0, 0.0])])


def test_profile_on_homogeneous_function_has_no_linear_fit():
    # every ray has derivative x1 x2 / |x| = cos sin, which is not linear in the direction
    fx = lipschitz_homogeneous(full=True)
    dirs = [np.array([np.cos(t), np.sin(t)]) for t in np.linspace(0, np.pi, 7)[:-1]]
    prof = per_direction_profile(fx.f, fx.base_point, fx.subspace, dirs)
    assert prof.all_differentiable
    for e, v in zip(prof.entries, dirs):
        assert e.value[0] == pytest.approx(v[0] * v[1], abs=1e-6)
    assert prof.linearity_residual > 0.1
    assert not prof.predicts_differentiable()


def test_two_point_probe_separates_lipschitz_from_singular():
    lip = lipschitz_homogeneous(full=True)
    assert two_point_cone_lipschitz(lip.f, lip.base_point, lip.subspace).bounded
    ks = kernel_singular(2, alpha=0.5)
    assert not two_point_cone_lipschitz(ks.f, ks.base_point, Subspace.full(2)).bounded


# --- chain condition -----------------------------------------------------

@pytest.mark.parametrize("name", sorted(chain_cases()))
def test_chain_condition_matches_composite(name):
    case = chain_cases()[name]
    rep = compose_and_check(case.f, case.g, case.base_point, case.subspace)
    assert rep.chain.holds == case.holds
    assert rep.consistent
    if case.branch == "injective":
        assert rep.injective and rep.min_gain > 0
    if case.branch == "lipschitz":
        assert rep.g_lipschitz.bounded


def test_chain_condition_without_L_and_with_trivial_V():
    case = chain_cases()["beta2"]
    res = chain_condition(case.f, case.g, case.base_point, case.subspace)
    assert res.min_gain is None and not res.holds
    res0 = chain_condition(case.f, case.g, case.base_point, Subspace.zero(2))
    assert res0.holds


def test_compose_requires_matching_dimensions():
    f = BlackBoxFn(lambda x: x, 2, 2)
    g = BlackBoxFn(lambda y: y[0], 3, 1)
    with pytest.raises(ValueError):
        compose(g, f)


def test_catalog_expectations_for_direct_estimators():
    for name, fx in catalog().items():
        for key, fn in (("tangential", estimate_tangential), ("directional", estimate_directional)):
            est = fn(fx.f, fx.base_point, fx.subspace)
            assert est.verdict.value == fx.expected[key], (name, key, est.reason)


@pytest.mark.parametrize("bad_at_a", [True, False])
def test_non_finite_values_are_rejected(bad_at_a):
    def k(X):
        r = np.linalg.norm(X, axis=1)
        return (np.where(r > 0, 0.0, np.nan) if bad_at_a else np.where(r > 0, np.inf, 0.0))[:, None]

    f = BlackBoxFn(k, m=2, n=1, vectorized=True)
    with pytest.raises(ValueError, match="finite"):
        estimate_tangential(f, [0.0, 0.0], Subspace.span([[1.0, 0.0]]))
