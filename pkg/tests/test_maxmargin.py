import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from implicitbias.dataset import Dataset, make_appendix_d_dataset, make_fig1_dataset, rescale
from implicitbias.maxmargin import (DegenerateSpan, Infeasible, ZeroDual, brute_force_margin,
                                    canonical_norm, dual_margin_lower_bound, general_norm_margin,
                                    min_norm_point, solve_a, solve_hard_margin, solve_wbar,
                                    solve_wcheck2, solve_wtilde)

LOG2 = math.log(2.0)


def random_separable(rng, n, d):
    """Gaussian points folded by a random separator."""
    w = rng.standard_normal(d)
    X = rng.standard_normal((n, d))
    s = np.sign(X @ w)
    s[s == 0] = 1.0
    return Dataset(X * s[:, None])


# -- canonical values ------------------------------------------------------------

def test_two_point_solution():
    sol = solve_hard_margin(make_appendix_d_dataset())
    assert np.allclose(sol.w_hat, [1.0, 0.5], atol=1e-12)
    assert np.linalg.norm(sol.w_hat) == pytest.approx(math.sqrt(5) / 2, rel=1e-12)
    assert sol.support == (0, 1)
    assert np.allclose(sol.alpha, [1.0, 0.25], atol=1e-12)
    assert sol.kkt_ok


def test_clusters_support_solution():
    sol = solve_hard_margin(make_fig1_dataset(0, rescaled=False))
    assert np.allclose(sol.w_hat, [0.5, 0.5], atol=1e-12)
    assert sol.gamma == pytest.approx(math.sqrt(2), rel=1e-12)
    # duplicated points share their dual weight
    assert np.allclose(sol.alpha, 0.125, atol=1e-12)


def test_single_point():
    sol = solve_hard_margin(Dataset([[0.6, 0.0]]))
    assert np.allclose(sol.w_hat, [5 / 3, 0.0], atol=1e-12)
    assert sol.gamma == pytest.approx(0.6, rel=1e-12)
    assert math.isinf(sol.theta)


def test_infeasible():
    with pytest.raises(Infeasible) as exc:
        solve_hard_margin(Dataset([[1.0, 0.0], [-1.0, 0.0]]))
    assert np.linalg.norm(exc.value.hull_point) <= 1e-8


def test_brute_force_two_point():
    a = solve_hard_margin(make_appendix_d_dataset())
    b = brute_force_margin(make_appendix_d_dataset())
    assert np.allclose(a.w_hat, b.w_hat, atol=1e-10)


def test_brute_force_limit():
    with pytest.raises(ValueError):
        brute_force_margin(Dataset(np.ones((13, 2))))


def test_duplicates_same_w_hat():
    ds = Dataset([[1.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]])
    a, b = solve_hard_margin(ds), brute_force_margin(ds)
    assert np.allclose(a.w_hat, [1.0, 0.5], atol=1e-10)
    assert np.allclose(a.w_hat, b.w_hat, atol=1e-10)
    assert set(a.support) == set(b.support) == {0, 1, 2}


@pytest.mark.parametrize("seed", range(40))
def test_solver_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ds = random_separable(rng, int(rng.integers(1, 11)), int(rng.integers(1, 5)))
    a, b = solve_hard_margin(ds), brute_force_margin(ds)
    assert np.linalg.norm(a.w_hat - b.w_hat) <= 1e-6
    assert max(a.residuals.values()) <= 1e-8


# -- structural invariants ---------------------------------------------------------

@given(st.integers(0, 10_000), st.integers(2, 10), st.integers(1, 4))
def test_kkt_invariants(seed, n, d):
    ds = random_separable(np.random.default_rng(seed), n, d)
    sol = solve_hard_margin(ds)
    X = ds.points
    m = X @ sol.w_hat
    assert np.all(m >= 1 - 1e-9)
    S = list(sol.support)
    assert np.allclose(m[S], 1.0, atol=1e-9)
    assert np.linalg.norm(sol.w_hat - sol.alpha @ X[S]) <= 1e-8 * max(1.0, np.linalg.norm(sol.w_hat))
    assert np.all(sol.alpha >= 0)
    if len(S) < n:
        assert sol.theta > 1


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_scaling_covariance(seed, s):
    ds = random_separable(np.random.default_rng(seed), 6, 3)
    a = solve_hard_margin(ds)
    b = solve_hard_margin(Dataset(ds.points * s))
    assert np.allclose(b.w_hat, a.w_hat / s, rtol=1e-7, atol=1e-9 / s)
    assert b.gamma == pytest.approx(a.gamma * s, rel=1e-7)
    assert a.support == b.support


def test_min_norm_point_simplex():
    res = min_norm_point(np.eye(3))
    assert np.allclose(res.point, [1 / 3] * 3, atol=1e-14)
    assert np.allclose(res.weights, 1 / 3, atol=1e-14)


# -- auxiliary systems -----------------------------------------------------------

def test_a_two_point():
    a = solve_a(solve_hard_margin(make_appendix_d_dataset()))
    assert np.allclose(a, [0.0, LOG2], atol=1e-10)


def test_a_zero_when_duals_are_one():
    # e1, e2: w_hat = (1, 1), alpha = (1, 1)
    a = solve_a(solve_hard_margin(Dataset(np.eye(2))))
    assert np.allclose(a, 0.0, atol=1e-12)


def test_a_zero_dual():
    # middle point is on the margin but carries no weight
    ds = Dataset([[1.0, -1.0], [1.0, 0.0], [1.0, 1.0]])
    sol = solve_hard_margin(ds)
    assert 1 in sol.support
    with pytest.raises(ZeroDual):
        solve_a(sol)


@given(st.integers(0, 10_000))
def test_a_plug_back(seed):
    ds = random_separable(np.random.default_rng(seed), 7, 3)
    sol = solve_hard_margin(ds)
    try:
        a = solve_a(sol)
    except (ZeroDual, DegenerateSpan):
        return
    assert np.allclose(np.exp(-sol.support_points @ a), sol.alpha, rtol=1e-8)
    assert np.linalg.norm(a - sol.P1 @ a) <= 1e-9 * max(1.0, np.linalg.norm(a))


def test_wtilde_equals_a_at_unit_nu_eta():
    sol = solve_hard_margin(make_appendix_d_dataset())
    assert np.allclose(solve_wtilde(sol, 1.0, 1.0), [0.0, LOG2], atol=1e-12)


def test_wtilde_nu2():
    sol = solve_hard_margin(make_appendix_d_dataset())
    assert np.allclose(solve_wtilde(sol, 2.0, 1.0), [0.0, LOG2 / 2], atol=1e-12)


def test_wtilde_zero_when_eta_matches_duals():
    sol = solve_hard_margin(Dataset(np.eye(2) * 0.5))
    assert np.allclose(sol.alpha, 4.0)
    assert np.allclose(solve_wtilde(sol, 0.7, 4.0), 0.0, atol=1e-12)


def test_wtilde_lambda_reconstructs():
    sol = solve_hard_margin(make_fig1_dataset(6, 17))
    wt, lam = solve_wtilde(sol, 0.5, 1.0, return_lambda=True)
    assert np.allclose(lam @ sol.support_points, wt, atol=1e-10)


def test_wbar_wcheck_vanish_at_nu1():
    sol = solve_hard_margin(make_appendix_d_dataset())
    assert np.allclose(solve_wbar(sol, 1.0), 0.0, atol=1e-14)
    assert np.allclose(solve_wcheck2(sol, 1.0), 0.0, atol=1e-14)


def test_wbar_wcheck_plug_back_half():
    sol = solve_hard_margin(make_appendix_d_dataset())
    nu = 0.5
    wt, lam = solve_wtilde(sol, nu, 1.0, return_lambda=True)
    Xs = sol.support_points
    wb = solve_wbar(sol, nu)
    assert np.allclose(Xs @ wb, nu * (1 - nu) / nu * lam * np.exp(nu * Xs @ wt), atol=1e-10)
    wc = solve_wcheck2(sol, nu)
    assert np.allclose(Xs @ wc, nu * (nu - 1) / 2 * (Xs @ wt) ** 2, atol=1e-10)


def test_wbar_symmetric_case():
    sol = solve_hard_margin(Dataset(np.eye(2)))
    wb = solve_wbar(sol, 0.5, 2.0)
    assert wb[0] == pytest.approx(wb[1], rel=1e-12)


def test_with_theory_projections():
    sol = solve_hard_margin(make_fig1_dataset(6, 17)).with_theory(0.5, 1.0)
    for v in (sol.a_vec, sol.w_tilde, sol.w_bar, sol.w_check2):
        assert np.linalg.norm(v - sol.P1 @ v) <= 1e-9


# -- duality and general norms -----------------------------------------------------

def test_dual_l2_two_point():
    v = dual_margin_lower_bound(make_appendix_d_dataset(), "L2")
    assert v == pytest.approx(2 / math.sqrt(5), abs=1e-8)


def test_dual_l2_two_point_grid_oracle():
    X = make_appendix_d_dataset().points
    r = np.linspace(0, 1, 100_001)
    vals = np.linalg.norm(np.outer(r, X[0]) + np.outer(1 - r, X[1]), axis=1)
    assert vals.min() == pytest.approx(2 / math.sqrt(5), abs=1e-9)


def test_dual_single_point():
    ds = Dataset([[0.3, 0.4]])
    for norm, want in (("L2", 0.5), ("L1", 0.4), ("Linf", 0.7)):
        assert dual_margin_lower_bound(ds, norm) == pytest.approx(want, abs=1e-9)


def test_dual_clusters_matches_gamma():
    ds = make_fig1_dataset(6, 17)
    assert dual_margin_lower_bound(ds, "L2") == pytest.approx(solve_hard_margin(ds).gamma, abs=1e-6)


def test_general_norm_l2_two_point():
    assert general_norm_margin(make_appendix_d_dataset(), "L2") == pytest.approx(2 / math.sqrt(5), abs=1e-6)


def test_general_norm_linf_l1():
    ds = Dataset(np.eye(2))
    assert general_norm_margin(ds, "Linf") == pytest.approx(1.0, abs=1e-6)
    assert general_norm_margin(ds, "L1") == pytest.approx(0.5, abs=1e-6)


def test_general_norm_l1_vertex_enumeration():
    # L1 sphere in 2-D: max of a concave min over the four edges, checked by dense edge sampling
    rng = np.random.default_rng(4)
    ds = random_separable(rng, 5, 2)
    s = np.linspace(0, 1, 200_001)
    best = -np.inf
    for a, b in itertools.combinations([(1, 0), (0, 1), (-1, 0), (0, -1)], 2):
        a, b = np.array(a, float), np.array(b, float)
        if abs(a @ b) == 1:
            continue
        W = np.outer(s, a) + np.outer(1 - s, b)
        best = max(best, float(np.max(np.min(W @ ds.points.T, axis=1))))
    assert general_norm_margin(ds, "L1") == pytest.approx(best, abs=1e-5)


def test_general_norm_dimension_limit():
    with pytest.raises(ValueError):
        general_norm_margin(Dataset(np.eye(4)), "L2")


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("norm", ["L1", "L2", "Linf"])
def test_duality_sandwich(seed, norm):
    ds = random_separable(np.random.default_rng(100 + seed), 6, 2)
    g = general_norm_margin(ds, norm)
    v = dual_margin_lower_bound(ds, norm)
    assert g <= v + 2e-6


def test_canonical_norm_aliases():
    assert canonical_norm("inf") == "Linf"
    assert canonical_norm("l1") == "L1"
    with pytest.raises(ValueError):
        canonical_norm("L3")


def test_rescaled_keeps_support():
    ds = make_fig1_dataset(6, 17, rescaled=False)
    r, s = rescale(ds)
    a, b = solve_hard_margin(ds), solve_hard_margin(r)
    assert a.support == b.support
    assert b.gamma == pytest.approx(a.gamma * s, rel=1e-10)


def test_tiny_margin_certifies():
    # gamma ~ 1/737: duals near 5e5, Gram matrix condition ~ 1e6
    X = np.array([[0.8298553070613239, -1.643023371405677],
                  [-0.0206903940375912, 0.03788574104406823],
                  [-0.48800582327685743, -0.7133133716322436]])
    sol = solve_hard_margin(Dataset(X))
    assert sol.kkt_ok
    assert sol.support == (0, 1)
    assert np.allclose(X[:2] @ sol.w_hat, 1.0, atol=1e-12)
    b = brute_force_margin(Dataset(X))
    assert np.linalg.norm(sol.w_hat - b.w_hat) <= 1e-6 * np.linalg.norm(b.w_hat)
