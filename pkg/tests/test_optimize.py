import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from implicitbias import _kernels as K
from implicitbias.dataset import make_appendix_d_dataset, make_fig1_dataset
from implicitbias.losses import LossSpec, smoothness_bound, total_loss
from implicitbias.maxmargin import general_norm_margin, solve_hard_margin
from implicitbias.optimize import (COLUMNS, BoundViolation, NonFiniteIterate, OptimizerConfig,
                                   StepSizeError, TrajectoryRecord, checkpoint_grid,
                                   loss_upper_bound_cert, polyak_check, residual, run,
                                   run_gd, run_normalized_gd, run_steepest_descent, thm4_bound)
from implicitbias.rates import g_poly_exp

FIG1 = make_fig1_dataset(6, 17)
APPD = make_appendix_d_dataset()
APPD_R = make_appendix_d_dataset(rescaled=True)


def test_checkpoint_grid():
    g = checkpoint_grid(10**4)
    assert g[0] == 0 and g[-1] == 10**4
    assert np.all(np.diff(g) > 0)
    for p in (1, 10, 100, 1000, 10**4):
        assert p in g
    assert list(checkpoint_grid(0)) == [0]


def test_gd_one_step_two_point():
    rec = run_gd(OptimizerConfig(iterations=1, eta=0.25, strict=False), APPD)
    assert np.allclose(rec.iterates[1], [0.25, 0.5], rtol=1e-15)


def test_gd_step_size_guard():
    with pytest.raises(StepSizeError):
        run_gd(OptimizerConfig(iterations=5, eta=0.5), APPD)


def test_gd_step_size_beta_rule():
    spec = LossSpec.logistic()
    with pytest.raises(StepSizeError):
        run_gd(OptimizerConfig(loss=spec, iterations=5, eta=8.0), APPD_R)


@pytest.mark.parametrize("eta", [0.0, -1.0, math.inf, math.nan])
def test_gd_invalid_eta(eta):
    with pytest.raises(StepSizeError):
        run_gd(OptimizerConfig(iterations=5, eta=eta), APPD_R)


def test_gd_exp_clusters_descent_and_certificates():
    rec = run_gd(OptimizerConfig(iterations=10**5), FIG1)
    assert rec.passed, rec.checks
    assert rec.checks["descent_every_step"]["violations"] == 0
    L = np.exp(rec["logL"])
    assert np.all(L <= rec["loss_bound"] * (1 + 1e-12))


def test_gd_logistic_monotone():
    beta = smoothness_bound(LossSpec.logistic())
    rec = run_gd(OptimizerConfig(loss=LossSpec.logistic(), iterations=10**4, eta=0.9 * 2 / beta), FIG1)
    assert rec.checks["descent"]["passed"]


@pytest.mark.parametrize("spec", [LossSpec.exp(), LossSpec.logistic(), LossSpec.polyexp(0.5),
                                  LossSpec.polyexp(1.5), LossSpec.powerlaw(), LossSpec.subpolyexp(2.0)],
                         ids=["exp", "logistic", "pe0.5", "pe1.5", "powerlaw", "spe2"])
def test_gd_descent_matrix(spec):
    rec = run_gd(OptimizerConfig(loss=spec, iterations=10**4), FIG1)
    assert rec.checks["descent"]["passed"]
    wn = rec["w_norm"][1:]
    assert np.all(np.diff(wn) > 0)
    assert np.all(rec["min_margin"][rec.t >= 1000] > 0)


def test_gd_kernel_matches_python_loop():
    spec = LossSpec.polyexp(0.5)
    ds = APPD_R
    eta = 2.0
    rec = run_gd(OptimizerConfig(loss=spec, iterations=200, eta=eta), ds)
    from implicitbias.losses import gradient
    w = np.zeros(2)
    for _ in range(200):
        w = w - eta * gradient(spec, ds, w)
    assert np.allclose(rec.iterates[-1], w, rtol=1e-12)


def test_ngd_first_step():
    rec = run_normalized_gd(OptimizerConfig(iterations=1), APPD)
    assert np.allclose(rec.iterates[1], [0.5, 1.0], rtol=1e-15)


def test_margin_bound_bound_at_zero():
    g, N = 0.3, 16
    want = g - (0.5 + math.log(N)) / (g * (2 * math.sqrt(2) - 2))
    assert thm4_bound(0, g, N) == pytest.approx(want, rel=1e-15)


def test_ngd_margin_bound_holds():
    rec = run_normalized_gd(OptimizerConfig(iterations=10**5), FIG1)
    assert rec.checks["thm4"]["passed"]
    ok = rec.t >= 1
    assert np.all(rec["norm_margin"][ok] >= rec["thm4_bound"][ok] - 1e-9)


def test_ngd_gaussian_init_margin_bound():
    rec = run_normalized_gd(OptimizerConfig(iterations=10**4, init="gaussian", seed=3), FIG1)
    assert rec.checks["thm4"]["passed"]


def test_ngd_main_text_variant_overflows():
    with pytest.raises(NonFiniteIterate):
        run_normalized_gd(OptimizerConfig(iterations=1000), FIG1, variant=True)


def test_ngd_requires_exp():
    with pytest.raises(ValueError):
        run_normalized_gd(OptimizerConfig(loss=LossSpec.logistic(), iterations=10), FIG1)


def test_bound_violation_is_hard():
    # a huge fake gamma makes the certificate impossible
    sol = solve_hard_margin(FIG1)
    from dataclasses import replace
    fake = replace(sol, gamma=sol.gamma * 5)
    with pytest.raises(BoundViolation):
        run_normalized_gd(OptimizerConfig(iterations=10**4), FIG1, fake)


def test_steepest_directions():
    q = np.array([-3.0, 1.0])
    out = np.empty(2)
    K.steepest_direction(q, K.NORM_CODES["L1"], out)
    assert np.array_equal(out, [-1.0, 0.0])
    K.steepest_direction(q, K.NORM_CODES["Linf"], out)
    assert np.array_equal(out, [-1.0, 1.0])
    K.steepest_direction(np.array([2.0, -2.0]), K.NORM_CODES["L1"], out)
    assert np.array_equal(out, [1.0, 0.0])


def test_steepest_l2_fixed_equals_gd():
    eta = 0.05
    a = run_gd(OptimizerConfig(iterations=10**4, eta=eta), FIG1)
    b = run_steepest_descent(OptimizerConfig(algorithm="steepest", norm="L2", iterations=10**4, eta=eta), FIG1)
    assert np.allclose(a.iterates, b.iterates, rtol=1e-10, atol=1e-12)


def test_steepest_linf_margin_approaches_grid_oracle():
    rec = run_steepest_descent(OptimizerConfig(algorithm="steepest", norm="Linf", step_rule="inv_sqrt",
                                               iterations=10**5), FIG1)
    g = general_norm_margin(FIG1, "Linf")
    nm = rec["norm_margin"][-1]
    assert nm <= g + 1e-6
    assert g - nm < 0.05 * g
    assert rec.checks["thm4"]["passed"]


@pytest.mark.parametrize("norm", ["L1", "Linf"])
def test_steepest_fixed_loss_bound(norm):
    rec = run_steepest_descent(OptimizerConfig(algorithm="steepest", norm=norm, iterations=10**4), FIG1)
    assert rec.checks["loss_bound"]["passed"]
    assert rec.checks["polyak"]["passed"]


def test_loss_bound_cert_values():
    assert loss_upper_bound_cert(1, 0.5, 0.2, 4.0) == pytest.approx(1 / (0.5 * 0.04 + 0.25), rel=1e-15)
    t = 1e12
    assert loss_upper_bound_cert(t, 0.5, 0.2, 4.0) * (0.5 * 0.04 * t) == pytest.approx(1.0, rel=1e-9)


def test_polyak_at_origin():
    s = polyak_check(APPD, [0.0, 0.0], "L2", 2 / math.sqrt(5))
    assert s == pytest.approx(math.sqrt(5) - 4 / math.sqrt(5), rel=1e-12)


def test_polyak_single_point():
    from implicitbias.dataset import Dataset
    ds = Dataset([[0.6, 0.0]])
    for c in (0.0, 5.0, 50.0):
        assert polyak_check(ds, [c, 0.0], "L2") == pytest.approx(0.0, abs=1e-12)


@given(arrays(np.float64, 2, elements=st.floats(-30, 30, allow_nan=False)),
       st.sampled_from(["L1", "L2", "Linf"]))
def test_polyak_random(w, norm):
    assert polyak_check(FIG1, w, norm) >= -1e-9


def test_residual_nu1():
    sol = solve_hard_margin(FIG1)
    w = np.array([3.0, 4.0])
    assert np.allclose(residual(w, 100.0, sol, 1.0), w - sol.w_hat * math.log(100.0), rtol=1e-14)


def test_rho_column_matches_residual():
    sol = solve_hard_margin(FIG1)
    rec = run_gd(OptimizerConfig(iterations=1000), FIG1, sol)
    i = int(np.searchsorted(rec.t, 1000))
    assert rec["rho_norm"][i] == pytest.approx(np.linalg.norm(residual(rec.iterates[i], 1000, sol, 1.0)))
    assert np.all(np.isnan(rec["rho_norm"][rec.t < 3]))


def test_rho_uses_poly_g():
    sol = solve_hard_margin(APPD_R)
    rec = run_gd(OptimizerConfig(loss=LossSpec.polyexp(0.5), iterations=1000), APPD_R, sol)
    i = len(rec.t) - 1
    want = np.linalg.norm(rec.iterates[i] - sol.w_hat * g_poly_exp(1000.0, 0.5))
    assert rec["rho_norm"][i] == pytest.approx(want, rel=1e-12)


def test_metrics_definitions():
    sol = solve_hard_margin(FIG1)
    rec = run_gd(OptimizerConfig(iterations=100), FIG1, sol)
    w = rec.iterates[-1]
    nw = np.linalg.norm(w)
    uh = sol.w_hat / np.linalg.norm(sol.w_hat)
    row = rec.at(100)
    assert row["norm_margin"] == pytest.approx(np.min(FIG1.points @ w) / nw, rel=1e-13)
    assert row["margin_gap"] == pytest.approx(sol.gamma - row["norm_margin"], abs=1e-15)
    assert row["angle_gap"] == pytest.approx(1 - w @ uh / nw, abs=1e-14)
    assert row["dist_gap"] == pytest.approx(np.linalg.norm(w / nw - uh), rel=1e-12)
    assert row["logL"] == pytest.approx(math.log(total_loss(LossSpec.exp(), FIG1, w)), rel=1e-13)


def test_deterministic_runs():
    a = run(OptimizerConfig(algorithm="ngd", iterations=5000, init="gaussian", seed=2), FIG1)
    b = run(OptimizerConfig(algorithm="ngd", iterations=5000, init="gaussian", seed=2), FIG1)
    assert np.array_equal(a.iterates, b.iterates)


def test_record_csv_round_trip(tmp_path):
    rec = run_gd(OptimizerConfig(iterations=1000), FIG1)
    p = tmp_path / "t.csv"
    rec.to_csv(p)
    header = p.read_text().splitlines()[0]
    assert header == ",".join(COLUMNS)
    back = TrajectoryRecord.from_csv(p)
    for c in COLUMNS:
        assert np.array_equal(np.isnan(back[c]), np.isnan(rec[c]))
        ok = ~np.isnan(rec[c])
        assert np.array_equal(back[c][ok], rec[c][ok])


def test_config_round_trip():
    cfg = OptimizerConfig(algorithm="steepest", loss=LossSpec.polyexp(1.5), norm="inf", init=[1.0, 2.0])
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(algorithm="adam")
    with pytest.raises(ValueError):
        OptimizerConfig(step_rule="armijo")
    with pytest.raises(ValueError):
        OptimizerConfig(init=[1.0]).initial_point(2)
