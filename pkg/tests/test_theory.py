"""Closed-form constants, step-size ceilings and error-model formulas."""


import numpy as np
import pytest

from biased_momentum import (
    ConfigurationError,
    EstimatorSpec,
    NoiseSpec,
    affine_constants_clip,
    affine_constants_composite,
    affine_constants_compression,
    build_theory_report,
    lemma1_constants,
    lemma_stepsize_bound,
    lyapunov_weight,
    make_quadratic,
    momentum_alpha,
    stepsize_bounds,
    theorem_bounds,
    theta0_value,
)
from biased_momentum.rng import substream


# ---------------------------------------------------------------------------
# descent weights


def test_lemma1_beta_one_reduces_to_classic_descent():
    B1, B2, B3 = lemma1_constants(gamma=0.2, beta=1.0, L=1.0, A=0.0)
    assert B1 == 0.0
    assert B2 == pytest.approx(1 / 0.4 - 0.5)
    assert B3 == pytest.approx(0.1)


def test_lemma1_boundary_gamma_one_over_L():
    _, B2, _ = lemma1_constants(gamma=1.0, beta=1.0, L=1.0, A=0.0)
    assert B2 == pytest.approx(0.0)


def test_lemma1_paper_setting_violates_descent_regime():
    # gamma=0.5, beta=0.1, L=1, A = gamma(1-beta)/beta = 4.5 -> B2 < 0:
    # the descent inequality is NOT guaranteed at that operating point
    A = lyapunov_weight(0.5, 0.1, "ncvx")
    assert A == pytest.approx(4.5)
    B1, B2, B3 = lemma1_constants(0.5, 0.1, 1.0, A)
    assert B1 == pytest.approx(4.5)
    assert B2 == pytest.approx(-94.0)
    assert B3 == pytest.approx(0.4975)


@pytest.mark.parametrize("regime,expected", [("ncvx", 4.5), ("pl", 9.0)])
def test_lyapunov_weight(regime, expected):
    assert lyapunov_weight(0.5, 0.1, regime) == pytest.approx(expected)
    assert lyapunov_weight(0.3, 1.0, regime) == 0.0


# ---------------------------------------------------------------------------
# step-size ceilings


def test_stepsize_beta_one_is_one_over_L():
    g_ncvx, g_pl = stepsize_bounds(1.0, L=2.0, mu=0.5)
    assert momentum_alpha(1.0, "ncvx") == 0.0
    assert g_ncvx == pytest.approx(0.5)
    assert g_pl == pytest.approx(min(0.5, 1.0))


def test_stepsize_ncvx_frozen_value():
    assert momentum_alpha(0.1, "ncvx") == pytest.approx(378.0)
    g_ncvx, _ = stepsize_bounds(0.1, L=1.0)
    assert g_ncvx == pytest.approx(0.04891836099528802, rel=1e-12)


def test_stepsize_pl_frozen_value():
    assert momentum_alpha(0.5, "pl") == pytest.approx(20.0)
    _, g_pl = stepsize_bounds(0.5, L=2.0, mu=0.1)
    assert g_pl == pytest.approx(0.0913719988157784, rel=1e-12)


def test_stepsize_pl_none_without_mu():
    _, g_pl = stepsize_bounds(0.5, L=2.0, mu=0.0)
    assert g_pl is None


def test_gamma_max_monotone_in_beta():
    grid = np.linspace(0.01, 1.0, 100)
    vals = [stepsize_bounds(b, L=1.5)[0] for b in grid]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_lemma_stepsize_inequality_random():
    rng = substream(41, 2, 0)
    for _ in range(10_000):
        a, b, c = rng.uniform(0.01, 10.0, size=3)
        bound = lemma_stepsize_bound(a, b, c)
        for gamma in (bound, bound * rng.uniform(0.01, 1.0)):
            assert a / gamma - b - c * gamma >= -1e-9 * (b + c * gamma)
        # just above the bound the inequality MAY fail; nothing asserted


def test_b2_nonnegative_at_admissible_gamma():
    rng = substream(42, 2, 1)
    for _ in range(2_000):
        beta = rng.uniform(0.02, 1.0)
        L = rng.uniform(0.1, 10.0)
        mu = rng.uniform(0.001, L)
        g_ncvx, g_pl = stepsize_bounds(beta, L, mu)
        for gamma, regime in ((g_ncvx * rng.uniform(0.05, 1.0), "ncvx"),
                              (g_pl * rng.uniform(0.05, 1.0), "pl")):
            A = lyapunov_weight(gamma, beta, regime)
            _, B2, _ = lemma1_constants(gamma, beta, L, A)
            assert B2 >= -1e-9 * max(1.0, L)


def test_b1_b3_always_nonnegative():
    rng = substream(43, 2, 2)
    for _ in range(2_000):
        gamma = rng.uniform(1e-3, 5.0)
        beta = rng.uniform(0.01, 1.0)
        A = rng.uniform(0.0, 10.0)
        B1, _, B3 = lemma1_constants(gamma, beta, 1.0, A)
        assert B1 >= 0.0 and B3 >= 0.0


# ---------------------------------------------------------------------------
# error-model constants


def test_compression_constants_alpha_one():
    B, C = affine_constants_compression(1.0, sigma2=0.0, delta2_het=0.0)
    assert B == pytest.approx(7 / 8)
    assert C == 0.0


def test_compression_constants_frozen_arithmetic():
    B, C = affine_constants_compression(1.0, sigma2=1.0, delta2_het=1.0)
    assert B == pytest.approx(7 / 8)
    assert C == pytest.approx(12.25)  # 0.75*9*1 + (0.5*5 + 3)*1


def test_compression_constants_alpha_half():
    B, C = affine_constants_compression(0.5, sigma2=0.0, delta2_het=0.0)
    assert B == pytest.approx(15 / 16)
    assert C == 0.0


def test_clip_constants():
    assert affine_constants_clip(0.0, 1.0, 0.0, 1.0) == (0.0, pytest.approx(1.0))
    B, C = affine_constants_clip(1.0, 1.0, 1.0, 2.0)
    assert B == 0.0
    assert C == pytest.approx(12.0)  # max(2 + 4 + 4, 0) + 2
    # tau -> 0+ with no noise/bias: C -> 0
    _, C_small = affine_constants_clip(0.0, 1.0, 0.0, 1e-9)
    assert C_small < 1e-17


def test_composite_constants():
    B, C, L = affine_constants_composite(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 3, 3, L_g=2.0)
    assert (B, C) == (0.0, 0.0)
    assert L == pytest.approx(2.0 * 1.0 + 1.0)
    _, C3, _ = affine_constants_composite(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3, 3)
    assert C3 == pytest.approx(3.0)  # 1 + 1 + 1
    _, C1, _ = affine_constants_composite(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1, 1)
    assert C1 == pytest.approx(9.0)


def test_c_nonnegative_random():
    rng = substream(44, 2, 3)
    for _ in range(2_000):
        alpha = rng.uniform(1e-3, 1.0)
        s2, d2 = rng.uniform(0, 5.0, size=2)
        _, C = affine_constants_compression(alpha, s2, d2)
        assert C >= 0.0
        _, Cc = affine_constants_clip(s2, rng.uniform(0, 4), d2, rng.uniform(0.01, 3))
        assert Cc >= 0.0


# ---------------------------------------------------------------------------
# theorem right-hand sides


def _pl_quadratic_report(beta=0.5, gamma=None, sigma2=0.0):
    p = make_quadratic(np.eye(10))
    if gamma is None:
        gamma = stepsize_bounds(beta, p.L, p.mu)[1]
    x0 = np.zeros(10)
    x0[0] = 1.0  # f(x0) = 0.5
    return p, build_theory_report(
        p, gamma, beta, EstimatorSpec(), NoiseSpec(sigma2=sigma2), x0=x0
    )


def test_theta0_with_matched_v_init():
    p, report = _pl_quadratic_report()
    assert report.grad_v_err0_sq == 0.0
    assert report.theta0 == pytest.approx(4.0 / report.gamma * 0.5)
    assert theta0_value(report.gamma, report.beta, 0.5, 0.0) == report.theta0


def test_bounds_vanish_without_bias():
    _, report = _pl_quadratic_report()
    ncvx_rhs, pl_rhs = theorem_bounds(report)
    assert report.floor_ncvx == 0.0 and report.floor_pl == 0.0
    assert ncvx_rhs(10**9) < 1e-6
    assert pl_rhs(10_000) < 1e-300 or pl_rhs(10_000) == 0.0


def test_pl_rhs_frozen_tabulation_and_recurrence_oracle():
    _, report = _pl_quadratic_report(beta=0.5)
    assert report.gamma == pytest.approx(0.1827439976315568, rel=1e-12)
    _, pl_rhs = theorem_bounds(report)
    # frozen from the independent recurrence e_{k+1} = (1 - mu gamma/2) e_k
    assert pl_rhs(10) == pytest.approx(0.1917923001707895, rel=1e-12)
    assert pl_rhs(100) == pytest.approx(3.448114175074651e-05, rel=1e-12)
    # recurrence (with the bias term) never exceeds the closed form
    _, report_b = _pl_quadratic_report(beta=0.5, sigma2=0.01)
    _, pl_rhs_b = theorem_bounds(report_b)
    rate = 1 - report_b.mu * report_b.gamma / 2
    hat_d = 2 - report_b.beta / 2 - report_b.beta**2
    e = report_b.phi0_pl
    for k in range(1, 200):
        e = rate * e + report_b.gamma * hat_d * report_b.C_var
        assert e <= pl_rhs_b(k) * (1 + 1e-12)


def test_condition_flags_two_code_paths_agree():
    # direct formula flags vs re-derivation from the descent-weight signs
    for beta in (0.1, 0.3, 0.6, 0.9, 1.0):
        for frac in (0.5, 1.0):
            p = make_quadratic(spectrum=np.linspace(0.5, 2.0, 10), seed=1)
            g_ncvx, g_pl = stepsize_bounds(beta, p.L, p.mu)
            gamma = frac * g_pl
            report = build_theory_report(
                p, gamma, beta, EstimatorSpec(), NoiseSpec(), x0=np.ones(10)
            )
            # path 2: admissible gamma must give B2 >= 0 with the regime A
            _, B2, _ = lemma1_constants(
                gamma, beta, p.L, lyapunov_weight(gamma, beta, "pl")
            )
            assert report.gamma_ok_pl == (gamma <= g_pl)
            if report.gamma_ok_pl:
                assert B2 >= -1e-12
            assert report.cond_B_ncvx_ok == ((1 - beta**2 / 2) * report.B_var <= 0.25)
            assert report.cond_B_pl_ok == (
                (2 - beta / 2 - beta**2) * report.B_var <= 0.25
            )


def test_report_identity_estimator_uses_averaging_identity():
    d, n = 10, 4
    p = make_quadratic(np.eye(d), n_workers=n)
    noise = NoiseSpec(sigma2=0.01)
    report = build_theory_report(p, 0.1, 0.5, EstimatorSpec(), noise, x0=np.ones(d))
    assert report.B_var == 0.0
    assert report.C_var == pytest.approx(d * 0.01 / n)
    assert report.sigma2_worker == pytest.approx(d * 0.01)


def test_report_beta_one_invariants():
    p = make_quadratic(np.eye(4))
    report = build_theory_report(p, 0.5, 1.0, EstimatorSpec(), NoiseSpec(), x0=np.ones(4))
    assert report.alpha_ncvx == 0.0 and report.alpha_pl == 0.0
    assert report.gamma_max_ncvx == pytest.approx(1.0 / p.L)
    assert report.A_ncvx == 0.0 and report.A_pl == 0.0


def test_report_round_trip():
    from biased_momentum.theory import TheoryReport

    _, report = _pl_quadratic_report()
    again = TheoryReport.from_dict(report.to_dict())
    assert again == report


def test_validation_errors():
    with pytest.raises(ConfigurationError):
        momentum_alpha(0.0, "ncvx")
    with pytest.raises(ConfigurationError):
        lemma1_constants(-0.1, 0.5, 1.0, 0.0)
    with pytest.raises(ConfigurationError):
        affine_constants_compression(1.5, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        affine_constants_clip(0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        stepsize_bounds(0.5, L=0.0)
