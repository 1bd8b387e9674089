import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special, stats

from lrdsojourn.covariance import ConstantHook, ExponentialBaseline, NuggetHook, Separable
from lrdsojourn.errors import DomainError, ParameterError, RegimeError
from lrdsojourn.geomprob import (BodySpec, ball_volume, pair_distances, sphere_area,
                                 uniform_sphere_points)
from lrdsojourn.hermite import indicator_coeffs
from lrdsojourn.sojourn import ThresholdSpec
from lrdsojourn.variance import (asymptotic_constants, chaos_variance_sum, discrete_chaos_variance,
                                 discrete_sojourn_variance, growth_ratio_diagnostic, joint_exceed_prob,
                                 separable_factors, sigma2_ball, sigma2_body, sigma2_sphere,
                                 sigma2_table, var_sojourn_exact, write_sigma2_csv)
from lrdsojourn.fields import GridSpec

EXP = ExponentialBaseline(1.0, 1.0)


@pytest.mark.parametrize("m, d, gamma, T", [(1, 2, 0.0, 3.0), (2, 3, 0.5, 2.0), (3, 2, 1.0, 1.5)])
def test_sigma2_ball_constant_hook(m, d, gamma, T):
    want = math.factorial(m) * ball_volume(d) ** 2 * T ** (2 + 2 * gamma * d)
    assert sigma2_ball(m, d, gamma, T, ConstantHook()).value == pytest.approx(want, rel=1e-10)


def test_sigma2_ball_nugget_is_zero():
    assert sigma2_ball(1, 2, 0.0, 4.0, NuggetHook()).value == pytest.approx(0.0, abs=1e-12)


def _ball_density_oracle(d, z):
    # independent route through scipy's incomplete beta
    return d * z ** (d - 1) * special.betainc((d + 1) / 2, 0.5, np.clip(1 - z * z / 4, 0, 1))


def test_ball_density_oracle_normalised():
    assert integrate.quad(lambda z: _ball_density_oracle(3, z), 0, 2)[0] == pytest.approx(1.0, abs=1e-10)


def test_sigma2_ball_dense_trapezoid():
    T, d = 10.0, 2
    n = 2000
    tau = np.linspace(0, T, n + 1)
    z = np.linspace(0, 2, n + 1)
    f = (2 * T * (1 - tau / T))[:, None] * _ball_density_oracle(d, z)[None, :] * EXP(z[None, :], tau[:, None])
    oracle = ball_volume(d) ** 2 * integrate.trapezoid(integrate.trapezoid(f, z, axis=1), tau)
    got = sigma2_ball(1, d, 0.0, T, EXP).value
    assert got == pytest.approx(oracle, rel=1e-4)


def test_sigma2_body_on_ball_equals_ball():
    for m, gamma in ((1, 0.0), (2, 0.5)):
        a = sigma2_ball(m, 2, gamma, 4.0, EXP).value
        b = sigma2_body(m, BodySpec.unit_ball(2), gamma, 4.0, EXP).value
        assert b == pytest.approx(a, rel=1e-8)


def test_sigma2_body_constant_hook_cube():
    body = BodySpec.cube(2)
    got = sigma2_body(2, body, 0.0, 3.0, ConstantHook()).value
    assert got == pytest.approx(2 * 1.0 * 9.0, rel=1e-3)  # raw chord table mass is within 1e-3 of 1


def test_sigma2_body_cube_monte_carlo():
    T = 5.0
    body = BodySpec.cube(2)
    rng = np.random.default_rng(7)
    n = 1_000_000
    r = pair_distances(body, n, rng)
    tau = np.abs(rng.random(n) - rng.random(n)) * T
    c = EXP(r, tau)
    est = T * T * c.mean()
    se = T * T * c.std() / math.sqrt(n)
    assert abs(sigma2_body(1, body, 0.0, T, EXP).value - est) < 3 * se


def test_separable_factors_product():
    mod = Separable(alpha_s=1.0, A=0.4)
    for m, gamma in ((1, 0.0), (1, 1.0), (2, 0.5)):
        b1, b2 = separable_factors(m, mod, 6.0, gamma, 2)[:2]
        assert math.factorial(m) * b1 * b2 == pytest.approx(sigma2_ball(m, 2, gamma, 6.0, mod).value, rel=1e-7)


def test_separable_factors_need_separable():
    with pytest.raises(ParameterError):
        separable_factors(1, EXP, 5.0, 0.0, 2)


def test_b1_weak_limit():
    mod = Separable(alpha_s=1.0, A=3.0)
    L1 = asymptotic_constants(mod, 1, 2, 0.0).require("L1")
    ratios = [separable_factors(1, mod, T, 0.0, 2)[0] / (2 * L1 * T) for T in (1e2, 1e3, 1e4)]
    assert np.all(np.diff(np.abs(np.array(ratios) - 1)) < 0)
    assert ratios[-1] == pytest.approx(1.0, abs=1e-3)


def test_b1_lrd_limit():
    mod = Separable(alpha_s=1.0, A=0.5)
    L2 = asymptotic_constants(mod, 1, 2, 0.0).require("L2")
    assert L2 == pytest.approx(4 / 3)
    ratios = [separable_factors(1, mod, T, 0.0, 2)[0] / (2 * L2 * T ** 1.5) for T in (1e2, 1e4, 1e6)]
    assert np.all(np.diff(np.abs(np.array(ratios) - 1)) < 0)
    assert ratios[-1] == pytest.approx(1.0, abs=2e-3)


def test_L5_quadrature():
    d, m, al = 2, 1, 1.0
    c = asymptotic_constants(Separable(alpha_s=al, A=0.4), m, d, 1.0)
    oracle = ball_volume(d) ** 2 * d * integrate.quad(
        lambda w: w ** (d - 1 - m * al) * special.betainc((d + 1) / 2, 0.5, 1 - w * w / 4), 0, 2,
        epsabs=1e-13, epsrel=1e-12)[0]
    assert c.L5 == pytest.approx(oracle, rel=1e-8)
    assert c.L5 == pytest.approx(16.755, abs=5e-4)


def test_growth_exponent():
    c = asymptotic_constants(Separable(alpha_s=1.0, A=0.4), 1, 2, 1.0)
    assert c.exponent == pytest.approx(4.6)
    assert c.regime == "LRD-space-time"
    with pytest.raises(RegimeError):
        c.require("L1")


@pytest.mark.parametrize("u", [-2.0, 0.0, 1.5])
def test_joint_exceed_independent(u):
    assert joint_exceed_prob(u, 0.0) == pytest.approx((1 - stats.norm.cdf(u)) ** 2, abs=1e-15)


def test_joint_exceed_perfect_correlation():
    assert joint_exceed_prob(0.0, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_joint_exceed_quadrature():
    u, rho = 1.0, 0.5
    dens = stats.multivariate_normal([0, 0], [[1, rho], [rho, 1]]).pdf
    q = integrate.dblquad(lambda y, x: dens([x, y]), u, 12, u, 12, epsabs=1e-12)[0]
    assert joint_exceed_prob(u, rho) == pytest.approx(q, abs=1e-6)


@given(u=st.floats(-3, 3), r1=st.floats(-1, 1), r2=st.floats(-1, 1))
def test_joint_exceed_monotone_in_rho(u, r1, r2):
    lo, hi = sorted((r1, r2))
    assert joint_exceed_prob(u, lo) <= joint_exceed_prob(u, hi) + 1e-14


def test_joint_exceed_domain():
    with pytest.raises(DomainError):
        joint_exceed_prob(0.0, 1.5)


def test_var_sojourn_limits():
    ball = BodySpec.unit_ball(2)
    assert var_sojourn_exact(1.0, 4.0, ball, 0.0, NuggetHook()).value == pytest.approx(0.0, abs=1e-12)
    assert var_sojourn_exact(-np.inf, 4.0, ball, 0.0, EXP).value == 0.0


def test_var_sojourn_accepts_threshold_spec():
    ball = BodySpec.unit_ball(2)
    a = var_sojourn_exact(ThresholdSpec.fixed(0.5), 4.0, ball, 0.0, EXP).value
    b = var_sojourn_exact(0.5, 4.0, ball, 0.0, EXP).value
    assert a == b


def test_chaos_sum_converges_to_exact():
    ball = BodySpec.unit_ball(2)
    u, T = 1.0, 5.0
    exact = var_sojourn_exact(u, T, ball, 0.0, EXP).value
    sums = chaos_variance_sum(indicator_coeffs(u, 12), 12, T, ball, 0.0, EXP)
    assert np.all(np.diff(sums) >= 0)
    assert sums[-1] == pytest.approx(exact, rel=0.02)
    assert sums[-1] <= exact * (1 + 1e-6)


def test_discrete_variances_constant_hook():
    grid = GridSpec(2, 4.0, 0.0, 6, 5, BodySpec.unit_ball(2))
    M = grid.measure
    assert discrete_chaos_variance(grid, ConstantHook(), 2) == pytest.approx(2 * M * M, rel=1e-12)
    p = 1 - stats.norm.cdf(0.3)
    assert discrete_sojourn_variance(grid, ConstantHook(), 0.3) == pytest.approx(p * (1 - p) * M * M, rel=1e-10)


def test_growth_diagnostic_accepted_increasing():
    mod = Separable(alpha_s=1.0, A=0.4)
    g = growth_ratio_diagnostic(1, BodySpec.unit_ball(2), 0.0, 2, mod, 0.3, 0.0, [10, 20, 40, 80])
    assert g.increasing


def test_growth_diagnostic_weak_decreasing():
    mod = Separable(alpha_s=1.0, A=2.0)
    g = growth_ratio_diagnostic(1, BodySpec.unit_ball(2), 0.0, 2, mod, 0.3, 0.0, [10, 20, 40, 80])
    assert g.decreasing


def test_growth_diagnostic_constant_hook():
    Ts = [10, 20, 40, 80]
    g = growth_ratio_diagnostic(1, BodySpec.unit_ball(2), 0.0, 2, ConstantHook(), 0.5, 0.0, Ts)
    np.testing.assert_allclose(g.ratios, [math.pi ** 2 * T ** 0.5 for T in Ts], rtol=1e-9)
    assert g.increasing


def test_growth_diagnostic_needs_four_points():
    with pytest.raises(ParameterError):
        growth_ratio_diagnostic(1, BodySpec.unit_ball(2), 0.0, 2, EXP, 0.3, 0.0, [10, 20, 40])


@pytest.mark.parametrize("n, d", [(1, 2), (2, 3), (1, 4)])
def test_sigma2_sphere_constant_hook(n, d):
    T = 3.0
    want = math.factorial(n) * T * T * sphere_area(d) ** 2
    assert sigma2_sphere(n, d, T, ConstantHook()).value == pytest.approx(want, rel=1e-10)


def test_sigma2_sphere_monte_carlo():
    T, d = 20.0, 3
    rng = np.random.default_rng(11)
    n = 1_000_000
    z = np.linalg.norm(uniform_sphere_points(d, n, rng) - uniform_sphere_points(d, n, rng), axis=1)
    tau = np.abs(rng.random(n) - rng.random(n)) * T
    c = EXP(z, tau)
    scale = T * T * sphere_area(d) ** 2
    assert abs(sigma2_sphere(1, d, T, EXP).value - scale * c.mean()) < 3 * scale * c.std() / math.sqrt(n)


def test_sigma2_table_csv(tmp_path):
    rows = sigma2_table([2.0, 4.0], 1, BodySpec.unit_ball(2), 0.0, EXP)
    p = tmp_path / "s.csv"
    write_sigma2_csv(rows, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "T,sigma2,err,ratio" and len(lines) == 3


def test_negative_T_rejected():
    with pytest.raises(DomainError):
        sigma2_ball(1, 2, 0.0, -1.0, EXP)
