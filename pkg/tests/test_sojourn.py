import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lrdsojourn.covariance import ConstantHook, ExponentialBaseline, GneitingML, Separable
from lrdsojourn.errors import (DomainError, InadmissibleThresholdError, ParameterError, TruncationWarning,
                              ZeroDenominatorError)
from lrdsojourn.fields import GridSpec, replicate_stats, simulate_grid_exact
from lrdsojourn.geomprob import BodySpec, sphere_area
from lrdsojourn.hermite import hermite, indicator_coeffs
from lrdsojourn.sojourn import (ThresholdSpec, condition5_ratio, hermite_projection_stat, minkowski_m1,
                                moving_threshold, normalized_stat, sojourn_general, sphere_sojourn,
                                write_replicates_csv)
from lrdsojourn.sphere import SphereGrid, SphericalSpectrum, simulate_sphere_field, time_grid
from lrdsojourn.variance import discrete_chaos_variance, sigma2_ball

BALL = BodySpec.unit_ball(2)
EXP = ExponentialBaseline(1.0, 1.0)


def unit_field(values):
    return SimpleNamespace(values=np.asarray(values, dtype=float), grid=SimpleNamespace(cell_volume=1.0))


@pytest.fixture(scope="module")
def grid():
    return GridSpec(2, 3.0, 0.0, 6, 6, BALL)


def test_minkowski_limits(grid):
    fld = simulate_grid_exact(EXP, grid, 1)
    assert minkowski_m1(fld, -np.inf).raw == pytest.approx(grid.measure, rel=1e-12)
    assert minkowski_m1(fld, np.inf).raw == 0.0


def test_minkowski_direct_count():
    fld = unit_field([[0.1, 2.0, -1.0, 3.0], [0.0, 1.5, -0.2, 0.9]])
    assert minkowski_m1(fld, 1.0).raw == 3.0


def test_sojourn_general_constant(grid):
    fld = simulate_grid_exact(EXP, grid, 1)
    assert sojourn_general(fld, lambda z: np.ones_like(z)).raw == pytest.approx(grid.measure)
    # a scalar-valued G is broadcast
    assert sojourn_general(fld, lambda z: 1.0).raw == pytest.approx(grid.measure)


def test_sojourn_general_identity_on_constant_field():
    g = GridSpec(2, 2.0, 0.0, 4, 4, BALL)
    fld = simulate_grid_exact(ConstantHook(), g, 5)
    z0 = fld.values[0, 0]
    assert sojourn_general(fld, lambda z: z).raw == pytest.approx(z0 * g.measure, rel=1e-5)


def test_sojourn_general_hermite_coeffs(grid):
    fld = simulate_grid_exact(EXP, grid, 2)
    c = indicator_coeffs(0.5, 40)
    a = sojourn_general(fld, c).raw
    b = sojourn_general(fld, lambda z: c.evaluate(z)).raw
    assert a == b


def test_sojourn_h2_mean_zero(grid):
    vals = replicate_stats(EXP, grid, 3, 2000, lambda v: np.sum(hermite(2, v)) * grid.cell_volume)[:, 0]
    assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_normalized_stat_identities(grid):
    th = ThresholdSpec.fixed(1.0)
    base = normalized_stat(0.0, th, 3.0, BALL, 0.0, EXP, sigma=2.0, measure=grid.measure)
    mean, den = base.mean_used, base.denominator
    assert mean == pytest.approx((1 - stats.norm.cdf(1.0)) * grid.measure)
    assert normalized_stat(mean, th, 3.0, BALL, 0.0, EXP, sigma=2.0, measure=grid.measure).normalized == 0.0
    one = normalized_stat(mean + den, th, 3.0, BALL, 0.0, EXP, sigma=2.0, measure=grid.measure).normalized
    assert one == pytest.approx(1.0, rel=1e-12)


def test_normalized_stat_default_denominator():
    st_ = normalized_stat(5.0, 1.0, 4.0, BALL, 0.0, EXP)
    sig = math.sqrt(sigma2_ball(1, 2, 0.0, 4.0, EXP).value)
    assert st_.denominator == pytest.approx(stats.norm.pdf(1.0) * sig, rel=1e-10)
    assert st_.mean_used == pytest.approx((1 - stats.norm.cdf(1.0)) * math.pi * 4.0)


def test_normalized_stat_zero_denominator():
    with pytest.raises(ZeroDenominatorError):
        normalized_stat(1.0, 0.0, 4.0, BALL, 0.0, EXP, m=2, sigma=1.0)  # J_2 vanishes at u = 0


def test_normalized_stat_monte_carlo_mean(grid):
    raw = replicate_stats(EXP, grid, 4, 2000, lambda v: np.sum(v >= 1.0) * grid.cell_volume)[:, 0]
    sig = math.sqrt(discrete_chaos_variance(grid, EXP, 1))
    y = normalized_stat(raw, 1.0, 3.0, BALL, 0.0, EXP, sigma=sig, measure=grid.measure).normalized
    assert abs(y.mean()) < 4 * y.std(ddof=1) / math.sqrt(y.size)


def test_hermite_projection_direct(grid):
    fld = simulate_grid_exact(EXP, grid, 6)
    s = hermite_projection_stat(fld, 1, 3.0, BALL, 0.0, EXP, sign_Jm=1.0, sigma=2.5)
    assert s.normalized == pytest.approx(np.sum(fld.values) * grid.cell_volume / 2.5, rel=1e-12)
    neg = hermite_projection_stat(fld, 1, 3.0, BALL, 0.0, EXP, sign_Jm=-1.0, sigma=2.5)
    assert neg.normalized == -s.normalized


def test_loglog_level():
    assert ThresholdSpec.loglog(1.0).level(math.e ** math.e) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        ThresholdSpec.loglog().level(2.0)


def test_logpow_eta_one_rejected():
    with pytest.raises(InadmissibleThresholdError):
        moving_threshold(ThresholdSpec.logpow(1.0), 50.0)


def test_logpow_half_exponential_passes():
    chk = moving_threshold(ThresholdSpec.logpow(0.5), 50.0, model=EXP, gamma=1.0, betas=(0.5, 0.5))
    assert chk.admissible
    assert chk.products[-1] < chk.products[0]


def test_loglog_lrd_separable_passes():
    chk = moving_threshold(ThresholdSpec.loglog(), 20.0, model=Separable(alpha_s=1.0, A=0.4))
    assert chk.admissible and chk.betas is not None
    assert chk.u == pytest.approx(math.sqrt(math.log(math.log(20.0))))


def test_loglog_gneiting_example_passes():
    mod = GneitingML(nu=0.5, gamma_t=0.5, a=1.0, alpha=0.5, beta=0.5, d=2)
    assert moving_threshold(ThresholdSpec.loglog(), 20.0, model=mod, gamma=1.0).admissible


def test_threshold_family_validation():
    with pytest.raises(ParameterError):
        ThresholdSpec("cubic")
    with pytest.raises(ParameterError):
        ThresholdSpec.from_dict({"kind": "fixed", "u": 1, "v": 2})
    assert ThresholdSpec.from_dict(1.5) == ThresholdSpec.fixed(1.5)


@given(c=st.floats(0.1, 3), T=st.floats(3, 1e6))
def test_threshold_dict_round_trip(c, T):
    th = ThresholdSpec.loglog(c)
    assert ThresholdSpec.from_dict(th.to_dict()).level(T) == th.level(T)


@pytest.fixture(scope="module")
def sphere_field():
    spec = SphericalSpectrum.from_model(EXP, 8, time_grid(4.0, 4) - time_grid(4.0, 4)[0], d=3)
    with pytest.warns(TruncationWarning):
        return simulate_sphere_field(spec, time_grid(4.0, 4), grid=SphereGrid(12, 24))


def test_sphere_sojourn_limits(sphere_field):
    assert sphere_sojourn(sphere_field, -np.inf).raw == pytest.approx(4.0 * sphere_area(3), rel=1e-12)
    assert sphere_sojourn(sphere_field, np.inf).raw == 0.0


def test_condition5_ratio():
    c = indicator_coeffs(1.0, 4)
    s2 = 7.0
    assert condition5_ratio(c[1] ** 2 * s2, c, 1, s2) == pytest.approx(1.0)
    with pytest.raises(ZeroDenominatorError):
        condition5_ratio(1.0, indicator_coeffs(0.0, 4), 2, s2)


def test_replicates_csv(tmp_path):
    p = tmp_path / "r.csv"
    write_replicates_csv([1.0, 2.0], [0.5, 1.5], [0.1, 0.3], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "replicate,raw,centered,normalized" and lines[2].startswith("1,2.0")
