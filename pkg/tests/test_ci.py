import numpy as np
import pytest
from scipy import stats

from meltcause.ci import (
    GPDC,
    CIQuery,
    CMIknn,
    ParCorrWLS,
    RobustParCorr,
    distance_correlation,
    ksg_cmi,
    make_test,
)
from meltcause.ci.cmiknn import default_k
from meltcause.errors import DegenerateConditioningError, InsufficientSamplesError


def _rng(s):
    return np.random.default_rng(s)


def _dcor_bruteforce(a, b):
    A = np.abs(a[:, None] - a[None, :])
    B = np.abs(b[:, None] - b[None, :])
    A = A - A.mean(0) - A.mean(1)[:, None] + A.mean()
    B = B - B.mean(0) - B.mean(1)[:, None] + B.mean()
    return np.sqrt((A * B).mean() / np.sqrt((A * A).mean() * (B * B).mean()))


# RobustParCorr


def test_parcorr_identical_is_one():
    x = _rng(0).normal(size=100)
    assert RobustParCorr()(x, x).statistic == pytest.approx(1.0)


def test_parcorr_common_driver_removed():
    r = _rng(1)
    z = r.normal(size=2000)
    x, y = z + r.normal(size=2000), z + r.normal(size=2000)
    res = RobustParCorr()(x, y, z)
    assert abs(res.statistic) < 0.1 and res.p_value > 0.01
    assert RobustParCorr()(x, y).p_value < 1e-10


def test_parcorr_oracle_matches_residual_regression():
    r = _rng(2)
    z = r.normal(size=(300, 2))
    x = z @ [1.0, -0.5] + r.normal(size=300)
    y = z @ [0.3, 0.8] + 0.3 * x + r.normal(size=300)
    ns = [stats.norm.ppf(stats.rankdata(v) / 301) for v in (x, y, z[:, 0], z[:, 1])]
    Z = np.column_stack([np.ones(300), ns[2], ns[3]])
    rx = ns[0] - Z @ np.linalg.lstsq(Z, ns[0], rcond=None)[0]
    ry = ns[1] - Z @ np.linalg.lstsq(Z, ns[1], rcond=None)[0]
    rho = np.corrcoef(rx, ry)[0, 1]
    t = rho * np.sqrt((300 - 4) / (1 - rho**2))
    res = RobustParCorr()(x, y, z)
    assert res.statistic == pytest.approx(rho, abs=1e-12)
    assert res.p_value == pytest.approx(2 * stats.t.sf(abs(t), 296), rel=1e-9)


def test_parcorr_calibration():
    hits = sum(RobustParCorr()(_rng(s).normal(size=500), _rng(10_000 + s).normal(size=500)).p_value <= 0.05 for s in range(500))
    assert 0.03 <= hits / 500 <= 0.07


def test_parcorr_monotone_invariance():
    r = _rng(3)
    x, y, z = r.normal(size=(3, 400))
    y = y + 0.4 * x
    base = RobustParCorr()(x, y, z).statistic
    assert RobustParCorr()(np.exp(x), y**3, z).statistic == pytest.approx(base, abs=1e-9)


def test_parcorr_collinear_z():
    r = _rng(4)
    z = r.normal(size=100)
    with pytest.raises(DegenerateConditioningError):
        RobustParCorr()(r.normal(size=100), r.normal(size=100), np.column_stack([z, z]))


def test_too_few_samples():
    with pytest.raises(InsufficientSamplesError):
        CIQuery(np.ones(10), np.ones(10))


# ParCorrWLS


def test_wls_close_to_parcorr_when_homoskedastic():
    r = _rng(5)
    z = r.normal(size=2000)
    x = 0.5 * z + r.normal(size=2000)
    y = 0.5 * z + 0.2 * x + r.normal(size=2000)
    a, b = ParCorrWLS()(x, y, z).statistic, RobustParCorr()(x, y, z).statistic
    assert abs(a - b) < 0.02


def test_wls_empty_z_is_plain_correlation():
    r = _rng(6)
    x = r.normal(size=200)
    y = 0.2 * x + r.normal(size=200)
    rho, p = stats.pearsonr(x, y)
    res = ParCorrWLS()(x, y)
    assert res.statistic == pytest.approx(rho, abs=1e-12) and res.p_value == pytest.approx(p, rel=1e-8)


def test_wls_heteroskedastic_calibration():
    hits = 0
    for s in range(500):
        r = _rng(s)
        z = r.normal(size=500)
        x = z + np.abs(z) * r.normal(size=500)
        y = z + np.abs(z) * r.normal(size=500)
        hits += ParCorrWLS()(x, y, z).p_value <= 0.05
    assert hits / 500 <= 0.10


def test_wls_variance_floor_recorded():
    r = _rng(7)
    z = r.normal(size=100)
    x = 2 * z + 1  # exact fit, squared residuals below the floor
    res = ParCorrWLS()(x, r.normal(size=100), z)
    assert res.extra["variance_floor_hits"] > 0 and 0 <= res.p_value <= 1


# GPDC


def test_dcor_matches_bruteforce():
    r = _rng(8)
    for n in (31, 100, 257):
        a, b = r.normal(size=n), r.normal(size=n) ** 2
        b[: n // 3] = a[: n // 3] ** 2
        assert distance_correlation(a, b) == pytest.approx(_dcor_bruteforce(a, b), abs=1e-12)


def test_dcor_with_ties():
    a = np.repeat(np.arange(10.0), 5)
    b = np.tile(np.arange(5.0), 10) + 0.1 * a
    assert distance_correlation(a, b) == pytest.approx(_dcor_bruteforce(a, b), abs=1e-12)


def test_gpdc_detects_quadratic():
    r = _rng(9)
    x = r.uniform(-1, 1, 500)
    y = x**2 + 0.05 * r.normal(size=500)
    assert abs(RobustParCorr()(x, y).statistic) < 0.15
    assert GPDC()(x, y).p_value <= 0.01


def test_gpdc_calibration_unconditional():
    hits = sum(GPDC(permutations=200)(_rng(s).normal(size=300), _rng(5000 + s).normal(size=300), seed=s).p_value <= 0.05 for s in range(200))
    assert 0.02 <= hits / 200 <= 0.08


def test_gpdc_conditional_independence():
    ok = 0
    for s in range(100):
        r = _rng(s)
        z = r.uniform(-2, 2, 150)
        x = np.sin(2 * z) + 0.3 * r.normal(size=150)
        y = z**2 / 2 + 0.3 * r.normal(size=150)
        ok += GPDC(permutations=100)(x, y, z, seed=s).p_value > 0.05
    assert ok >= 90


def test_gp_residualization_removes_nonlinear_driver():
    r = _rng(10)
    z = r.uniform(-2, 2, 400)
    x = np.sin(2 * z) + 0.3 * r.normal(size=400)
    y = np.sin(2 * z) + 0.3 * r.normal(size=400)
    assert GPDC(permutations=100)(x, y).p_value <= 0.01
    assert GPDC(permutations=100)(x, y, z).p_value > 0.05


# CMIknn


def test_default_k():
    assert default_k(50) == 10 and default_k(300) == 30 and default_k(5000) == 60


def test_cmiknn_gaussian_mi():
    rho = 0.8
    cov = [[1, rho], [rho, 1]]
    est = []
    for s in range(5):
        x, y = _rng(s).multivariate_normal([0, 0], cov, 2000).T
        est.append(CMIknn(k=10, permutations=1)(x, y).statistic)
        # the raw estimator agrees with the test statistic up to the tie-breaking jitter
        assert ksg_cmi(x, y, np.empty((2000, 0)), 10) == pytest.approx(est[-1], abs=0.02)
    assert np.mean(est) == pytest.approx(-0.5 * np.log(1 - rho**2), abs=0.06)


def test_cmiknn_independent_not_rejected():
    ok = 0
    for s in range(100):
        x, y, z = _rng(s).normal(size=(3, 200))
        res = CMIknn(permutations=100)(x, y, z, seed=s)
        ok += res.p_value > 0.05
        assert abs(res.statistic) < 0.1
    assert ok >= 90


def test_cmiknn_chain():
    ok = 0
    for s in range(20):
        r = _rng(s)
        x = r.normal(size=2000)
        y = x + r.normal(size=2000)
        z = y + r.normal(size=2000)
        cond = CMIknn(k=10, permutations=100)(x, z, y, seed=s)
        marg = CMIknn(k=10, permutations=1)(x, z, seed=s)
        assert cond.statistic < marg.statistic
        ok += cond.p_value > 0.05
    assert ok >= 17


def test_cmiknn_duplicates_handled():
    x = np.repeat([0.0, 1.0], 50)
    y = np.tile([0.0, 1.0], 50)
    res = CMIknn(k=5, permutations=50)(x, y)
    assert np.isfinite(res.statistic) and 0 < res.p_value <= 1


# shared properties


ALL = [RobustParCorr(), ParCorrWLS(), GPDC(permutations=50), CMIknn(k=8, permutations=50)]


@pytest.mark.parametrize("t", ALL, ids=lambda t: t.name)
def test_swap_symmetry(t):
    r = _rng(11)
    z = r.normal(size=(120, 2))
    x = z[:, 0] + r.normal(size=120)
    y = 0.3 * x + z[:, 1] + r.normal(size=120)
    for zz in (None, z):
        a, b = t(x, y, zz, seed=4), t(y, x, zz, seed=4)
        assert abs(a.statistic) == pytest.approx(abs(b.statistic), abs=1e-9)
        assert a.p_value == pytest.approx(b.p_value, abs=1e-9)


@pytest.mark.parametrize("t", ALL, ids=lambda t: t.name)
def test_deterministic_and_p_range(t):
    r = _rng(12)
    x, y, z = r.normal(size=(3, 100))
    a, b = t(x, y, z, seed=7), t(x, y, z, seed=7)
    assert a == b
    assert 0 <= a.p_value <= 1 and a.n_effective == 100 and a.test_name == t.name


@pytest.mark.parametrize("t", ALL[2:], ids=lambda t: t.name)
def test_permutation_p_floor(t):
    x = _rng(13).normal(size=200)
    res = t(x, x + 1e-3 * _rng(14).normal(size=200))
    assert res.p_value >= 1 / (t.permutations + 1)


def test_make_test_aliases():
    assert make_test("parcorr").name == "RobustParCorr"
    assert make_test("cmi_knn", k=5).k == 5
    with pytest.raises(ValueError):
        make_test("granger")
