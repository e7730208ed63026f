"""Partial-correlation tests: rank-based (robust) and weighted least squares."""
from __future__ import annotations

import numpy as np

from .base import CIQuery, CITest, CITestResult, corr_t_test, ols_residuals, rank_normal, zscore

VARIANCE_FLOOR = 1e-8


class RobustParCorr(CITest):
    """Partial correlation on normal scores.

    Every column is mapped to ``Phi^-1(rank/(n+1))`` before residualizing on
    ``z``, which makes the statistic invariant to monotone transforms of the
    marginals.
    """

    name = "RobustParCorr"

    def test(self, q: CIQuery) -> CITestResult:
        x, y = rank_normal(q.x), rank_normal(q.y)
        z = rank_normal(q.z) if q.dim_z else q.z
        rx = ols_residuals(x, z)
        ry = ols_residuals(y, z)
        r, p = corr_t_test(rx, ry, q.dim_z)
        return CITestResult(r, p, q.n, self.name)


def _smoothed_variance(resid: np.ndarray, key: np.ndarray, window: int) -> np.ndarray:
    """Windowed mean of squared residuals along the sorted ``key`` column."""
    n = len(resid)
    order = np.argsort(key, kind="stable")
    sq = resid[order] ** 2
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    half = window // 2
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    smooth = (csum[hi] - csum[lo]) / (hi - lo)
    out = np.empty(n)
    out[order] = smooth
    return out


class ParCorrWLS(CITest):
    """Partial correlation with heteroskedasticity-aware weighted least squares.

    The noise variance of each of ``x`` and ``y`` given ``z`` is estimated by
    smoothing squared OLS residuals along the first conditioning column;
    residuals of the weighted fit are scaled by ``1/sigma`` before the
    correlation t-test. With no conditioning the test is a plain correlation
    test.
    """

    name = "ParCorrWLS"

    def __init__(self, window_fraction: float = 0.1, min_window: int = 10):
        self.window_fraction = window_fraction
        self.min_window = min_window

    def params(self) -> dict:
        return {"window_fraction": self.window_fraction, "min_window": self.min_window}

    def _weighted_residuals(self, target: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, int]:
        n = len(target)
        design = np.column_stack([np.ones(n), z])
        r0 = ols_residuals(target, z)
        window = max(self.min_window, int(self.window_fraction * n))
        var = _smoothed_variance(r0, z[:, 0], window)
        clamped = int(np.sum(var < VARIANCE_FLOOR))
        var = np.maximum(var, VARIANCE_FLOOR)
        sw = 1.0 / np.sqrt(var)
        beta, *_ = np.linalg.lstsq(design * sw[:, None], target * sw, rcond=None)
        return (target - design @ beta) * sw, clamped

    def test(self, q: CIQuery) -> CITestResult:
        x, y = zscore(q.x), zscore(q.y)
        if q.dim_z == 0:
            r, p = corr_t_test(x, y, 0)
            return CITestResult(r, p, q.n, self.name, {"variance_floor_hits": 0})
        z = zscore(q.z)
        rx, cx = self._weighted_residuals(x, z)
        ry, cy = self._weighted_residuals(y, z)
        r, p = corr_t_test(rx, ry, q.dim_z)
        return CITestResult(r, p, q.n, self.name, {"variance_floor_hits": cx + cy})


def robust_parcorr(q: CIQuery) -> CITestResult:
    return RobustParCorr().test(q)


def parcorr_wls(q: CIQuery) -> CITestResult:
    return ParCorrWLS().test(q)
