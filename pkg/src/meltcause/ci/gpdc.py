"""GP-regression residuals followed by a distance-correlation permutation test."""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from ..errors import MeltcauseError
from .base import CIQuery, CITest, CITestResult, canonical_pair, permutation_pvalue, zscore

LENGTH_FACTORS = (0.3, 1.0, 3.0)
NOISE_LEVELS = (1e-2, 1e-1)
JITTERS = (0.0, 1e-8, 1e-6, 1e-4)


class GPSolveError(MeltcauseError):
    pass


def _cholesky(K: np.ndarray) -> np.ndarray:
    for jit in JITTERS:
        try:
            return linalg.cholesky(K + jit * np.eye(len(K)), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise GPSolveError("kernel matrix is not positive definite even after jitter")


def _log_marginal(sqd: np.ndarray, y: np.ndarray, length: float, noise: float) -> float:
    """Log evidence with the signal variance profiled out (noise is relative to it)."""
    n = len(y)
    L = _cholesky(np.exp(-0.5 * sqd / length**2) + noise * np.eye(n))
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    s2 = max(float(y @ alpha) / n, 1e-300)
    return -0.5 * n * np.log(s2) - np.log(np.diag(L)).sum()


def gp_residuals(target: np.ndarray, z: np.ndarray, max_select: int = 400, max_fit: int = 1000) -> tuple[np.ndarray, dict]:
    """Residuals ``target - E[target | z]`` under an RBF Gaussian process.

    Length scale and noise ratio come from a fixed grid, picked by marginal
    likelihood on at most ``max_select`` evenly spaced rows. The posterior
    mean is then fitted on at most ``max_fit`` evenly spaced rows and
    evaluated at every row.
    """
    n = len(target)
    y = target - target.mean()
    zs = zscore(z)
    sel = np.unique(np.linspace(0, n - 1, min(n, max_select)).astype(int))
    sqd_sel = cdist(zs[sel], zs[sel], "sqeuclidean")
    med = float(np.median(np.sqrt(pdist(zs[sel], "sqeuclidean")))) or 1.0
    best = None
    for f in LENGTH_FACTORS:
        for noise in NOISE_LEVELS:
            ll = _log_marginal(sqd_sel, y[sel], f * med, noise)
            if best is None or ll > best[0]:
                best = (ll, f * med, noise)
    _, length, noise = best
    if n <= max_fit:
        K = np.exp(-0.5 * cdist(zs, zs, "sqeuclidean") / length**2)
        L = _cholesky(K + noise * np.eye(n))
        alpha = linalg.cho_solve((L, True), y, check_finite=False)
        # y - K (K + s I)^-1 y == s (K + s I)^-1 y
        return noise * alpha, {"length_scale": length, "noise": noise, "fit_rows": n}
    fit = np.unique(np.linspace(0, n - 1, max_fit).astype(int))
    K = np.exp(-0.5 * cdist(zs[fit], zs[fit], "sqeuclidean") / length**2)
    L = _cholesky(K + noise * np.eye(len(fit)))
    alpha = linalg.cho_solve((L, True), y[fit], check_finite=False)
    mean = np.exp(-0.5 * cdist(zs, zs[fit], "sqeuclidean") / length**2) @ alpha
    return y - mean, {"length_scale": length, "noise": noise, "fit_rows": len(fit)}


@njit(cache=True)
def _row_means(v):
    # mean_j |v_i - v_j| for every i, via sorted prefix sums
    n = v.shape[0]
    order = np.argsort(v)
    s = v[order]
    out = np.empty(n)
    total = s.sum()
    below = 0.0
    for r in range(n):
        above = total - below - s[r]
        out[order[r]] = (s[r] * r - below + above - s[r] * (n - 1 - r)) / n
        below += s[r]
    return out


@njit(cache=True)
def _fenwick_add(tree, i, v):
    n = tree.shape[0]
    while i < n:
        tree[i] += v
        i += i & (-i)


@njit(cache=True)
def _fenwick_sum(tree, i):
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _abs_product_sum(xs, ys):
    # sum_{i<j} |x_i - x_j| |y_i - y_j| for xs sorted ascending, in O(n log n):
    # pairs split by the sign of y_j - y_i, each part is a sum of four
    # Fenwick-tree prefix aggregates over y ranks.
    n = xs.shape[0]
    rank = np.empty(n, np.int64)
    rank[np.argsort(ys)] = np.arange(1, n + 1)
    c = np.zeros(n + 1)
    sx = np.zeros(n + 1)
    sy = np.zeros(n + 1)
    sxy = np.zeros(n + 1)
    tc = tsx = tsy = tsxy = 0.0
    total = 0.0
    for j in range(n):
        xj, yj, r = xs[j], ys[j], rank[j]
        lc = _fenwick_sum(c, r - 1)
        lx = _fenwick_sum(sx, r - 1)
        ly = _fenwick_sum(sy, r - 1)
        lxy = _fenwick_sum(sxy, r - 1)
        low = lc * xj * yj - xj * ly - yj * lx + lxy
        high = (tc - lc) * xj * yj - xj * (tsy - ly) - yj * (tsx - lx) + (tsxy - lxy)
        total += low - high
        _fenwick_add(c, r, 1.0)
        _fenwick_add(sx, r, xj)
        _fenwick_add(sy, r, yj)
        _fenwick_add(sxy, r, xj * yj)
        tc += 1.0
        tsx += xj
        tsy += yj
        tsxy += xj * yj
    return total


@njit(cache=True)
def _dcov2(xs, ys, ax, ay):
    # V-statistic distance covariance; xs sorted, ax/ay the row means in that order
    n = xs.shape[0]
    s1 = 2.0 * _abs_product_sum(xs, ys) / (n * n)
    return s1 + ax.mean() * ay.mean() - 2.0 * (ax * ay).sum() / n


@njit(cache=True)
def _perm_dcov2(xs, ys, ax, ay, perms):
    m = perms.shape[0]
    out = np.empty(m)
    for r in range(m):
        p = perms[r]
        out[r] = _dcov2(xs, ys[p], ax, ay[p])
    return out


class _DCor:
    """Distance correlation of two univariate samples with cheap re-evaluation under permutation of ``b``."""

    def __init__(self, a: np.ndarray, b: np.ndarray):
        order = np.argsort(a, kind="stable")
        self.xs = np.ascontiguousarray(a[order], dtype=float)
        self.ys = np.ascontiguousarray(b[order], dtype=float)
        self.ax = _row_means(self.xs)
        self.ay = _row_means(self.ys)
        self.var_x = _dcov2(self.xs, self.xs, self.ax, self.ax)
        ysort = np.sort(self.ys)
        ay_sorted = _row_means(ysort)
        self.var_y = _dcov2(ysort, ysort, ay_sorted, ay_sorted)

    def dcov2(self) -> float:
        return float(_dcov2(self.xs, self.ys, self.ax, self.ay))

    def perm_dcov2(self, perms: np.ndarray) -> np.ndarray:
        return _perm_dcov2(self.xs, self.ys, self.ax, self.ay, perms)

    def dcor(self, dcov2: float) -> float:
        denom = np.sqrt(max(self.var_x, 0.0) * max(self.var_y, 0.0))
        if denom <= 0:
            return 0.0
        return float(np.sqrt(max(dcov2, 0.0) / denom))


def distance_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Sample (V-statistic) distance correlation of two univariate samples."""
    d = _DCor(np.asarray(a, float), np.asarray(b, float))
    return d.dcor(d.dcov2())


class GPDC(CITest):
    """Gaussian-process residualization plus distance correlation.

    ``x`` and ``y`` are each regressed on ``z`` with a GP (skipped when ``z``
    is empty); the statistic is the distance correlation of the residuals and
    the p-value comes from permuting one residual vector.
    """

    name = "GPDC"

    def __init__(self, permutations: int = 200, stop_after: int | None = 10, max_select: int = 400, max_fit: int = 1000):
        self.permutations = permutations
        self.stop_after = stop_after
        self.max_select = max_select
        self.max_fit = max_fit
        self._cache: dict = {}

    def params(self) -> dict:
        return {
            "permutations": self.permutations,
            "stop_after": self.stop_after,
            "max_select": self.max_select,
            "max_fit": self.max_fit,
        }

    def _residuals(self, v: np.ndarray, z: np.ndarray) -> np.ndarray:
        if z.shape[1] == 0:
            return v - v.mean()
        key = (v.tobytes(), z.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = gp_residuals(v, z, self.max_select, self.max_fit)[0]
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def test(self, q: CIQuery) -> CITestResult:
        rx = self._residuals(q.x, q.z)
        ry = self._residuals(q.y, q.z)
        a, b, _ = canonical_pair(rx, ry)
        d = _DCor(a, b)
        n = q.n
        cross = d.dcov2()
        stat = d.dcor(cross)
        rng = np.random.default_rng(q.seed)
        tol = 1e-9 * max(abs(cross), 1e-12)

        def draw(m):
            perms = np.vstack([rng.permutation(n) for _ in range(m)])
            return d.perm_dcov2(perms)

        p, used = permutation_pvalue(cross - tol, draw, self.permutations, stop_after=self.stop_after)
        return CITestResult(stat, p, n, self.name, {"permutations_used": used})


def gpdc(q: CIQuery, permutations: int = 200) -> CITestResult:
    return GPDC(permutations=permutations).test(q)
