"""Nearest-neighbour conditional mutual information with a local permutation test."""
from __future__ import annotations

import numpy as np
from numba import njit
from scipy.spatial import cKDTree
from scipy.special import digamma

from ..errors import ConfigError
from .base import CIQuery, CITest, CITestResult, canonical_pair, permutation_pvalue, rank_normal, zscore


def default_k(n: int) -> int:
    return max(10, min(int(0.1 * n), 60))


def _counts(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Number of points strictly inside each radius (max-norm), self included."""
    if points.shape[1] == 0:
        return np.full(len(points), len(points))
    tree = cKDTree(points)
    return tree.query_ball_point(points, radius, p=np.inf, return_length=True)


def ksg_cmi(x: np.ndarray, y: np.ndarray, z: np.ndarray, k: int) -> float:
    """KSG estimate of ``I(x; y | z)`` in nats using max-norm neighbourhoods.

    With an empty ``z`` this is the first KSG mutual-information estimator.
    """
    n = len(x)
    x = x.reshape(n, -1)
    y = y.reshape(n, -1)
    z = z.reshape(n, -1)
    joint = np.hstack([x, y, z])
    dist, _ = cKDTree(joint).query(joint, k=k + 1, p=np.inf)
    radius = np.nextafter(dist[:, -1], 0)
    n_xz = _counts(np.hstack([x, z]), radius)
    n_yz = _counts(np.hstack([y, z]), radius)
    n_z = _counts(z, radius)
    return float(digamma(k) - np.mean(digamma(n_xz) + digamma(n_yz) - digamma(n_z)))


DENSE_LIMIT = 4000


@njit(cache=True)
def _heap_push(h, size, v):
    i = size
    h[i] = v
    while i > 0:
        parent = (i - 1) // 2
        if h[parent] >= h[i]:
            break
        h[parent], h[i] = h[i], h[parent]
        i = parent


@njit(cache=True)
def _heap_replace_top(h, v):
    k = h.shape[0]
    i = 0
    h[0] = v
    while True:
        left = 2 * i + 1
        m = i
        if left < k and h[left] > h[m]:
            m = left
        if left + 1 < k and h[left + 1] > h[m]:
            m = left + 1
        if m == i:
            break
        h[i], h[m] = h[m], h[i]
        i = m


@njit(cache=True)
def _counts_sorted(xp, ord_yz, s_yz, ord_z, s_z, k, has_z):
    # Rows of the (y,z) and z distance matrices are pre-sorted; only x moves
    # between permutations, so the k-th joint neighbour is found by walking
    # the (y,z) order until it can no longer improve a size-k max-heap.
    n = xp.shape[0]
    cxz = np.empty(n, np.int64)
    cyz = np.empty(n, np.int64)
    cz = np.empty(n, np.int64)
    h = np.empty(k)
    xs = np.sort(xp)
    for i in range(n):
        xi = xp[i]
        size = 0
        for m in range(n):
            j = ord_yz[i, m]
            if j == i:
                continue
            dyz = s_yz[i, m]
            if size == k and dyz >= h[0]:
                break
            dx = abs(xi - xp[j])
            d = dx if dx > dyz else dyz
            if size < k:
                _heap_push(h, size, d)
                size += 1
            elif d < h[0]:
                _heap_replace_top(h, d)
        eps = h[0]
        cyz[i] = np.searchsorted(s_yz[i], eps)
        if has_z:
            c = np.searchsorted(s_z[i], eps)
            cz[i] = c
            a = 0
            for m in range(c):
                if abs(xi - xp[ord_z[i, m]]) < eps:
                    a += 1
            cxz[i] = a
        else:
            cz[i] = n
            cxz[i] = np.searchsorted(xs, xi + eps) - np.searchsorted(xs, xi - eps, side="right")
    return cxz, cyz, cz


class _SortedNeighbourhoods:
    """Pre-sorted max-norm distance rows for the fixed (y, z) and z blocks."""

    def __init__(self, y: np.ndarray, z: np.ndarray):
        n = len(y)
        self.has_z = z.shape[1] > 0
        if self.has_z:
            dz = np.abs(z[:, None, 0] - z[None, :, 0])
            for c in range(1, z.shape[1]):
                np.maximum(dz, np.abs(z[:, None, c] - z[None, :, c]), out=dz)
            dyz = np.maximum(np.abs(y[:, None] - y[None, :]), dz)
            self.ord_z = np.argsort(dz, axis=1).astype(np.int32)
            self.s_z = np.take_along_axis(dz, self.ord_z, axis=1)
            del dz
        else:
            dyz = np.abs(y[:, None] - y[None, :])
            self.ord_z = np.empty((n, 0), dtype=np.int32)
            self.s_z = np.empty((n, 0))
        self.ord_yz = np.argsort(dyz, axis=1).astype(np.int32)
        self.s_yz = np.take_along_axis(dyz, self.ord_yz, axis=1)

    def cmi(self, x: np.ndarray, k: int) -> float:
        cxz, cyz, cz = _counts_sorted(x, self.ord_yz, self.s_yz, self.ord_z, self.s_z, k, self.has_z)
        return float(digamma(k) - np.mean(digamma(cxz) + digamma(cyz) - digamma(cz)))


@njit(cache=True)
def _assign(neighbors, order):
    # draw without replacement from each point's shuffled neighbour list
    n, kp = neighbors.shape
    used = np.zeros(n, dtype=np.bool_)
    perm = np.empty(n, dtype=np.int64)
    for idx in range(n):
        i = order[idx]
        chosen = neighbors[i, 0]
        for r in range(kp):
            j = neighbors[i, r]
            if not used[j]:
                chosen = j
                break
        used[chosen] = True
        perm[i] = chosen
    return perm


class CMIknn(CITest):
    """KSG conditional mutual information; p-value by local permutation.

    The permuted variable is shuffled only among the ``shuffle_neighbors``
    nearest points in ``z``-space, preserving its dependence on ``z``. With
    an empty ``z`` the permutation is global.
    """

    name = "CMIknn"

    def __init__(
        self,
        k: int | None = None,
        permutations: int = 500,
        shuffle_neighbors: int = 5,
        stop_after: int | None = 10,
        transform: str = "standardize",
    ):
        if k is not None and k < 1:
            raise ConfigError("k must be >= 1")
        if transform not in ("standardize", "ranks"):
            raise ConfigError("transform must be 'standardize' or 'ranks'")
        self.k = k
        self.permutations = permutations
        self.shuffle_neighbors = shuffle_neighbors
        self.stop_after = stop_after
        self.transform = transform

    def params(self) -> dict:
        return {
            "k": self.k,
            "permutations": self.permutations,
            "shuffle_neighbors": self.shuffle_neighbors,
            "stop_after": self.stop_after,
            "transform": self.transform,
        }

    def _prep(self, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        v = rank_normal(v) if self.transform == "ranks" else zscore(v)
        # deterministic tie breaking
        return v + 1e-9 * rng.standard_normal(v.shape)

    def test(self, q: CIQuery) -> CITestResult:
        n = q.n
        k = self.k if self.k is not None else default_k(n)
        if not 1 <= k < n:
            raise ConfigError(f"k={k} must satisfy 1 <= k < n={n}")
        a, b, _ = canonical_pair(q.x, q.y)
        rng = np.random.default_rng(q.seed)
        a = self._prep(a, rng)
        b = self._prep(b, rng)
        z = self._prep(q.z, rng) if q.dim_z else q.z
        dense = _SortedNeighbourhoods(b, z) if n <= DENSE_LIMIT else None

        def estimate(xv):
            return dense.cmi(xv, k) if dense is not None else ksg_cmi(xv, b, z, k)

        stat = estimate(a)

        if q.dim_z:
            kp = min(self.shuffle_neighbors, n)
            _, neighbors = cKDTree(z).query(z, k=kp, p=np.inf)
            neighbors = np.asarray(neighbors, dtype=np.int64).reshape(n, kp)
        else:
            neighbors = None

        def one_perm() -> np.ndarray:
            if neighbors is None:
                return rng.permutation(n)
            shuffled = np.take_along_axis(neighbors, np.argsort(rng.random(neighbors.shape), axis=1), axis=1)
            return _assign(shuffled, rng.permutation(n))

        def draw(m):
            return np.array([estimate(a[one_perm()]) for _ in range(m)])

        p, used = permutation_pvalue(stat - 1e-12, draw, self.permutations, batch=10, stop_after=self.stop_after)
        return CITestResult(stat, p, n, self.name, {"k": k, "permutations_used": used})


def cmi_knn(q: CIQuery, k: int | None = None, permutations: int = 500) -> CITestResult:
    return CMIknn(k=k, permutations=permutations).test(q)
