"""Shared pieces for the conditional-independence tests."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import ndtri

from ..errors import DegenerateConditioningError, InsufficientSamplesError

MIN_SAMPLES = 30


@dataclass
class CIQuery:
    """``x _||_ y | z`` on aligned samples; ``z`` may have zero columns."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    seed: int = 0
    min_samples: int = MIN_SAMPLES

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = len(self.x)
        z = np.empty((n, 0)) if self.z is None else np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        self.z = z
        if len(self.y) != n or len(z) != n:
            raise ValueError("x, y and z must have the same number of samples")
        if n < self.min_samples:
            raise InsufficientSamplesError(f"{n} samples < minimum {self.min_samples}")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def dim_z(self) -> int:
        return self.z.shape[1]


@dataclass
class CITestResult:
    statistic: float
    p_value: float
    n_effective: int
    test_name: str
    extra: dict = field(default_factory=dict)

    @property
    def strength(self) -> float:
        return abs(self.statistic)


def rank_normal(a: np.ndarray) -> np.ndarray:
    """Normal scores ``Phi^-1(rank / (n + 1))`` column-wise."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    r = stats.rankdata(a, axis=0)
    return ndtri(r / (n + 1.0))


def zscore(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    sd = a.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (a - a.mean(axis=0)) / sd


def ols_residuals(target: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Residuals of ``target`` regressed on ``[1, z]``."""
    design = np.column_stack([np.ones(len(target)), z])
    if z.shape[1]:
        rank = np.linalg.matrix_rank(design)
        if rank < design.shape[1]:
            raise DegenerateConditioningError("conditioning columns are collinear")
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)
    return target - design @ beta


def corr_t_test(rx: np.ndarray, ry: np.ndarray, dim_z: int) -> tuple[float, float]:
    """Pearson correlation of two residual vectors and its two-sided t-test p-value."""
    n = len(rx)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0.0:
        return 0.0, 1.0
    r = float(np.clip((rx @ ry) / denom, -1.0, 1.0))
    dof = n - dim_z - 2
    if dof < 1:
        raise InsufficientSamplesError("no degrees of freedom left for the t-test")
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * np.sqrt(dof / (1.0 - r * r))
    return r, float(np.clip(2.0 * stats.t.sf(abs(t), dof), 0.0, 1.0))


def permutation_pvalue(
    observed: float,
    draw: Callable[[int], np.ndarray],
    n_perm: int,
    batch: int = 25,
    stop_after: int | None = None,
) -> tuple[float, int]:
    """Monte-Carlo p-value ``(1 + #{perm >= obs}) / (B + 1)``.

    ``draw(m)`` returns ``m`` permutation statistics. With ``stop_after=h``
    the loop stops once ``h`` permuted statistics reach the observed value
    (Besag-Clifford sequential test) and returns ``h / L`` for ``L`` draws
    used, which is still a valid p-value and is never below ``1/(B+1)``.
    Returns ``(p, permutations_used)``.
    """
    exceed = 0
    used = 0
    while used < n_perm:
        m = min(batch, n_perm - used)
        perm_stats = np.asarray(draw(m))
        hits = perm_stats >= observed
        if stop_after is not None:
            cum = exceed + np.cumsum(hits)
            reached = np.nonzero(cum >= stop_after)[0]
            if reached.size:
                L = used + reached[0] + 1
                return float(stop_after / L), int(L)
        exceed += int(hits.sum())
        used += m
    return float((1.0 + exceed) / (n_perm + 1.0)), int(used)


def canonical_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Order two vectors deterministically so a test can treat them asymmetrically yet stay swap-invariant."""
    swapped = a.tobytes() > b.tobytes()
    return (b, a, True) if swapped else (a, b, False)


class CITest:
    """Common interface: ``test(query) -> CITestResult``."""

    name: str = "CITest"

    def test(self, q: CIQuery) -> CITestResult:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, x, y, z=None, seed: int = 0) -> CITestResult:
        return self.test(CIQuery(x, y, z, seed=seed))

    def params(self) -> dict:
        return {}
