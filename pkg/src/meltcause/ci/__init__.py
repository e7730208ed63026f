"""Conditional-independence tests behind one interface."""
from .base import CIQuery, CITest, CITestResult, MIN_SAMPLES
from .cmiknn import CMIknn, cmi_knn, ksg_cmi
from .gpdc import GPDC, distance_correlation, gpdc, gp_residuals
from .parcorr import ParCorrWLS, RobustParCorr, parcorr_wls, robust_parcorr

TEST_NAMES = ("RobustParCorr", "ParCorrWLS", "GPDC", "CMIknn")

_ALIASES = {
    "robustparcorr": "RobustParCorr",
    "parcorr": "RobustParCorr",
    "parcorrwls": "ParCorrWLS",
    "gpdc": "GPDC",
    "cmiknn": "CMIknn",
}


def canonical_name(name: str) -> str:
    key = name.replace("_", "").replace("-", "").lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown CI test {name!r}; choose from {TEST_NAMES}")
    return _ALIASES[key]


def make_test(name: str, **params) -> CITest:
    """Instantiate a CI test by (case-insensitive) name with optional parameters."""
    cls = {"RobustParCorr": RobustParCorr, "ParCorrWLS": ParCorrWLS, "GPDC": GPDC, "CMIknn": CMIknn}[
        canonical_name(name)
    ]
    return cls(**params)


__all__ = [
    "CIQuery",
    "CITest",
    "CITestResult",
    "CMIknn",
    "GPDC",
    "MIN_SAMPLES",
    "ParCorrWLS",
    "RobustParCorr",
    "TEST_NAMES",
    "canonical_name",
    "cmi_knn",
    "distance_correlation",
    "gp_residuals",
    "gpdc",
    "ksg_cmi",
    "make_test",
    "parcorr_wls",
    "robust_parcorr",
]
