"""Mixed Pearson, polyserial and polychoric correlations by iterative GMM."""

import json

import numpy as np

from . import _core
from ._core import MixcorError, binorm_cdf, binorm_cdf_oracle, norm_cdf, norm_quantile

__all__ = [
    "MixcorError",
    "binorm_cdf",
    "binorm_cdf_oracle",
    "fit",
    "generate",
    "ml_pair_oracle",
    "norm_cdf",
    "norm_quantile",
    "simulate",
]


def _columns(array, dtype, n=None):
    if array is None:
        return np.zeros((0 if n is None else n, 0), dtype=dtype)
    out = np.asarray(array, dtype=dtype)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError("expected a 1-D or 2-D array")
    return out


def _matrix(rows):
    return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)


def _categories(ordinal, categories):
    if categories is None:
        return [int(ordinal[:, i].max()) if ordinal.shape[0] else 0 for i in range(ordinal.shape[1])]
    return [int(s) for s in categories]


def fit(
    continuous=None,
    ordinal=None,
    *,
    continuous_names=None,
    ordinal_names=None,
    categories=None,
    method="two-step",
    system="max",
    pairs=None,
    legendre=3,
    cov="corrected",
    standardize=True,
):
    """Fit a mixed correlation matrix.

    `continuous` is n x c, `ordinal` is n x d with codes 1..s. Missing
    category counts are taken as the largest code. `pairs` is a list such as
    ["Y1:X2", "X1:X2"] and selects the custom system. Returns the report dict
    with `R_hat` and `var_R` as arrays.
    """
    if continuous is None and ordinal is None:
        raise ValueError("no data")
    y = _columns(continuous, np.float64)
    x = _columns(ordinal, np.int32, y.shape[0] if continuous is not None else None)
    if continuous is None:
        y = np.zeros((x.shape[0], 0))
    c, d = y.shape[1], x.shape[1]
    y_names = list(continuous_names) if continuous_names else [f"Y{j + 1}" for j in range(c)]
    x_names = list(ordinal_names) if ordinal_names else [f"X{i + 1}" for i in range(d)]
    text = _core.fit_json(
        y,
        x,
        y_names,
        x_names,
        _categories(x, categories),
        method,
        system,
        ",".join(pairs) if pairs else "",
        int(legendre),
        cov,
        bool(standardize),
    )
    report = json.loads(text)
    report["R_hat"] = _matrix(report["R_hat"])
    report["var_R"]["matrix"] = _matrix(report["var_R"]["matrix"])
    return report


def simulate(design, threads=None):
    """Run a Monte Carlo study. `design` is a dict in the design-file format."""
    report = json.loads(_core.simulate_json(json.dumps(design), -1 if threads is None else int(threads)))
    for key in ("truth", "mean"):
        report[key] = np.asarray(report[key], dtype=float)
    for key in ("covr", "mcov", "estimates"):
        report[key] = _matrix(report[key])
    return report


def generate(design, replication=0):
    """Draw replication `replication` of a design as (continuous, ordinal) arrays."""
    return _core.generate(json.dumps(design), int(replication))


def ml_pair_oracle(continuous, ordinal, coefficient, categories=None):
    """Pairwise two-step maximum likelihood estimate of one coefficient."""
    x = _columns(ordinal, np.int32)
    y = _columns(continuous, np.float64, x.shape[0])
    return _core.ml_pair_oracle(y, x, _categories(x, categories), int(coefficient))
