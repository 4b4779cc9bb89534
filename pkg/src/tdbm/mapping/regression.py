"""Ordinary least squares fits of the behavior/attention maps and LOOCV."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import DegenerateInputError, FitError
from ..features import ATTENTION_FEATURES, BEHAVIOR_FEATURES
from .maps import LinearMapSet
from .survey import SurveyDataset


def design_matrix(data: SurveyDataset, names) -> np.ndarray:
    return np.column_stack([data.columns(names), np.ones(len(data))])


def solve_least_squares(X: np.ndarray, Y: np.ndarray, names) -> np.ndarray:
    """Least-squares coefficients ``(p, k)`` for ``X @ C ~ Y`` after a rank check.

    Rank is decided by a column-pivoted QR; the columns pivoted past the
    numerical rank are reported in the :class:`FitError`.
    """
    n, p = X.shape
    if n < p:
        raise FitError(f"{n} rows cannot determine {p} coefficients", names)
    _, R, perm = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.count_nonzero(diag > tol))
    if rank < p:
        bad = [names[j] for j in perm[rank:]]
        raise FitError(f"design matrix has rank {rank} < {p}; dependent columns: {bad}", bad)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return coef


def _fit_blocks(data: SurveyDataset):
    names_b = [*BEHAVIOR_FEATURES, "intercept"]
    names_a = [*ATTENTION_FEATURES, "intercept"]
    Cb = solve_least_squares(design_matrix(data, BEHAVIOR_FEATURES), data.behaviors, names_b)
    Ca = solve_least_squares(design_matrix(data, ATTENTION_FEATURES), data.attentions, names_a)
    return Cb.T, Ca.T


def fit_ols(data: SurveyDataset, safety_row=None) -> LinearMapSet:
    """Fit the behavior and attention maps by least squares with intercepts.

    Unless ``safety_row`` is supplied, it is derived from the first principal
    component of the behavior responses (see :func:`~tdbm.mapping.pca.safety_from_pc1`).
    """
    if len(data) < len(BEHAVIOR_FEATURES) + 2:
        raise DegenerateInputError(f"need at least {len(BEHAVIOR_FEATURES) + 2} rows, got {len(data)}")
    Mb, Ma = _fit_blocks(data)
    if safety_row is None:
        from .pca import pca, safety_from_pc1

        safety_row = safety_from_pc1(pca(data), data, behavior_matrix=Mb)
    return LinearMapSet(Mb, Ma, safety_row)


@dataclass(frozen=True)
class LoocvResult:
    mean_abs_error: tuple[float, ...]  # b0..b9, native Likert units
    n_fits: int


def loocv(data: SurveyDataset) -> LoocvResult:
    """Leave-one-out mean absolute prediction error for every response."""
    n = len(data)
    if n < len(BEHAVIOR_FEATURES) + 3:
        raise DegenerateInputError(f"LOOCV needs at least {len(BEHAVIOR_FEATURES) + 3} rows, got {n}")
    Xb = design_matrix(data, BEHAVIOR_FEATURES)
    Xa = design_matrix(data, ATTENTION_FEATURES)
    abs_err = np.zeros((n, 10))
    fits = 0
    for i in range(n):
        keep = np.arange(n) != i
        Mb, Ma = _fit_blocks(data.subset(keep))
        fits += 1
        abs_err[i, :6] = np.abs(Mb @ Xb[i] - data.behaviors[i])
        abs_err[i, 6:] = np.abs(Ma @ Xa[i] - data.attentions[i])
    return LoocvResult(tuple(float(e) for e in abs_err.mean(axis=0)), fits)
