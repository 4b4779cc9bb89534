"""Lasso by cyclic coordinate descent, and the feature elimination path.

Solves the penalized form

    min  1/(2N) * ||b - beta0 - X beta||^2 + lam * ||beta||_1

with an unpenalized intercept. For every response the path records, per
feature, where along a log-spaced grid of ``lam`` the coefficient is driven
to zero for good.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..features import ATTENTION_FEATURES, BEHAVIOR_FEATURES
from .survey import SurveyDataset

# log10(lambda) cut-offs used by select_features, in the units of a
# LassoPath computed on normalized features and Likert responses
DEFAULT_BEHAVIOR_THRESHOLD = -1.75
DEFAULT_ATTENTION_THRESHOLD = -1.75


def _centered(data: SurveyDataset, i: int, features):
    if not data.normalized:
        raise UsageError("Lasso needs normalized features (L1 penalties are scale sensitive)")
    if not 0 <= i < 10:
        raise UsageError(f"response index must be in 0..9, got {i}")
    names = tuple(features) if features is not None else data.feature_names
    X = data.columns(names)
    y = data.responses[:, i]
    xm, ym = X.mean(axis=0), y.mean()
    return names, X - xm, y - ym, xm, ym


def lambda_max(data: SurveyDataset, i: int, features=None) -> float:
    """Smallest penalty at which every slope is zero."""
    _, Xc, yc, _, _ = _centered(data, i, features)
    return float(np.max(np.abs(Xc.T @ yc)) / len(yc))


def _coordinate_descent(G, c, lam, beta, tol, max_iter):
    diag = np.diag(G).copy()
    active = diag > 0
    beta = beta.copy()
    grad = c - G @ beta  # equals X^T r / N
    for _ in range(max_iter):
        delta = 0.0
        for j in np.flatnonzero(active):
            old = beta[j]
            rho = grad[j] + diag[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / diag[j]
            if new != old:
                grad -= G[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return beta
    return beta


def lasso_fit(data: SurveyDataset, i: int, alpha: float, features=None, *,
              warm_start=None, tol: float = 1e-8, max_iter: int = 100_000) -> np.ndarray:
    """Lasso coefficients for response ``b_i`` at penalty ``alpha``.

    Returns ``[slopes..., intercept]`` in the order of ``features`` (all
    feature columns of ``data`` by default). Iterates until no coefficient
    moves by more than ``tol`` in a full sweep.
    """
    if alpha < 0:
        raise UsageError("alpha must be >= 0")
    names, Xc, yc, xm, ym = _centered(data, i, features)
    n = len(yc)
    G = Xc.T @ Xc / n
    c = Xc.T @ yc / n
    beta0 = np.zeros(len(names)) if warm_start is None else np.asarray(warm_start, float)[:len(names)]
    beta = _coordinate_descent(G, c, float(alpha), beta0, tol, max_iter)
    return np.append(beta, ym - xm @ beta)


@dataclass(frozen=True, eq=False)
class LassoPath:
    features: tuple[str, ...]
    responses: tuple[int, ...]
    grids: np.ndarray  # (R, n_grid), increasing lambda
    coefs: np.ndarray  # (R, n_grid, F)
    elimination: np.ndarray  # (R, F), log10 of the elimination lambda

    def value(self, response: int, feature: str) -> float:
        return float(self.elimination[self.responses.index(response), self.features.index(feature)])

    def to_rows(self):
        for r, resp in enumerate(self.responses):
            for j, feat in enumerate(self.features):
                yield {"response": f"b{resp}", "feature": feat,
                       "log10_alpha": float(self.elimination[r, j])}


def lasso_path(data: SurveyDataset, responses=range(10), features=None, *,
               n_grid: int = 100, ratio: float = 1e-4, tol: float = 1e-8) -> LassoPath:
    """Elimination values for every (response, feature) pair.

    Each response gets its own grid of ``n_grid`` log-spaced penalties on
    ``[ratio * lam_max, lam_max]``, solved from the top down with warm
    starts. The recorded value is log10 of the smallest grid penalty at which
    the coefficient is zero and stays zero for every larger grid penalty.
    """
    responses = tuple(responses)
    names = tuple(features) if features is not None else data.feature_names
    grids = np.empty((len(responses), n_grid))
    coefs = np.empty((len(responses), n_grid, len(names)))
    elim = np.empty((len(responses), len(names)))
    for r, i in enumerate(responses):
        _, Xc, yc, _, _ = _centered(data, i, names)
        n = len(yc)
        G, c = Xc.T @ Xc / n, Xc.T @ yc / n
        lmax = float(np.max(np.abs(c)))
        if lmax == 0.0:
            grid = np.full(n_grid, np.finfo(float).tiny)
        else:
            grid = np.logspace(np.log10(ratio * lmax), np.log10(lmax), n_grid)
            grid[-1] = lmax
        beta = np.zeros(len(names))
        for g in range(n_grid - 1, -1, -1):
            beta = _coordinate_descent(G, c, grid[g], beta, tol, 100_000)
            coefs[r, g] = beta
        grids[r] = grid
        nonzero = coefs[r] != 0.0
        for j in range(len(names)):
            nz = np.flatnonzero(nonzero[:, j])
            g_elim = 0 if nz.size == 0 else min(nz[-1] + 1, n_grid - 1)
            elim[r, j] = np.log10(grid[g_elim])
    return LassoPath(names, responses, grids, coefs, elim)


def select_features(path: LassoPath, alpha_behavior: float = DEFAULT_BEHAVIOR_THRESHOLD,
                    alpha_attention: float = DEFAULT_ATTENTION_THRESHOLD):
    """Features that survive past a log10(lambda) threshold, per response family.

    A feature is kept for a family when its elimination value exceeds the
    threshold for at least one response of that family (b0..b5 for behavior,
    b6..b9 for attention).
    """
    out = []
    for family, threshold in ((range(6), alpha_behavior), (range(6, 10), alpha_attention)):
        rows = [path.responses.index(i) for i in family if i in path.responses]
        if not rows:
            out.append(())
            continue
        best = path.elimination[rows].max(axis=0)
        out.append(tuple(f for f, v in zip(path.features, best) if v > threshold))
    return tuple(out)


PUBLISHED_SELECTION = (BEHAVIOR_FEATURES, ATTENTION_FEATURES)
