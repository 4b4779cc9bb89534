"""Principal components of the six behavior responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError
from .maps import BEHAVIOR_LABELS
from .survey import SurveyDataset

UNDEFINED = "Undefined"
AGREE_THRESHOLD = 1.0  # "Somewhat agree" on the -3..+3 encoding
_NEGATIVE = frozenset(range(3))  # Aggressive, Reckless, Threatening
_POSITIVE = frozenset(range(3, 6))  # Careful, Cautious, Timid


@dataclass(frozen=True, eq=False)
class PcaResult:
    components: np.ndarray  # (6, 6), one unit direction per row
    eigenvalues: np.ndarray
    variance_percentages: np.ndarray
    mean: np.ndarray
    projections: np.ndarray  # (N, 6)
    labels: tuple[str, ...]

    @property
    def pc1(self) -> np.ndarray:
        return self.components[0]

    def to_dict(self) -> dict:
        return {
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "variance_percentages": self.variance_percentages.tolist(),
            "mean": self.mean.tolist(),
            "projections": self.projections.tolist(),
            "labels": list(self.labels),
        }


def label_response(row) -> str:
    """Representative behavior of one response row, or ``UNDEFINED``.

    The top-rated behavior must reach "Somewhat agree", and a tie for the top
    rating between a negative and a positive adjective is contradictory. A tie
    within one polarity keeps the lower-indexed adjective.
    """
    row = np.asarray(row, dtype=float)
    top = row.max()
    if top < AGREE_THRESHOLD:
        return UNDEFINED
    best = set(np.flatnonzero(row == top).tolist())
    if best & _NEGATIVE and best & _POSITIVE:
        return UNDEFINED
    return BEHAVIOR_LABELS[min(best)]


def pca(data) -> PcaResult:
    """PCA on the covariance of the behavior responses.

    ``data`` is a :class:`SurveyDataset` or an ``(N, 6)`` array. Each
    component is signed so that its largest-magnitude loading is positive.
    """
    B = data.behaviors if isinstance(data, SurveyDataset) else np.asarray(data, dtype=float)
    n, dim = B.shape
    if n < dim:
        raise DegenerateInputError(f"PCA needs at least {dim} rows, got {n}")
    mean = B.mean(axis=0)
    centered = B - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    total = evals.sum()
    pct = 100.0 * evals / total if total > 0 else np.full(dim, 100.0 / dim)
    return PcaResult(comps, evals, pct, mean, centered @ comps.T,
                     tuple(label_response(r) for r in B))


def safety_from_pc1(result: PcaResult, data: SurveyDataset | None = None,
                    behavior_matrix=None) -> np.ndarray:
    """Safety row over ``[features, 1]``: the PC1 loadings pushed through the behavior map.

    The row is ``pc1 @ behavior_matrix``, signed so that the combined weight
    on ``s_center`` and ``v_nei`` is negative (drifting and out-speeding
    neighbors lower the score). Anchoring the sign on the feature side keeps
    the row unchanged when every response is negated.
    """
    if behavior_matrix is None:
        from .regression import fit_ols

        behavior_matrix = fit_ols(data, safety_row=np.zeros(6)).behavior_matrix
    row = result.pc1 @ np.asarray(behavior_matrix, dtype=float)
    if row[0] + row[1] > 0:
        row = -row
    return row
