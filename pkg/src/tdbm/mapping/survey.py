"""Survey datasets: normalized features paired with Likert responses.

Behavior responses b0..b5 use a 7-point scale encoded -3..+3 and attention
responses b6..b9 a 5-point scale encoded -2..+2, both centred so that the
neutral answer is 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import InputError, ParseError, ValidationError
from ..features import ATTENTION_FEATURES, BEHAVIOR_FEATURES, FEATURE_NAMES
from .maps import PUBLISHED_MAPS, RESPONSE_KEYS, LinearMapSet

SURVEY_HEADER = (*BEHAVIOR_FEATURES, *RESPONSE_KEYS)


@dataclass(frozen=True, eq=False)
class SurveyDataset:
    feature_names: tuple[str, ...]
    features: np.ndarray  # (N, F)
    responses: np.ndarray  # (N, 10)
    normalized: bool = True

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        B = np.array(self.responses, dtype=float)
        names = tuple(self.feature_names)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise InputError(f"feature matrix shape {X.shape} does not match {len(names)} names")
        if B.ndim != 2 or B.shape != (X.shape[0], 10):
            raise InputError(f"response matrix must be ({X.shape[0]}, 10), got {B.shape}")
        unknown = set(names) - set(FEATURE_NAMES)
        if unknown:
            raise InputError(f"unknown feature columns {sorted(unknown)}")
        for a in (X, B):
            a.setflags(write=False)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", B)

    def __len__(self):
        return self.features.shape[0]

    def columns(self, names) -> np.ndarray:
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise InputError(f"survey data lacks feature columns {missing}")
        return self.features[:, [self.feature_names.index(n) for n in names]]

    @property
    def behaviors(self) -> np.ndarray:
        return self.responses[:, :6]

    @property
    def attentions(self) -> np.ndarray:
        return self.responses[:, 6:]

    def subset(self, rows) -> "SurveyDataset":
        return SurveyDataset(self.feature_names, self.features[rows], self.responses[rows], self.normalized)

    def with_responses(self, responses) -> "SurveyDataset":
        return SurveyDataset(self.feature_names, self.features, responses, self.normalized)

    def validate_likert(self) -> None:
        B = self.responses
        for cols, lim in ((slice(0, 6), 3), (slice(6, 10), 2)):
            block = B[:, cols]
            if np.any(block != np.round(block)) or np.any(np.abs(block) > lim):
                raise ValidationError(f"responses outside the integer grid [-{lim}, {lim}]")


def read_survey_csv(path, strict: bool = True) -> SurveyDataset:
    """Read a survey CSV.

    The header must contain the five behavior features and ``b0``..``b9``;
    further candidate feature columns (``v_front``, ``j_p``, ...) may appear
    before the responses. With ``strict`` the responses must lie on the
    Likert grids.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty survey file", 1) from None
        missing = [h for h in SURVEY_HEADER if h not in header]
        if missing:
            raise ParseError(f"survey header lacks columns {missing}", 1)
        feature_cols = [h for h in header if h not in RESPONSE_KEYS]
        unknown = [h for h in feature_cols if h not in FEATURE_NAMES]
        if unknown:
            raise ParseError(f"unknown survey columns {unknown}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    f_idx = [header.index(h) for h in feature_cols]
    b_idx = [header.index(h) for h in RESPONSE_KEYS]
    ds = SurveyDataset(tuple(feature_cols), data[:, f_idx], data[:, b_idx])
    if strict:
        ds.validate_likert()
    return ds


def write_survey_csv(data: SurveyDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((*data.feature_names, *RESPONSE_KEYS))
        for x, b in zip(data.features, data.responses):
            w.writerow([repr(float(v)) for v in (*x, *b)])


def synthesize(n: int, maps: LinearMapSet = PUBLISHED_MAPS, noise: float = 0.0, seed: int = 0,
               feature_names=FEATURE_NAMES, likert: bool = False) -> SurveyDataset:
    """Responses generated from ``maps`` on uniform [0, 1] features.

    Features outside the maps' inputs carry no signal. ``noise`` is the
    standard deviation of additive Gaussian noise; ``likert`` rounds and
    clips the responses onto the survey grids.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, len(feature_names)))
    idx = {name: i for i, name in enumerate(feature_names)}
    xb = np.column_stack([X[:, idx[f]] for f in BEHAVIOR_FEATURES] + [np.ones(n)])
    xa = np.column_stack([X[:, idx[f]] for f in ATTENTION_FEATURES] + [np.ones(n)])
    B = np.hstack([xb @ maps.behavior_matrix.T, xa @ maps.attention_matrix.T])
    if noise:
        B = B + rng.normal(0.0, noise, size=B.shape)
    if likert:
        B[:, :6] = np.clip(np.round(B[:, :6]), -3, 3)
        B[:, 6:] = np.clip(np.round(B[:, 6:]), -2, 2)
    return SurveyDataset(tuple(feature_names), X, B)
