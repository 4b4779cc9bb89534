"""Linear maps from normalized trajectory features to behavior scores."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

import numpy as np

from ..errors import InputError, MissingFeatureError
from ..features import ATTENTION_FEATURES, BEHAVIOR_FEATURES, FeatureVector

BEHAVIOR_LABELS = ("Aggressive", "Reckless", "Threatening", "Careful", "Cautious", "Timid")
ATTENTION_LABELS = ("B_back", "B_front", "B_adj", "B_far")
RESPONSE_KEYS = tuple(f"b{i}" for i in range(10))

_PUBLISHED_BEHAVIOR = (
    (1.63, 4.04, -0.46, -0.82, 0.88, -2.58),
    (1.58, 3.08, -0.45, 0.02, -0.10, -1.67),
    (1.35, 4.08, -0.58, -0.43, -0.28, -1.99),
    (-1.51, -3.17, 1.06, 0.51, -0.51, 1.39),
    (-2.47, -2.60, 1.43, 0.98, -0.82, 1.27),
    (-3.59, -2.19, 1.75, 1.73, -0.30, 0.61),
)
_PUBLISHED_ATTENTION = (
    (0.54, 1.60, 0.11, -0.8),
    (-0.73, 1.66, 0.63, -0.07),
    (-0.14, 1.73, 0.25, 0.15),
    (0.25, 1.47, 0.17, -1.43),
)
_PUBLISHED_SAFETY = (-4.78, -7.89, 2.24, 1.69, -0.83, 4.69)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearMapSet:
    """Behavior (6x6), attention (4x4) and safety (6,) maps.

    Each map acts on its feature list followed by a constant 1, so the last
    column is the intercept.
    """

    behavior_matrix: np.ndarray
    attention_matrix: np.ndarray
    safety_row: np.ndarray

    def __post_init__(self):
        b, a, s = (_frozen(x) for x in (self.behavior_matrix, self.attention_matrix, self.safety_row))
        if b.shape != (6, len(BEHAVIOR_FEATURES) + 1):
            raise InputError(f"behavior matrix must be 6x6, got {b.shape}")
        if a.shape != (4, len(ATTENTION_FEATURES) + 1):
            raise InputError(f"attention matrix must be 4x4, got {a.shape}")
        if s.shape != (len(BEHAVIOR_FEATURES) + 1,):
            raise InputError(f"safety row must have 6 entries, got {s.shape}")
        for name, arr in (("behavior_matrix", b), ("attention_matrix", a), ("safety_row", s)):
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, LinearMapSet):
            return NotImplemented
        return (np.array_equal(self.behavior_matrix, other.behavior_matrix)
                and np.array_equal(self.attention_matrix, other.attention_matrix)
                and np.array_equal(self.safety_row, other.safety_row))

    def safety_extrema(self) -> tuple[float, float]:
        """Smallest and largest safety score over the unit feature cube."""
        w, c = self.safety_row[:-1], self.safety_row[-1]
        return float(c + w[w < 0].sum()), float(c + w[w > 0].sum())

    def to_dict(self) -> dict:
        return {
            "behavior_inputs": [*BEHAVIOR_FEATURES, "1"],
            "behavior_matrix": self.behavior_matrix.tolist(),
            "attention_inputs": [*ATTENTION_FEATURES, "1"],
            "attention_matrix": self.attention_matrix.tolist(),
            "safety_row": self.safety_row.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinearMapSet":
        for key, expected in (("behavior_inputs", BEHAVIOR_FEATURES), ("attention_inputs", ATTENTION_FEATURES)):
            if key in d and list(d[key]) != [*expected, "1"]:
                raise InputError(f"{key} must be {[*expected, '1']}")
        try:
            return cls(d["behavior_matrix"], d["attention_matrix"], d["safety_row"])
        except KeyError as exc:
            raise InputError(f"map set is missing {exc.args[0]!r}") from None

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearMapSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


PUBLISHED_MAPS = LinearMapSet(_PUBLISHED_BEHAVIOR, _PUBLISHED_ATTENTION, _PUBLISHED_SAFETY)


def packaged_published_maps() -> LinearMapSet:
    """The published maps as read from the JSON asset shipped with the package."""
    with resources.files("tdbm.data").joinpath("published_maps.json").open() as fh:
        return LinearMapSet.from_dict(json.load(fh))


@dataclass(frozen=True)
class ScoreReport:
    behaviors: tuple[float, ...]
    attentions: tuple[float, ...]
    s_tdbm: float

    @property
    def B_back(self):
        return self.attentions[0]

    @property
    def B_front(self):
        return self.attentions[1]

    @property
    def B_adj(self):
        return self.attentions[2]

    @property
    def B_far(self):
        return self.attentions[3]

    def to_dict(self) -> dict:
        out = {key: val for key, val in zip(RESPONSE_KEYS, (*self.behaviors, *self.attentions))}
        out["s_tdbm"] = self.s_tdbm
        out["labels"] = dict(zip(RESPONSE_KEYS, (*BEHAVIOR_LABELS, *ATTENTION_LABELS)))
        return out

    @classmethod
    def from_dict(cls, d) -> "ScoreReport":
        return cls(tuple(float(d[f"b{i}"]) for i in range(6)),
                   tuple(float(d[f"b{i}"]) for i in range(6, 10)), float(d["s_tdbm"]))


def _inputs(features, names):
    vals = []
    for name in names:
        val = features[name] if isinstance(features, FeatureVector) else features.get(name)
        if val is None:
            raise MissingFeatureError(name)
        vals.append(float(val))
    return np.array([*vals, 1.0])


def score(features, maps: LinearMapSet = PUBLISHED_MAPS) -> ScoreReport:
    """Apply the three maps to *normalized* features.

    ``features`` is a :class:`FeatureVector` or a mapping from feature name
    to value. Scores are continuous and not clamped to the Likert range.
    """
    xb = _inputs(features, BEHAVIOR_FEATURES)
    xa = _inputs(features, ATTENTION_FEATURES)
    behaviors = maps.behavior_matrix @ xb
    attentions = maps.attention_matrix @ xa
    s = float(maps.safety_row @ xb)
    return ScoreReport(tuple(float(b) for b in behaviors), tuple(float(a) for a in attentions), s)
