from .lasso import LassoPath, lambda_max, lasso_fit, lasso_path, select_features
from .maps import (
    ATTENTION_LABELS,
    BEHAVIOR_LABELS,
    PUBLISHED_MAPS,
    LinearMapSet,
    ScoreReport,
    packaged_published_maps,
    score,
)
from .pca import UNDEFINED, PcaResult, label_response, pca, safety_from_pc1
from .regression import LoocvResult, fit_ols, loocv
from .survey import SurveyDataset, read_survey_csv, synthesize, write_survey_csv

__all__ = [
    "ATTENTION_LABELS", "BEHAVIOR_LABELS", "PUBLISHED_MAPS", "UNDEFINED",
    "LassoPath", "LinearMapSet", "LoocvResult", "PcaResult", "ScoreReport", "SurveyDataset",
    "fit_ols", "label_response", "lambda_max", "lasso_fit", "lasso_path", "loocv",
    "packaged_published_maps", "pca", "read_survey_csv", "safety_from_pc1", "score",
    "select_features", "synthesize", "write_survey_csv",
]
