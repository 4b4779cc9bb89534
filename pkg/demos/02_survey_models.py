"""Fit the behavior and attention maps from (synthetic) survey data.

No real survey responses ship with the package, so the data here is drawn
from the published maps with Gaussian noise. The script walks through the
least-squares fit, the Lasso feature ranking, the principal components of
the behavior responses and leave-one-out errors.

    python demos/02_survey_models.py
"""

# %%
import numpy as np

from tdbm.mapping import PUBLISHED_MAPS, fit_ols, lasso_path, loocv, pca, safety_from_pc1, select_features, synthesize

data = synthesize(2000, noise=0.5, seed=3)
print(f"{len(data)} rows, features {data.feature_names}")

# %% least squares on the selected inputs
maps = fit_ols(data)
err = np.abs(maps.behavior_matrix - PUBLISHED_MAPS.behavior_matrix).max()
print(f"\nbehavior map recovered to within {err:.3f} Likert points")
print(np.round(maps.behavior_matrix, 2))

# %% Lasso: how long each feature survives as the penalty grows
path = lasso_path(data)
for row in list(path.to_rows())[:10]:
    print(f"  {row['response']} {row['feature']:>9} log10 lambda {row['log10_alpha']:+.2f}")
behavior, attention = select_features(path)
print("selected for behaviors: ", behavior)
print("selected for attentions:", attention)

# %% one safety axis from the behavior responses
res = pca(data)
print("\nvariance explained [%]:", np.round(res.variance_percentages, 2))
print("first component:", np.round(res.pc1, 3))
print("safety row from PC1:", np.round(safety_from_pc1(res, data), 2))

# %% leave-one-out error per response
cv = loocv(data.subset(np.arange(300)))
print("\nLOOCV mean absolute error:", np.round(cv.mean_abs_error, 3))
