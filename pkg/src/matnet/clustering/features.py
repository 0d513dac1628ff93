"""Well attribute encoding and label fusion."""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

MISSING_SUFFIX = "_missing"


class WellFeatureEncoder(TransformerMixin, BaseEstimator):
    """Standardize numeric attributes and validate categorical ones.

    Numeric columns are median-imputed (a companion ``<col>_missing``
    categorical column records which values were filled), centred and
    scaled to unit variance; constant columns are dropped.  Categorical
    values seen at ``fit`` form the vocabulary; unknown values at
    ``transform`` raise.

    The output frame holds numeric columns first; ``categorical_indices_``
    gives the positions of the categorical ones.
    """

    def __init__(self, numeric=(), categorical=()):
        self.numeric = numeric
        self.categorical = categorical

    def fit(self, X, y=None):
        frame = self._check(X)
        num = frame[list(self.numeric)].apply(pd.to_numeric, errors="raise").astype(float)
        self.medians_ = num.median()
        self.missing_columns_ = [c for c in num.columns if num[c].isna().any()]
        filled = num.fillna(self.medians_)
        std = filled.std(ddof=0)
        self.numeric_columns_ = [c for c in num.columns if std[c] > 0 and np.isfinite(std[c])]
        self.dropped_columns_ = [c for c in num.columns if c not in self.numeric_columns_]
        self.mean_ = filled[self.numeric_columns_].mean()
        self.scale_ = std[self.numeric_columns_]
        self.vocabularies_ = {c: sorted(frame[c].astype(str).unique()) for c in self.categorical}
        cats = list(self.categorical) + [c + MISSING_SUFFIX for c in self.missing_columns_]
        self.feature_names_out_ = list(self.numeric_columns_) + cats
        n_num = len(self.numeric_columns_)
        self.categorical_indices_ = list(range(n_num, n_num + len(cats)))
        return self

    def transform(self, X):
        frame = self._check(X)
        num = frame[list(self.numeric)].apply(pd.to_numeric, errors="raise").astype(float)
        out = pd.DataFrame(index=frame.index)
        for c in self.numeric_columns_:
            out[c] = (num[c].fillna(self.medians_[c]) - self.mean_[c]) / self.scale_[c]
        for c in self.categorical:
            values = frame[c].astype(str)
            unknown = sorted(set(values) - set(self.vocabularies_[c]))
            if unknown:
                raise ValueError(f"column {c!r}: values {unknown} not in the fitted vocabulary")
            out[c] = values
        for c in self.missing_columns_:
            out[c + MISSING_SUFFIX] = np.where(num[c].isna(), "missing", "present")
        return out

    def _check(self, X):
        if not isinstance(X, pd.DataFrame):
            raise TypeError("WellFeatureEncoder expects a pandas DataFrame")
        if X.empty:
            raise ValueError("no wells to encode")
        absent = [c for c in (*self.numeric, *self.categorical) if c not in X.columns]
        if absent:
            raise ValueError(f"missing columns: {', '.join(absent)}")
        if not self.numeric and not self.categorical:
            raise ValueError("at least one numeric or categorical column is required")
        return X

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names_out_, dtype=object)


def fuse_labels(spatial, temporal, numeric, min_size=2):
    """Cross-product of two labelings with small groups merged.

    Groups with fewer than ``min_size`` wells are merged into the nearest
    remaining group, measured between numeric centroids.  Labels are
    renumbered consecutively in order of (spatial, temporal).
    """
    spatial = np.asarray(spatial)
    temporal = np.asarray(temporal)
    numeric = np.asarray(numeric, dtype=float).reshape(len(spatial), -1)
    pairs = sorted(set(zip(spatial.tolist(), temporal.tolist())))
    index = {p: k for k, p in enumerate(pairs)}
    labels = np.array([index[p] for p in zip(spatial.tolist(), temporal.tolist())])
    sizes = np.bincount(labels, minlength=len(pairs))
    big = np.flatnonzero(sizes >= min_size)
    if big.size == 0:
        big = np.array([int(np.argmax(sizes))])
    centroids = np.array([numeric[labels == g].mean(axis=0) for g in range(len(pairs))])
    for g in np.flatnonzero(~np.isin(np.arange(len(pairs)), big)):
        d = np.sum((centroids[big] - centroids[g]) ** 2, axis=1)
        labels[labels == g] = big[int(np.argmin(d))]
    _, out = np.unique(labels, return_inverse=True)
    return out
