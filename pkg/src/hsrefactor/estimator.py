"""scikit-learn transformer turning Haskell source texts into metric vectors."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import metrics
from .source import parse_source

FEATURE_NAMES = ("loc", "total_cc", "max_branching_depth", "feature_count")


class HaskellMetricsExtractor(TransformerMixin, BaseEstimator):
    """Maps each source text (one module per sample) to
    ``[loc, total_cc, max_branching_depth, feature_count]``.

    Stateless; ``fit`` only validates input and records the feature count.
    """

    def __init__(self, include_gaps: bool = True):
        self.include_gaps = include_gaps

    def _validate(self, X):
        if isinstance(X, (str, bytes)):
            raise ValueError("expected a sequence of source texts, got a single string")
        samples = list(X)
        for i, s in enumerate(samples):
            if not isinstance(s, (str, bytes)):
                raise TypeError(f"sample {i} is {type(s).__name__}, expected str or bytes")
        return samples

    def fit(self, X, y=None):
        self._validate(X)
        self.n_features_in_ = 1
        self.feature_names_out_ = np.array(FEATURE_NAMES, dtype=object)
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_names_out_")
        rows = []
        for i, text in enumerate(self._validate(X)):
            f = parse_source(text, f"<sample {i}>")
            if f.gaps and not self.include_gaps:
                rows.append([np.nan] * len(FEATURE_NAMES))
                continue
            rows.append(
                [
                    f.code_line_count,
                    metrics.file_complexity(f).total,
                    metrics.max_branching_depth([f]),
                    metrics.feature_count(f).total,
                ]
            )
        return np.asarray(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_out_")
        return self.feature_names_out_
