import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from conftest import FIXTURES
from hsrefactor import metrics
from hsrefactor.estimator import FEATURE_NAMES, HaskellMetricsExtractor
from hsrefactor.source import parse_path

CORPUS = sorted((FIXTURES / "corpus").glob("*.hs"))


def _texts():
    return [p.read_text() for p in CORPUS]


def test_transform_matches_metric_functions():
    X = HaskellMetricsExtractor().fit_transform(_texts())
    assert X.shape == (len(CORPUS), 4)
    for row, path in zip(X, CORPUS):
        f = parse_path(path)
        assert row[0] == f.code_line_count
        assert row[1] == metrics.file_complexity(f).total
        assert row[2] == metrics.max_branching_depth([f])
        assert row[3] == metrics.feature_count(f).total


def test_feature_names_and_params():
    est = HaskellMetricsExtractor(include_gaps=False).fit(_texts())
    assert list(est.get_feature_names_out()) == list(FEATURE_NAMES)
    assert est.get_params() == {"include_gaps": False}
    assert clone(est).get_params() == {"include_gaps": False}


def test_gap_rows_become_nan_when_excluded():
    texts = ["ok = 1\n", "bad = (1 +\n"]
    X = HaskellMetricsExtractor(include_gaps=False).fit_transform(texts)
    assert not np.isnan(X[0]).any() and np.isnan(X[1]).all()
    assert not np.isnan(HaskellMetricsExtractor().fit_transform(texts)).any()


def test_input_validation():
    est = HaskellMetricsExtractor()
    with pytest.raises(NotFittedError):
        est.transform(["x = 1\n"])
    with pytest.raises(ValueError):
        est.fit("x = 1\n")
    with pytest.raises(TypeError):
        est.fit([1, 2])


def test_empty_input_shape():
    assert HaskellMetricsExtractor().fit([]).transform([]).shape == (0, 4)


def test_composes_in_sklearn_pipeline():
    pipe = make_pipeline(HaskellMetricsExtractor(), StandardScaler())
    Z = pipe.fit_transform(_texts())
    assert Z.shape == (len(CORPUS), 4)
    assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-9)
