import json

import numpy as np
import pandas as pd
import pytest
from shapely.geometry import Point, shape

from matnet.clustering import SVMZoneMapper, WellFeatureEncoder, elbow_from_costs, fuse_labels

from _builders import three_blob_pipeline, xor_fixture


def test_elbow_picks_knee():
    res = elbow_from_costs([1, 2, 3, 4, 5, 6], [100, 50, 10, 8, 6, 4])
    assert res.k == 3 and not res.degenerate


def test_elbow_is_scale_invariant():
    ks, costs = [1, 2, 3, 4, 5], [90.0, 40.0, 20.0, 15.0, 12.0]
    a = elbow_from_costs(ks, costs).k
    b = elbow_from_costs(ks, [c * 1e6 for c in costs]).k
    c = elbow_from_costs([10 * k for k in ks], costs).k / 10
    assert a == b == c


def test_elbow_degenerate_cases():
    assert elbow_from_costs([1, 2, 3, 4], [4, 3, 2, 1]).degenerate
    assert elbow_from_costs([1, 2], [5, 1]).degenerate
    assert elbow_from_costs([1, 2, 3], [1, 1, 1]).k == 1
    # ties go to the smaller k
    assert elbow_from_costs([1, 2, 3, 4, 5], [10, 5, 5, 5, 0]).k == 2
    with pytest.raises(ValueError):
        elbow_from_costs([2, 1], [1, 2])


def test_three_blob_pipeline():
    elbow, labels, zones, _ = three_blob_pipeline()
    assert elbow.k == 3
    assert len(np.unique(labels)) == 3
    assert zones.training_accuracy_ == 1.0
    assert zones.n_zones_ == 3


def test_zone_polygons_contain_their_wells():
    _, labels, zones, wells = three_blob_pipeline()
    polys = {k: shape(v) for k, v in zones.polygons().items()}
    for (x, y), lab in zip(wells[["x", "y"]].to_numpy(float), labels):
        assert polys[lab].buffer(1e-9).contains(Point(x, y))
    json.dumps({str(k): v for k, v in zones.polygons().items()}, default=list)


def test_xor_needs_nonlinear_kernel():
    X, y = xor_fixture()
    assert SVMZoneMapper(kernel="linear").fit(X, y).training_accuracy_ < 1.0
    assert SVMZoneMapper(kernel="rbf").fit(X, y).training_accuracy_ == 1.0


def test_single_well_class_becomes_buffer():
    X = np.array([[0, 0], [0, 1], [5, 5], [5, 6], [10, 0]], dtype=float)
    y = np.array([0, 0, 1, 1, 2])
    zm = SVMZoneMapper().fit(X, y)
    assert zm.training_accuracy_ == 1.0
    assert zm.predict([[10.0, 0.1]])[0] == 2
    assert zm.n_zones_ == 3


def test_single_class_and_validation():
    X = np.array([[0, 0], [1, 1]], dtype=float)
    zm = SVMZoneMapper().fit(X, [7, 7])
    assert np.all(zm.grid_labels_ == 7)
    with pytest.raises(ValueError):
        SVMZoneMapper(kernel="sigmoid").fit(X, [0, 1])
    with pytest.raises(ValueError):
        SVMZoneMapper().fit(np.zeros((2, 3)), [0, 1])


def test_raster_rows_cover_grid():
    X, y = xor_fixture()
    zm = SVMZoneMapper(resolution=20).fit(X, y)
    rows = zm.raster_rows()
    assert len(rows) == zm.grid_labels_.size
    assert set(r[2] for r in rows) <= {0, 1}


def test_encoder_standardizes_and_flags_missing():
    frame = pd.DataFrame({"a": [1.0, 2.0, np.nan, 4.0], "b": [3.0] * 4, "c": ["x", "y", "x", "x"]})
    enc = WellFeatureEncoder(["a", "b"], ["c"]).fit(frame)
    out = enc.transform(frame)
    assert list(out.columns) == ["a", "c", "a_missing"]
    assert enc.dropped_columns_ == ["b"]
    assert enc.categorical_indices_ == [1, 2]
    np.testing.assert_allclose(out["a"].mean(), 0.0, atol=1e-12)
    assert list(out["a_missing"]) == ["present", "present", "missing", "present"]
    with pytest.raises(ValueError):
        enc.transform(frame.assign(c=["z", "x", "x", "x"]))
    with pytest.raises(ValueError):
        WellFeatureEncoder(["nope"]).fit(frame)
    with pytest.raises(TypeError):
        WellFeatureEncoder(["a"]).fit(frame.to_numpy())


def test_fuse_labels_merges_small_groups():
    spatial = np.array([0, 0, 0, 1, 1, 1])
    temporal = np.array([0, 0, 1, 0, 0, 0])
    numeric = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
    out = fuse_labels(spatial, temporal, numeric, min_size=2)
    np.testing.assert_array_equal(out, [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(fuse_labels(spatial, temporal, numeric, min_size=1), [0, 0, 1, 2, 2, 2])
