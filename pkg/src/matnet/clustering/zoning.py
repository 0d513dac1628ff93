"""Spatial zones from well labels with a one-vs-rest SVM."""

from __future__ import annotations

import logging

import numpy as np
from shapely.geometry import box, mapping
from shapely.ops import unary_union
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.multiclass import OneVsRestClassifier
from sklearn.svm import SVC

from .._validation import check_positive_int

log = logging.getLogger(__name__)

KERNELS = ("linear", "poly", "rbf")


class SVMZoneMapper(ClassifierMixin, BaseEstimator):
    """Classify wellhead coordinates into zones and rasterize the result.

    Parameters
    ----------
    kernel : {"linear", "poly", "rbf"}
    C : float
        Regularization of the maximum-margin classifier.
    gamma : float or "scale"
        Kernel coefficient for ``poly`` and ``rbf``.
    degree : int
        Polynomial degree.
    resolution : int
        Grid cells along the longer side of the padded bounding box.
    padding : float
        Bounding-box margin as a fraction of its extent.

    Classes with fewer than two wells are not trained on; they become
    circular zones around their well with radius half the distance to the
    nearest other well.
    """

    def __init__(self, kernel="rbf", C=10.0, gamma="scale", degree=3, resolution=60, padding=0.05):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.degree = degree
        self.resolution = resolution
        self.padding = padding

    def fit(self, X, y):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        check_positive_int(self.resolution, "resolution", 2)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[1] != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError("X must be (n_wells, 2) coordinates matching y")
        classes, counts = np.unique(y, return_counts=True)
        self.classes_ = classes
        trainable = classes[counts >= 2]
        self.point_classes_ = [c for c in classes[counts < 2]]
        for c in self.point_classes_:
            log.info("class %r has a single well; using a point-buffer zone", c)

        mask = np.isin(y, trainable)
        self._constant = None
        if trainable.size >= 2:
            svc = SVC(kernel=self.kernel, C=self.C, gamma=self.gamma, degree=self.degree)
            self.estimator_ = OneVsRestClassifier(svc).fit(X[mask], y[mask])
        else:
            self.estimator_ = None
            self._constant = trainable[0] if trainable.size else classes[0]

        self._buffers = []
        for c in self.point_classes_:
            idx = int(np.flatnonzero(y == c)[0])
            others = np.delete(X, idx, axis=0)
            radius = 0.5 * float(np.min(np.hypot(*(others - X[idx]).T))) if len(others) else np.inf
            self._buffers.append((c, X[idx], radius))

        self.X_ = X
        self.y_ = y
        self.training_accuracy_ = float(np.mean(self.predict(X) == y))
        self._rasterize()
        return self

    def _predict_trained(self, X):
        if self.estimator_ is None:
            return np.full(len(X), self._constant, dtype=self.classes_.dtype)
        return self.estimator_.predict(X)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = self._predict_trained(X).astype(self.classes_.dtype)
        for c, center, radius in self._buffers:
            inside = np.hypot(*(X - center).T) <= radius
            out[inside] = c
        return out

    def _rasterize(self):
        lo = self.X_.min(axis=0)
        hi = self.X_.max(axis=0)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        lo = lo - self.padding * span
        hi = hi + self.padding * span
        cell = float(np.max(hi - lo)) / self.resolution
        nx = max(1, int(np.ceil((hi[0] - lo[0]) / cell)))
        ny = max(1, int(np.ceil((hi[1] - lo[1]) / cell)))
        xs = lo[0] + cell * (np.arange(nx) + 0.5)
        ys = lo[1] + cell * (np.arange(ny) + 0.5)
        gx, gy = np.meshgrid(xs, ys)
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        labels = self.predict(centers).reshape(ny, nx)
        # every well's own cell carries that well's predicted label
        well_pred = self.predict(self.X_)
        col = np.clip(((self.X_[:, 0] - lo[0]) / cell).astype(int), 0, nx - 1)
        row = np.clip(((self.X_[:, 1] - lo[1]) / cell).astype(int), 0, ny - 1)
        labels[row, col] = well_pred
        self.grid_x_ = xs
        self.grid_y_ = ys
        self.cell_size_ = cell
        self.grid_origin_ = lo
        self.grid_labels_ = labels
        self.well_cells_ = np.column_stack([row, col])

    def raster_rows(self):
        """``(x, y, label)`` for every grid cell center, row-major."""
        gx, gy = np.meshgrid(self.grid_x_, self.grid_y_)
        return list(zip(gx.ravel(), gy.ravel(), self.grid_labels_.ravel()))

    def polygons(self):
        """Zone outlines per label as GeoJSON-style geometry dicts."""
        half = 0.5 * self.cell_size_
        out = {}
        for c in np.unique(self.grid_labels_):
            rows, cols = np.nonzero(self.grid_labels_ == c)
            cells = [box(self.grid_x_[j] - half, self.grid_y_[i] - half,
                         self.grid_x_[j] + half, self.grid_y_[i] + half) for i, j in zip(rows, cols)]
            out[c.item() if hasattr(c, "item") else c] = mapping(unary_union(cells))
        return out

    @property
    def n_zones_(self):
        return int(np.unique(self.grid_labels_).size)
