"""Small input checks shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_rng(random_state):
    """``numpy.random.Generator`` from a seed, generator or ``None``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def check_mixed(X, categorical):
    """Split ``X`` into a float numeric block and an object categorical block.

    ``X`` may be a 2-D array-like or a pandas DataFrame; ``categorical`` lists
    column positions.
    """
    if hasattr(X, "to_numpy"):
        X = X.to_numpy(dtype=object)
    X = np.asarray(X, dtype=object)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    if X.shape[0] == 0:
        raise ValueError("X has no rows")
    n_cols = X.shape[1]
    cat = sorted(set(int(c) for c in (categorical or ())))
    if any(c < 0 or c >= n_cols for c in cat):
        raise ValueError("categorical column index out of range")
    num = [c for c in range(n_cols) if c not in cat]
    try:
        x_num = X[:, num].astype(float) if num else np.empty((X.shape[0], 0))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"numeric columns must be convertible to float: {exc}") from None
    if not np.all(np.isfinite(x_num)):
        raise ValueError("numeric columns contain NaN or infinite values; impute first")
    x_cat = X[:, cat]
    if x_num.shape[1] == 0 and x_cat.shape[1] == 0:
        raise ValueError("X has no columns")
    return x_num, x_cat, num, cat


def encode_categories(x_cat, vocab=None):
    """Integer codes per categorical column plus the vocabularies used."""
    codes = np.empty(x_cat.shape, dtype=int)
    vocabs = []
    for c in range(x_cat.shape[1]):
        col = x_cat[:, c]
        if vocab is None:
            values = sorted(set(col.tolist()), key=lambda v: (str(type(v)), v))
        else:
            values = list(vocab[c])
        index = {v: k for k, v in enumerate(values)}
        try:
            codes[:, c] = [index[v] for v in col]
        except KeyError as exc:
            raise ValueError(f"category {exc.args[0]!r} not in vocabulary of column {c}") from None
        vocabs.append(values)
    return codes, vocabs
