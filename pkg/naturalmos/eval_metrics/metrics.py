#! /usr/bin/env python

"""Correlation and error measures between predicted and rated MOS.

Use
---
    ::

        from naturalmos.eval_metrics.metrics import aggregate_per_system, pearson_r, rmse
        pairs = aggregate_per_system(predictions, manifest)
        predicted, rated = zip(*pairs.values())
        print(pearson_r(predicted, rated), rmse(predicted, rated))

Notes
-----
    RMSE is computed on the raw predictions, no polynomial mapping onto
    the rating scale is fitted first.

    A correlation with a constant sequence is undefined and raised as an
    error instead of being returned as NaN.
"""

from collections import defaultdict

import numpy as np
from scipy import stats

from naturalmos.utils.exceptions import DataError

MIN_CORRELATION_POINTS = 3


def aggregate_per_system(predictions, manifest):
    """Average predictions and ratings per system.

    Parameters
    ----------
    predictions : dict
        Entry path -> predicted MOS

    manifest : DatasetManifest
        Rated entries

    Returns
    -------
    pairs : dict
        (dataset_id, system_id) -> (mean predicted MOS, mean rated MOS),
        sorted by key
    """
    predicted = defaultdict(list)
    rated = defaultdict(list)
    for entry in manifest.entries:
        if entry.path not in predictions:
            raise DataError('no prediction for manifest entry {}'.format(entry.path))
        key = (entry.dataset_id, entry.system_id)
        predicted[key].append(predictions[entry.path])
        rated[key].append(entry.mos)
    return {key: (float(np.mean(predicted[key])), float(np.mean(rated[key]))) for key in sorted(predicted)}


def pearson_r(x, y):
    """Sample Pearson correlation coefficient.

    Parameters
    ----------
    x, y : array_like
        Equally long sequences of at least 3 values, neither constant

    Returns
    -------
    r : float
        Correlation in [-1, 1]
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError('pearson_r needs two 1D sequences of equal length, got shapes {} and {}'.format(
            x.shape, y.shape))
    if len(x) < MIN_CORRELATION_POINTS:
        raise DataError('pearson_r needs at least {} points, got {}'.format(MIN_CORRELATION_POINTS, len(x)))
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DataError('pearson_r is undefined for a constant sequence')
    return float(stats.pearsonr(x, y)[0])


def rmse(pred, target):
    """Root mean square error sqrt(mean((pred - target)^2))"""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise DataError('rmse needs two 1D sequences of equal length, got shapes {} and {}'.format(
            pred.shape, target.shape))
    if len(pred) == 0:
        raise DataError('rmse of empty sequences')
    return float(np.sqrt(np.mean((pred - target) ** 2)))
