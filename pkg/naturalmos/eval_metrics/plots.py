#! /usr/bin/env python

"""Diagnostic plots of evaluation results."""

import logging

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from naturalmos.eval_metrics.metrics import MIN_CORRELATION_POINTS, pearson_r
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.eval_metrics.plots')


def plot_per_system(pairs, path, title=None):
    """Scatter plot of mean rated MOS against mean predicted MOS per system.

    Parameters
    ----------
    pairs : dict
        (dataset_id, system_id) -> (mean predicted, mean rated), as
        returned by ``aggregate_per_system``

    path : str
        Output image file

    title : str
        Plot title; the per-system r is appended when defined

    Returns
    -------
    path : str
    """
    predicted = np.array([pair[0] for pair in pairs.values()])
    rated = np.array([pair[1] for pair in pairs.values()])
    title = title or 'Per-system MOS'
    if len(pairs) >= MIN_CORRELATION_POINTS and np.ptp(predicted) > 0 and np.ptp(rated) > 0:
        title = '{} (r = {:.3f})'.format(title, pearson_r(predicted, rated))

    fig = plt.figure(figsize=(6, 6))
    plt.plot([1, 5], [1, 5], ls='--', color='gray')
    plt.scatter(rated, predicted, color='blue')
    for (_, system_id), (pred, rate) in pairs.items():
        plt.annotate(system_id, (rate, pred), fontsize=7, xytext=(3, 3), textcoords='offset points')
    plt.xlim(1, 5)
    plt.ylim(1, 5)
    plt.xlabel('Rated MOS')
    plt.ylabel('Predicted MOS')
    plt.title(title)
    makepath4file(path)
    plt.savefig(path, dpi=100, bbox_inches='tight')
    plt.close(fig)
    logger.info('Saved per-system plot {}'.format(path))
    return path
