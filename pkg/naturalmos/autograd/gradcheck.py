#! /usr/bin/env python

"""Finite-difference verification of the hand-written backward passes.

Use
---
    ::

        from naturalmos.autograd.gradcheck import run_gradcheck_suite
        table = run_gradcheck_suite(points=5, seed=1234)
        print(table)
        assert all(table['ok'])

Notes
-----
    Checks run in 64-bit precision. Ops with a non-scalar output are
    reduced to a scalar by a fixed random projection, so every output
    element contributes to the checked gradient.

    The relative error of an element is |a - n| / max(|a|, |n|, floor)
    with a floor of 1e-3 times the largest analytic gradient magnitude
    of the check, so elements whose gradient is essentially zero are not
    judged on rounding noise. The suite table also carries the unfloored
    error as max_rel_err_raw; pass and fail use the floored value.

    Random points avoid the measure-zero kinks: relu inputs keep a
    distance of at least 0.1 from 0 and pooling inputs are continuous
    random values, so window maxima are unique.
"""

import logging

from astropy.table import Table
import numpy as np

from naturalmos.autograd import layers
from naturalmos.autograd.recurrent import bilstm
from naturalmos.autograd.tensor import Tensor, backward, precision, weighted_sum
from naturalmos.utils.tools import make_rng

logger = logging.getLogger('naturalmos.autograd.gradcheck')

RELATIVE_FLOOR = 1e-3

# Maximum accepted relative error per checked op
THRESHOLDS = {'linear': 1e-7,
              'conv2d': 1e-6,
              'batchnorm2d_train': 1e-5,
              'batchnorm2d_eval': 1e-5,
              'relu': 1e-6,
              'maxpool2d_ceil': 1e-6,
              'dropout': 1e-6,
              'bilstm_final': 1e-5,
              'bilstm_outputs': 1e-5,
              'mse_loss': 1e-6}


def _scalar_output(fn, arrays, projection):
    out = fn([Tensor(array) for array in arrays])
    if projection is None:
        return out.item()
    return float(np.sum(out.values * projection))


def compare_gradients(fn, inputs, h=1e-5, seed=0):
    """Analytic and central-difference gradients of ``fn`` at ``inputs``.

    Returns
    -------
    analytic, numeric : list
        One array per input
    """
    with precision(np.float64):
        arrays = [np.array(value, dtype=np.float64) for value in inputs]
        tensors = [Tensor(array, requires_grad=True) for array in arrays]
        out = fn(tensors)
        projection = None
        if out.size != 1:
            projection = make_rng(seed, 'sampling').standard_normal(out.shape)
            loss = weighted_sum(out, projection)
        else:
            loss = out
        backward(loss)
        analytic = [np.zeros_like(array) if tensor.grad is None else tensor.grad for tensor, array in
                    zip(tensors, arrays)]

        numeric = []
        for index, array in enumerate(arrays):
            estimate = np.zeros_like(array)
            for position in np.ndindex(array.shape):
                original = array[position]
                array[position] = original + h
                upper = _scalar_output(fn, arrays, projection)
                array[position] = original - h
                lower = _scalar_output(fn, arrays, projection)
                array[position] = original
                estimate[position] = (upper - lower) / (2. * h)
            numeric.append(estimate)
    return analytic, numeric


def max_relative_error(analytic, numeric, relative_floor=RELATIVE_FLOOR):
    """Largest elementwise |a - n| / max(|a|, |n|, floor).

    The floor is ``relative_floor`` times the largest analytic gradient
    magnitude; 0 gives the plain elementwise relative error.
    """
    scale = max(np.max(np.abs(grad)) if grad.size else 0. for grad in analytic)
    floor = max(relative_floor * scale, np.finfo(np.float64).tiny)
    max_rel_err = 0.
    for grad, estimate in zip(analytic, numeric):
        if grad.size == 0:
            continue
        denominator = np.maximum(np.maximum(np.abs(grad), np.abs(estimate)), floor)
        max_rel_err = max(max_rel_err, float(np.max(np.abs(grad - estimate) / denominator)))
    return max_rel_err


def finite_diff_gradcheck(fn, inputs, h=1e-5, seed=0, relative_floor=RELATIVE_FLOOR):
    """Compare backward() against central differences.

    Parameters
    ----------
    fn : callable
        Maps a list of Tensors to one Tensor

    inputs : list
        Arrays giving the point at which gradients are compared

    h : float
        Finite-difference step

    seed : int
        Seed of the projection used for non-scalar outputs

    relative_floor : float
        Denominator floor relative to the largest analytic gradient

    Returns
    -------
    max_rel_err : float
        Largest elementwise relative error over all inputs
    """
    analytic, numeric = compare_gradients(fn, inputs, h=h, seed=seed)
    return max_relative_error(analytic, numeric, relative_floor=relative_floor)


def away_from_zero(rng, shape, margin=0.1):
    """Uniform values with |x| in [margin, 1] and random sign"""
    return rng.uniform(margin, 1., size=shape) * rng.choice([-1., 1.], size=shape)


def lstm_weights_case(rng, input_size, hidden):
    names = ['{}.{}'.format(direction, name) for direction in ('forward', 'backward')
             for name in ('weight_ih', 'weight_hh', 'bias')]
    shapes = [(4 * hidden, input_size), (4 * hidden, hidden), (4 * hidden,)] * 2
    return names, [rng.uniform(-0.8, 0.8, size=shape) for shape in shapes]


def gradcheck_cases(seed, point):
    """Functions and inputs of every checked op at one random point.

    Returns
    -------
    cases : list
        (name, fn, inputs) tuples
    """
    cases = []

    def rng_for(name):
        return make_rng(seed, 'sampling.{}'.format(name), point)

    rng = rng_for('linear')
    cases.append(('linear', lambda t: layers.linear(t[0], t[1], t[2]),
                  [rng.standard_normal((4, 5)), rng.standard_normal((3, 5)), rng.standard_normal(3)]))

    rng = rng_for('conv2d')
    cases.append(('conv2d', lambda t: layers.conv2d(t[0], t[1], t[2]),
                  [rng.standard_normal((2, 2, 5, 4)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)]))

    rng = rng_for('batchnorm2d_train')
    cases.append(('batchnorm2d_train',
                  lambda t: layers.batchnorm2d(t[0], t[1], t[2], np.zeros(2), np.ones(2), mode='train'),
                  [rng.standard_normal((3, 2, 4, 3)) * 2. + 0.5, rng.uniform(0.5, 1.5, 2), rng.standard_normal(2)]))

    rng = rng_for('batchnorm2d_eval')
    running_mean = rng.standard_normal(2)
    running_var = rng.uniform(0.5, 2., 2)
    cases.append(('batchnorm2d_eval',
                  lambda t: layers.batchnorm2d(t[0], t[1], t[2], running_mean.copy(), running_var.copy(),
                                               mode='eval'),
                  [rng.standard_normal((2, 2, 3, 3)), rng.uniform(0.5, 1.5, 2), rng.standard_normal(2)]))

    rng = rng_for('relu')
    cases.append(('relu', lambda t: layers.relu(t[0]), [away_from_zero(rng, (3, 7))]))

    rng = rng_for('maxpool2d_ceil')
    cases.append(('maxpool2d_ceil', lambda t: layers.maxpool2d_ceil(t[0]), [rng.standard_normal((2, 2, 5, 3))]))

    rng = rng_for('dropout')
    cases.append(('dropout', lambda t: layers.dropout(t[0], 0.3, 'train', make_rng(seed, 'dropout', point)),
                  [rng.standard_normal((4, 6))]))

    rng = rng_for('bilstm')
    names, weights = lstm_weights_case(rng, input_size=3, hidden=2)
    sequences = rng.standard_normal((2, 4, 3))

    def lstm_fn(index):
        def fn(t):
            return bilstm(t[0], dict(zip(names, t[1:])), lengths=[4, 2])[index]
        return fn
    cases.append(('bilstm_final', lstm_fn(1), [sequences] + weights))
    cases.append(('bilstm_outputs', lstm_fn(0), [sequences] + [weight.copy() for weight in weights]))

    rng = rng_for('mse_loss')
    cases.append(('mse_loss', lambda t: layers.mse_loss(t[0], t[1]),
                  [rng.standard_normal(6), rng.standard_normal(6)]))
    return cases


def run_gradcheck_suite(points=5, seed=1234, h=1e-5):
    """Gradient check of every layer at several random points.

    Parameters
    ----------
    points : int
        Number of random points per op

    seed : int
        Seed of the random points

    Returns
    -------
    results : astropy.table.Table
        Columns op, point, max_rel_err, max_rel_err_raw, threshold, ok.
        ok compares the floored max_rel_err with the threshold;
        max_rel_err_raw is the unfloored elementwise error
    """
    rows = []
    for point in range(points):
        for name, fn, inputs in gradcheck_cases(seed, point):
            analytic, numeric = compare_gradients(fn, inputs, h=h, seed=seed)
            error = max_relative_error(analytic, numeric)
            raw_error = max_relative_error(analytic, numeric, relative_floor=0.)
            ok = bool(error < THRESHOLDS[name])
            logger.info('gradcheck {} point {}: max relative error {:.3e} (unfloored {:.3e}, threshold {:.0e}) '
                        '{}'.format(name, point, error, raw_error, THRESHOLDS[name], 'ok' if ok else 'FAILED'))
            rows.append((name, point, error, raw_error, THRESHOLDS[name], ok))
    results = Table(rows=rows, names=('op', 'point', 'max_rel_err', 'max_rel_err_raw', 'threshold', 'ok'))
    results['max_rel_err'].format = '.3e'
    results['max_rel_err_raw'].format = '.3e'
    results['threshold'].format = '.0e'
    return results
