#! /usr/bin/env python

"""Differentiable layers used by the naturalmos network.

Every function takes ``Tensor`` inputs and returns a ``Tensor`` whose
backward closure is written out by hand. The set is deliberately
closed: it holds what the CNN front end and the regression head need
and nothing else.

Notes
-----
    - conv2d: 3x3 kernels, stride 1, zero padding 1.
    - maxpool2d_ceil: 2x2 windows, stride 2, a last partial window is
      kept. Gradients go to the first maximum of each window.
    - relu: the gradient at exactly 0 is 0.
    - dropout: inverted dropout; the mask comes from the generator that
      is passed in, so a keyed stream reproduces it.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from naturalmos.autograd.tensor import Tensor, as_tensor
from naturalmos.utils.constants import BATCHNORM_EPS, BATCHNORM_MOMENTUM

MODES = ('train', 'eval')


def check_mode(mode):
    if mode not in MODES:
        raise ValueError('mode must be one of {}, got {!r}'.format(MODES, mode))


def batchnorm2d(x, gamma, beta, running_mean, running_var, mode='train', eps=BATCHNORM_EPS,
                momentum=BATCHNORM_MOMENTUM):
    """Per-channel batch normalization of a B x C x H x W tensor.

    Parameters
    ----------
    x : Tensor
        Input

    gamma, beta : Tensor
        Per-channel scale and shift

    running_mean, running_var : numpy.ndarray
        Running statistics. Updated in place in train mode only.

    mode : str
        'train' normalizes with the batch statistics, 'eval' with the
        running statistics

    Returns
    -------
    out : Tensor
    """
    check_mode(mode)
    if x.ndim != 4:
        raise ValueError('batchnorm2d expects B x C x H x W input, got shape {}'.format(x.shape))
    axes = (0, 2, 3)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    values = x.values

    if mode == 'train':
        if n < 2:
            raise ValueError('batchnorm2d in train mode needs at least 2 values per channel, got {}'.format(n))
        mean = values.mean(axis=axes)
        var = values.var(axis=axes)
        running_mean[...] = (1. - momentum) * running_mean + momentum * mean
        running_var[...] = (1. - momentum) * running_var + momentum * var * n / (n - 1)
    else:
        mean = running_mean
        var = running_var

    inv_std = (1. / np.sqrt(var + eps)).astype(values.dtype)
    xhat = (values - mean[np.newaxis, :, np.newaxis, np.newaxis].astype(values.dtype)) * \
        inv_std[np.newaxis, :, np.newaxis, np.newaxis]
    out = gamma.values[np.newaxis, :, np.newaxis, np.newaxis] * xhat + beta.values[np.newaxis, :, np.newaxis, np.newaxis]

    def backward_fn(grad):
        grad_gamma = np.sum(grad * xhat, axis=axes)
        grad_beta = np.sum(grad, axis=axes)
        grad_x = None
        if x.requires_grad:
            dxhat = grad * gamma.values[np.newaxis, :, np.newaxis, np.newaxis]
            scale = inv_std[np.newaxis, :, np.newaxis, np.newaxis]
            if mode == 'train':
                grad_x = scale / n * (n * dxhat - np.sum(dxhat, axis=axes, keepdims=True)
                                      - xhat * np.sum(dxhat * xhat, axis=axes, keepdims=True))
            else:
                grad_x = dxhat * scale
        return grad_x, grad_gamma, grad_beta

    return Tensor.from_op(out, (x, gamma, beta), backward_fn)


def conv2d(x, weight, bias):
    """3x3 cross-correlation with zero padding 1 plus a per-filter bias.

    Parameters
    ----------
    x : Tensor
        B x Cin x H x W input

    weight : Tensor
        Cout x Cin x 3 x 3 kernels

    bias : Tensor
        Cout biases

    Returns
    -------
    out : Tensor
        B x Cout x H x W
    """
    if x.ndim != 4:
        raise ValueError('conv2d expects B x C x H x W input, got shape {}'.format(x.shape))
    if weight.shape[2:] != (3, 3):
        raise ValueError('conv2d supports 3x3 kernels only, got {}'.format(weight.shape[2:]))
    if weight.shape[1] != x.shape[1]:
        raise ValueError('conv2d channel mismatch: input has {} channels, kernels expect {}'.format(
            x.shape[1], weight.shape[1]))
    if bias.shape != (weight.shape[0],):
        raise ValueError('conv2d bias of shape {} does not match {} filters'.format(bias.shape, weight.shape[0]))

    height, width = x.shape[2], x.shape[3]
    padded = np.pad(x.values, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    out = np.tensordot(windows, weight.values, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out + bias.values[np.newaxis, :, np.newaxis, np.newaxis])

    def backward_fn(grad):
        grad_weight = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = np.sum(grad, axis=(0, 2, 3))
        grad_x = None
        if x.requires_grad:
            grad_padded = np.zeros_like(padded)
            for i in range(3):
                for j in range(3):
                    contribution = np.tensordot(grad, weight.values[:, :, i, j], axes=([1], [0]))
                    grad_padded[:, :, i:i + height, j:j + width] += contribution.transpose(0, 3, 1, 2)
            grad_x = grad_padded[:, :, 1:height + 1, 1:width + 1]
        return grad_x, grad_weight, grad_bias

    return Tensor.from_op(out, (x, weight, bias), backward_fn)


def dropout(x, p, mode, rng):
    """Inverted dropout.

    Parameters
    ----------
    x : Tensor
        Input

    p : float
        Drop probability, 0 <= p < 1

    mode : str
        'train' or 'eval'; eval mode is the identity

    rng : numpy.random.Generator
        Source of the drop mask

    Returns
    -------
    out : Tensor
    """
    check_mode(mode)
    if not 0. <= p < 1.:
        raise ValueError('dropout probability must satisfy 0 <= p < 1, got {}'.format(p))
    if mode == 'eval' or p == 0.:
        return x

    mask = (rng.random(x.shape) >= p).astype(x.values.dtype) / x.values.dtype.type(1. - p)

    def backward_fn(grad):
        return (grad * mask,)

    return Tensor.from_op(x.values * mask, (x,), backward_fn)


def linear(x, weight, bias):
    """Affine map over the last axis: x @ weight.T + bias"""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError('linear dimension mismatch: input has {} features, weight expects {}'.format(
            x.shape[-1], weight.shape[1]))
    if bias.shape != (weight.shape[0],):
        raise ValueError('linear bias of shape {} does not match {} outputs'.format(bias.shape, weight.shape[0]))

    out = x.values @ weight.values.T + bias.values

    def backward_fn(grad):
        flat_grad = grad.reshape(-1, weight.shape[0])
        flat_x = x.values.reshape(-1, weight.shape[1])
        grad_x = grad @ weight.values if x.requires_grad else None
        return grad_x, flat_grad.T @ flat_x, np.sum(flat_grad, axis=0)

    return Tensor.from_op(out, (x, weight, bias), backward_fn)


def maxpool2d_ceil(x):
    """2x2 max pooling with stride 2 in ceil mode.

    A B x C x H x W input gives B x C x ceil(H/2) x ceil(W/2). Ties go to
    the first element of the window in row-major order.
    """
    if x.ndim != 4:
        raise ValueError('maxpool2d_ceil expects B x C x H x W input, got shape {}'.format(x.shape))
    batch, channels, height, width = x.shape
    out_height = -(-height // 2)
    out_width = -(-width // 2)

    padded = np.full((batch, channels, 2 * out_height, 2 * out_width), -np.inf, dtype=x.values.dtype)
    padded[:, :, :height, :width] = x.values
    windows = padded.reshape(batch, channels, out_height, 2, out_width, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(batch, channels, out_height, out_width, 4)
    argmax = np.argmax(windows, axis=-1)[..., np.newaxis]
    out = np.take_along_axis(windows, argmax, axis=-1)[..., 0]

    def backward_fn(grad):
        grad_windows = np.zeros((batch, channels, out_height, out_width, 4), dtype=grad.dtype)
        np.put_along_axis(grad_windows, argmax, grad[..., np.newaxis], axis=-1)
        grad_padded = grad_windows.reshape(batch, channels, out_height, out_width, 2, 2)
        grad_padded = grad_padded.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, 2 * out_height,
                                                                        2 * out_width)
        return (grad_padded[:, :, :height, :width],)

    return Tensor.from_op(out, (x,), backward_fn)


def mse_loss(pred, target):
    """Mean squared error between two equally shaped tensors.

    Returns
    -------
    loss : Tensor
        Scalar; its gradient with respect to ``pred`` is 2 (pred - target) / B
    """
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError('mse_loss shape mismatch: {} vs {}'.format(pred.shape, target.shape))
    if pred.size == 0:
        raise ValueError('mse_loss of an empty batch')

    diff = pred.values - target.values.astype(pred.values.dtype)
    loss = np.asarray(np.mean(diff ** 2), dtype=pred.values.dtype)

    def backward_fn(grad):
        grad_pred = grad * 2. * diff / diff.size
        return grad_pred, -grad_pred

    return Tensor.from_op(loss, (pred, target), backward_fn)


def pad_sequences(x, lengths):
    """Scatter concatenated sequences into a zero-padded batch.

    Parameters
    ----------
    x : Tensor
        (sum of lengths) x F rows, sequences stored one after the other

    lengths : list
        Length of each sequence

    Returns
    -------
    out : Tensor
        B x max(lengths) x F
    """
    lengths = [int(length) for length in lengths]
    if sum(lengths) != x.shape[0] or min(lengths) < 1:
        raise ValueError('sequence lengths {} do not add up to {} rows'.format(lengths, x.shape[0]))
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    out = np.zeros((len(lengths), max(lengths)) + x.shape[1:], dtype=x.values.dtype)
    for index, length in enumerate(lengths):
        out[index, :length] = x.values[offsets[index]:offsets[index + 1]]

    def backward_fn(grad):
        return (np.concatenate([grad[index, :length] for index, length in enumerate(lengths)], axis=0),)

    return Tensor.from_op(out, (x,), backward_fn)


def relu(x):
    """Elementwise max(0, x)"""
    mask = x.values > 0
    out = np.where(mask, x.values, x.values.dtype.type(0))

    def backward_fn(grad):
        return (grad * mask,)

    return Tensor.from_op(out, (x,), backward_fn)
