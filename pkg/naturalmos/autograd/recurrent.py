#! /usr/bin/env python

"""Single layer bidirectional LSTM with length masking.

Use
---
    ::

        from naturalmos.autograd.recurrent import bilstm, init_lstm_weights
        weights = init_lstm_weights(input_size=20, hidden=128, rng=rng)
        outputs, final = bilstm(features, weights, lengths=[85, 40])

Notes
-----
    Gate order inside the stacked 4H weight rows is input, forget, cell,
    output. Initial hidden and cell states are zero.

    Sequences shorter than the padded length T are masked: once a step
    lies beyond a sequence's length the states are carried unchanged and
    the step output is zero. The backward direction therefore starts at
    the last valid step of each sequence.

    The readout ``final`` is the forward hidden state after the last
    valid step concatenated with the backward hidden state after step 0.

    The backward pass is hand-written backpropagation through time over
    the cached gate activations.
"""

import numpy as np
from scipy.special import expit

from naturalmos.autograd.tensor import Tensor, get_default_dtype, getitem, reshape

DIRECTIONS = ('forward', 'backward')
LSTM_WEIGHT_NAMES = ('weight_ih', 'weight_hh', 'bias')


def _run_direction(x, weight_ih, weight_hh, bias, lengths, reverse):
    """Masked LSTM recursion over one direction.

    Returns the B x T x H step outputs, the final hidden state and the
    per-step cache used by the backward pass.
    """
    batch, steps, _ = x.shape
    hidden = weight_hh.shape[1]
    dtype = x.dtype
    h = np.zeros((batch, hidden), dtype=dtype)
    c = np.zeros((batch, hidden), dtype=dtype)
    out = np.zeros((batch, steps, hidden), dtype=dtype)
    projected = x @ weight_ih.T + bias
    cache = []
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        mask = (t < lengths).astype(dtype)[:, np.newaxis]
        z = projected[:, t] + h @ weight_hh.T
        i = expit(z[:, :hidden])
        f = expit(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = expit(z[:, 3 * hidden:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append((t, mask, h, c, i, f, g, o, tanh_c))
        h = mask * h_new + (1. - mask) * h
        c = mask * c_new + (1. - mask) * c
        out[:, t] = mask * h_new
    return out, h, cache


def _backprop_direction(grad_out, grad_final, x, weight_ih, weight_hh, cache):
    """Backpropagation through time for one direction.

    Returns the gradients for x, weight_ih, weight_hh and bias.
    """
    batch, steps, _ = x.shape
    hidden = weight_hh.shape[1]
    grad_z = np.zeros((batch, steps, 4 * hidden), dtype=grad_out.dtype)
    grad_weight_hh = np.zeros_like(weight_hh)
    dh = grad_final.copy()
    dc = np.zeros_like(dh)
    for t, mask, h_prev, c_prev, i, f, g, o, tanh_c in reversed(cache):
        dh_new = mask * (dh + grad_out[:, t])
        dc_new = mask * dc + dh_new * o * (1. - tanh_c ** 2)
        dz = np.concatenate([dc_new * g * i * (1. - i),
                             dc_new * c_prev * f * (1. - f),
                             dc_new * i * (1. - g ** 2),
                             dh_new * tanh_c * o * (1. - o)], axis=1)
        grad_z[:, t] = dz
        grad_weight_hh += dz.T @ h_prev
        dh = (1. - mask) * dh + dz @ weight_hh
        dc = (1. - mask) * dc + dc_new * f
    grad_x = grad_z @ weight_ih
    grad_weight_ih = np.tensordot(grad_z, x, axes=([0, 1], [0, 1]))
    grad_bias = np.sum(grad_z, axis=(0, 1))
    return grad_x, grad_weight_ih, grad_weight_hh, grad_bias


def bilstm(x, weights, lengths=None):
    """Run a one layer bidirectional LSTM.

    Parameters
    ----------
    x : Tensor
        B x T x D batch, or a single N x D sequence

    weights : dict
        Tensors keyed 'forward.weight_ih' (4H x D), 'forward.weight_hh'
        (4H x H), 'forward.bias' (4H) and the same three for 'backward'

    lengths : list
        True length of each sequence; defaults to the full length

    Returns
    -------
    outputs : Tensor
        B x T x 2H step outputs (N x 2H for a single sequence), zero
        beyond each sequence's length

    final : Tensor
        B x 2H many-to-one readout (2H for a single sequence)
    """
    single = x.ndim == 2
    if single:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 3:
        raise ValueError('bilstm expects B x T x D or N x D input, got shape {}'.format(x.shape))
    batch, steps, _ = x.shape

    if lengths is None:
        lengths = np.full(batch, steps)
    lengths = np.asarray(lengths, dtype=int).reshape(-1)
    if lengths.shape != (batch,):
        raise ValueError('bilstm got {} lengths for a batch of {}'.format(lengths.size, batch))
    if np.any(lengths > steps) or np.any(lengths < 1):
        raise ValueError('bilstm lengths {} must lie within [1, {}]'.format(lengths.tolist(), steps))

    params = [weights['{}.{}'.format(direction, name)] for direction in DIRECTIONS for name in LSTM_WEIGHT_NAMES]
    hidden = params[1].shape[1]
    for direction_params in (params[:3], params[3:]):
        weight_ih, weight_hh, bias = direction_params
        if weight_ih.shape != (4 * hidden, x.shape[2]) or weight_hh.shape != (4 * hidden, hidden) \
                or bias.shape != (4 * hidden,):
            raise ValueError('bilstm weight shapes {}, {}, {} do not fit input size {} and hidden size {}'.format(
                weight_ih.shape, weight_hh.shape, bias.shape, x.shape[2], hidden))

    out_fwd, final_fwd, cache_fwd = _run_direction(x.values, *(p.values for p in params[:3]), lengths, False)
    out_bwd, final_bwd, cache_bwd = _run_direction(x.values, *(p.values for p in params[3:]), lengths, True)

    # Step outputs in rows 0..T-1, the readout in row T
    packed = np.empty((batch, steps + 1, 2 * hidden), dtype=x.values.dtype)
    packed[:, :steps, :hidden] = out_fwd
    packed[:, :steps, hidden:] = out_bwd
    packed[:, steps, :hidden] = final_fwd
    packed[:, steps, hidden:] = final_bwd

    def backward_fn(grad):
        fwd = _backprop_direction(grad[:, :steps, :hidden], grad[:, steps, :hidden], x.values,
                                  params[0].values, params[1].values, cache_fwd)
        bwd = _backprop_direction(grad[:, :steps, hidden:], grad[:, steps, hidden:], x.values,
                                  params[3].values, params[4].values, cache_bwd)
        grad_x = fwd[0] + bwd[0] if x.requires_grad else None
        return (grad_x,) + fwd[1:] + bwd[1:]

    combined = Tensor.from_op(packed, (x,) + tuple(params), backward_fn)
    outputs = getitem(combined, (slice(None), slice(0, steps)))
    final = getitem(combined, (slice(None), steps))
    if single:
        return getitem(outputs, 0), getitem(final, 0)
    return outputs, final


def init_lstm_weights(input_size, hidden, rng, zeros=False):
    """Initial bidirectional LSTM weights.

    Matrices are drawn uniformly from [-1/sqrt(H), 1/sqrt(H)], biases are
    zero except for the forget gate whose bias is 1.

    Returns
    -------
    weights : dict
        name -> numpy.ndarray, keyed like the ``bilstm`` weights
    """
    dtype = get_default_dtype()
    bound = 1. / np.sqrt(hidden)
    weights = {}
    for direction in DIRECTIONS:
        if zeros:
            weight_ih = np.zeros((4 * hidden, input_size))
            weight_hh = np.zeros((4 * hidden, hidden))
            bias = np.zeros(4 * hidden)
        else:
            weight_ih = rng.uniform(-bound, bound, size=(4 * hidden, input_size))
            weight_hh = rng.uniform(-bound, bound, size=(4 * hidden, hidden))
            bias = np.zeros(4 * hidden)
            bias[hidden:2 * hidden] = 1.
        weights['{}.weight_ih'.format(direction)] = weight_ih.astype(dtype)
        weights['{}.weight_hh'.format(direction)] = weight_hh.astype(dtype)
        weights['{}.bias'.format(direction)] = bias.astype(dtype)
    return weights
