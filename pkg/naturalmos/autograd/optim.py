#! /usr/bin/env python

"""Adam optimizer over a ParameterSet.

Use
---
    ::

        from naturalmos.autograd.optim import Adam
        optimizer = Adam(model.params, lr=0.001)
        ...
        backward(loss)
        optimizer.step()

Notes
-----
    The update is the bias-corrected one:

        m <- beta1 m + (1 - beta1) g
        v <- beta2 v + (1 - beta2) g^2
        w <- w - lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + eps)

    At the first step this moves every coordinate with a nonzero
    gradient by lr (up to eps) in the direction opposite to its sign.
"""

import numpy as np

from naturalmos.utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS


def adam_step(params, state, lr, t, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Apply one Adam update in place.

    Parameters
    ----------
    params : ParameterSet
        Parameters with populated gradients

    state : dict
        Holds the 'm' and 'v' moment dicts; missing moments start at 0

    lr : float
        Learning rate

    t : int
        1-based step index used for the bias correction

    Returns
    -------
    params : ParameterSet
        The updated parameter set
    """
    if t < 1:
        raise ValueError('Adam step index must be >= 1, got {}'.format(t))
    missing = [name for name in params if params[name].grad is None]
    if missing:
        raise RuntimeError('ERROR: no gradient for parameters {}; run backward first'.format(', '.join(missing)))

    first = state.setdefault('m', {})
    second = state.setdefault('v', {})
    correction1 = 1. - beta1 ** t
    correction2 = 1. - beta2 ** t
    for name in params:
        tensor = params[name]
        grad = tensor.grad.astype(np.float64)
        m = beta1 * first.get(name, 0.) + (1. - beta1) * grad
        v = beta2 * second.get(name, 0.) + (1. - beta2) * grad ** 2
        first[name] = m = m.astype(tensor.values.dtype)
        second[name] = v = v.astype(tensor.values.dtype)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        tensor.values = (tensor.values - update).astype(tensor.values.dtype)
    return params


class Adam:
    """Adam with persistent moments.

    Parameters
    ----------
    params : ParameterSet
        Parameters to optimize

    lr : float
        Learning rate
    """
    def __init__(self, params, lr=0.001, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        if lr < 0:
            raise ValueError('learning rate must be non-negative, got {}'.format(lr))
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = {'m': {}, 'v': {}}

    def step(self):
        self.t += 1
        adam_step(self.params, self.state, self.lr, self.t, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def zero_grad(self):
        self.params.zero_grad()

    def state_dict(self):
        """Step count and moment arrays, for checkpoints"""
        return {'t': self.t,
                'm': {name: np.array(value) for name, value in self.state['m'].items()},
                'v': {name: np.array(value) for name, value in self.state['v'].items()}}

    def load_state_dict(self, state):
        self.t = int(state['t'])
        self.state = {'m': {name: np.array(value) for name, value in state['m'].items()},
                      'v': {name: np.array(value) for name, value in state['v'].items()}}
