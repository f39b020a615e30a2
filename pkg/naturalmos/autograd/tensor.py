#! /usr/bin/env python

"""Reverse-mode automatic differentiation on numpy arrays.

A ``Tensor`` wraps a numpy array. Every operation that has an input
requiring gradients records its parents and a closure mapping the
gradient of its output to the gradients of its inputs. ``backward``
walks the recorded graph in reverse topological order.

Use
---
    ::

        from naturalmos.autograd.tensor import Tensor, backward, tensor_sum
        w = Tensor([1., 2., 3.], requires_grad=True)
        loss = tensor_sum(w)
        backward(loss)
        print(w.grad)        # [1. 1. 1.]

Notes
-----
    Values are 32-bit by default. ``precision(np.float64)`` switches
    newly created tensors to 64-bit, which the gradient checker needs.

    A graph can be differentiated once. Running ``backward`` a second
    time on the same loss raises, the forward pass has to be repeated.
"""

from collections.abc import MutableMapping
from contextlib import contextmanager

import numpy as np

_DTYPE = {'current': np.float32}


def get_default_dtype():
    return _DTYPE['current']


@contextmanager
def precision(dtype):
    """Temporarily change the dtype of newly created tensors"""
    previous = _DTYPE['current']
    _DTYPE['current'] = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE['current'] = previous


class Tensor:
    """n-dimensional array with an optional gradient.

    Parameters
    ----------
    values : array_like
        Data, cast to the current default dtype

    requires_grad : bool
        If True, ``backward`` fills ``grad``

    name : str
        Optional label used in error messages
    """
    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=get_default_dtype())
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward_fn = None
        self._is_leaf = True
        self._consumed = False

    @classmethod
    def from_op(cls, values, parents, backward_fn):
        """Output of an operation. The graph is only recorded when one of
        the parents needs a gradient."""
        out = cls.__new__(cls)
        out.values = values
        out.grad = None
        out.name = None
        out._is_leaf = False
        out._consumed = False
        out.requires_grad = any(parent.requires_grad for parent in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out._parents = ()
            out._backward_fn = None
        return out

    def __repr__(self):
        label = ' name={}'.format(self.name) if self.name else ''
        return 'Tensor(shape={}, dtype={}, requires_grad={}{})'.format(self.shape, self.values.dtype,
                                                                        self.requires_grad, label)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self):
        return self.values.item()

    def numpy(self):
        return self.values

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)


def as_tensor(values):
    """Wrap arrays as constant tensors; tensors pass through"""
    if isinstance(values, Tensor):
        return values
    return Tensor(values)


def topological_order(root):
    """Nodes reachable from ``root``, parents before children"""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``grad`` of every tensor the scalar ``loss`` depends on.

    Leaf gradients accumulate into an existing ``grad`` (see
    ``ParameterSet.zero_grad``); gradients of intermediate results are
    assigned.

    Parameters
    ----------
    loss : Tensor
        Scalar result of a recorded forward pass
    """
    if loss.values.size != 1:
        raise ValueError('backward needs a scalar loss, got shape {}'.format(loss.shape))
    if loss._consumed:
        raise RuntimeError('graph already consumed: repeat the forward pass before calling backward again')
    if not loss.requires_grad:
        raise RuntimeError('loss does not depend on any tensor that requires a gradient')

    order = topological_order(loss)
    for node in order:
        if node._consumed:
            raise RuntimeError('graph already consumed: repeat the forward pass before calling backward again')

    pending = {id(loss): np.ones_like(loss.values)}
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._is_leaf:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        node.grad = grad
        parent_grads = node._backward_fn(grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    # Release the graph
    for node in order:
        if not node._is_leaf:
            node._consumed = True
            node._backward_fn = None
            node._parents = ()


def getitem(x, index):
    """Basic (slice / integer) indexing"""
    def backward_fn(grad):
        full = np.zeros_like(x.values)
        full[index] += grad
        return (full,)
    return Tensor.from_op(x.values[index], (x,), backward_fn)


def reshape(x, shape):
    def backward_fn(grad):
        return (grad.reshape(x.shape),)
    return Tensor.from_op(x.values.reshape(shape), (x,), backward_fn)


def flatten(x):
    """Collapse every axis after the first"""
    return reshape(x, (x.shape[0], -1))


def tensor_sum(x):
    def backward_fn(grad):
        return (np.broadcast_to(grad, x.shape).astype(x.values.dtype),)
    return Tensor.from_op(np.asarray(np.sum(x.values), dtype=x.values.dtype), (x,), backward_fn)


def weighted_sum(x, weights):
    """sum(x * weights) for a constant weight array of the same shape"""
    weights = np.asarray(weights, dtype=x.values.dtype)
    if weights.shape != x.shape:
        raise ValueError('weights of shape {} do not match tensor of shape {}'.format(weights.shape, x.shape))

    def backward_fn(grad):
        return (grad * weights,)
    return Tensor.from_op(np.asarray(np.sum(x.values * weights), dtype=x.values.dtype), (x,), backward_fn)


class ParameterSet(MutableMapping):
    """Named trainable tensors, iterated in lexicographic name order"""
    def __init__(self, tensors=None):
        self._tensors = {}
        if tensors is not None:
            for name, tensor in dict(tensors).items():
                self[name] = tensor

    def __setitem__(self, name, tensor):
        if not isinstance(tensor, Tensor):
            raise TypeError('parameter {} must be a Tensor, got {}'.format(name, type(tensor).__name__))
        tensor.requires_grad = True
        tensor.name = name
        self._tensors[name] = tensor

    def __getitem__(self, name):
        return self._tensors[name]

    def __delitem__(self, name):
        del self._tensors[name]

    def __iter__(self):
        return iter(sorted(self._tensors))

    def __len__(self):
        return len(self._tensors)

    def numel(self):
        return sum(tensor.size for tensor in self._tensors.values())

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def snapshot(self):
        """Copies of all parameter values"""
        return {name: self[name].values.copy() for name in self}

    def load_values(self, values):
        """Overwrite parameter values from a name -> array mapping"""
        missing = set(self) - set(values)
        if missing:
            raise KeyError('missing values for parameters: {}'.format(', '.join(sorted(missing))))
        for name in self:
            array = np.asarray(values[name])
            if array.shape != self[name].shape:
                raise ValueError('parameter {} has shape {}, got {}'.format(name, self[name].shape, array.shape))
            self[name].values = array.astype(self[name].values.dtype, copy=True)
