#! /usr/bin/env python

"""Tests for checkpoint.py"""

import numpy as np
import pytest

from naturalmos.autograd.layers import mse_loss
from naturalmos.autograd.optim import Adam
from naturalmos.autograd.tensor import backward
from naturalmos.model.checkpoint import (ModelCheckpoint, inspect_checkpoint, load_checkpoint, read_checkpoint,
                                         save_checkpoint, write_checkpoint)
from naturalmos.model.network import NisqaTtsModel
from naturalmos.utils.constants import CHECKPOINT_VERSION
from naturalmos.utils.exceptions import CheckpointError
from naturalmos.utils.tools import make_rng


def trained_model():
    """Model and optimizer after one training step, so that every tensor
    and the batch-norm statistics differ from their initial values"""
    model = NisqaTtsModel(seed=11)
    optimizer = Adam(model.params)
    optimizer.zero_grad()
    segments = np.random.default_rng(0).uniform(-60., 0., size=(5, 1, 48, 15))
    pred = model.forward_batch([segments], mode='train', rng=make_rng(11, 'dropout', 0))
    backward(mse_loss(pred, [3.]))
    optimizer.step()
    return model, optimizer


def test_round_trip(tmp_path):
    """Parameters, batch-norm statistics, metadata and Adam state are
    restored bitwise
    """
    model, optimizer = trained_model()
    meta = {'stage': 'pretrain', 'epochs': 1, 'config': ['lr = 0.001']}
    path = save_checkpoint(model, meta, str(tmp_path / 'out' / 'model.ckpt'),
                           optimizer_state=optimizer.state_dict())

    checkpoint = read_checkpoint(path)
    assert checkpoint.meta == meta
    assert checkpoint.path == path
    assert checkpoint.model.seed == 11
    assert checkpoint.model.hyperparameters() == model.hyperparameters()
    for name in model.params:
        assert np.array_equal(checkpoint.model.params[name].values, model.params[name].values)
        assert checkpoint.model.params[name].values.dtype == np.float32
    for name in model.buffers:
        assert np.array_equal(checkpoint.model.buffers[name], model.buffers[name])

    state = optimizer.state_dict()
    assert checkpoint.optimizer_state['t'] == 1
    for key in ('m', 'v'):
        assert set(checkpoint.optimizer_state[key]) == set(state[key])
        for name in state[key]:
            assert np.array_equal(checkpoint.optimizer_state[key][name], state[key][name])

    loaded = load_checkpoint(path)
    segments = np.random.default_rng(1).uniform(-60., 0., size=(4, 1, 48, 15))
    assert loaded.predict_segments(segments) == model.predict_segments(segments)


def test_identical_bytes(tmp_path):
    """Saving the same model twice gives identical files, also through a
    read and write cycle
    """
    model, optimizer = trained_model()
    first = save_checkpoint(model, {'stage': 'x'}, str(tmp_path / 'a.ckpt'), optimizer.state_dict())
    second = save_checkpoint(model, {'stage': 'x'}, str(tmp_path / 'b.ckpt'), optimizer.state_dict())
    third = write_checkpoint(read_checkpoint(first), str(tmp_path / 'c.ckpt'))
    with open(first, 'rb') as fid:
        data = fid.read()
    for other in (second, third):
        with open(other, 'rb') as fid:
            assert fid.read() == data


def test_no_optimizer_state(tmp_path):
    """Checkpoints without Adam state read back with optimizer_state None
    """
    path = write_checkpoint(ModelCheckpoint(NisqaTtsModel(seed=2), {'stage': 'finetune'}),
                            str(tmp_path / 'plain.ckpt'))
    assert read_checkpoint(path).optimizer_state is None


def test_inspect(tmp_path):
    """The header is available without decoding tensors
    """
    model = NisqaTtsModel(seed=3)
    path = save_checkpoint(model, {'stage': 'pretrain', 'seed': 3}, str(tmp_path / 'm.ckpt'))
    header = inspect_checkpoint(path)
    assert header['version'] == CHECKPOINT_VERSION
    assert header['hyperparameters']['conv_filters'] == [16, 32, 64, 64, 64, 64]
    assert header['hyperparameters']['hidden'] == 128
    assert header['meta']['stage'] == 'pretrain'
    assert header['optimizer_t'] is None
    names = [name for name, _ in header['tensors']]
    assert 'head.weight' in names
    assert 'buffer/bn1.running_var' in names


def test_corruption(tmp_path):
    """Flipped bytes, truncation, trailing data and foreign files are
    rejected
    """
    model = NisqaTtsModel(seed=4)
    path = save_checkpoint(model, {}, str(tmp_path / 'm.ckpt'))
    with open(path, 'rb') as fid:
        data = fid.read()

    def variant(name, payload):
        target = str(tmp_path / name)
        with open(target, 'wb') as fid:
            fid.write(payload)
        return target

    flipped = bytearray(data)
    flipped[-40] ^= 0xFF
    with pytest.raises(CheckpointError) as err:
        read_checkpoint(variant('flipped.ckpt', bytes(flipped)))
    assert 'digest' in str(err.value)

    with pytest.raises(CheckpointError) as err:
        read_checkpoint(variant('short.ckpt', data[:-1000]))
    assert 'truncated' in str(err.value)

    with pytest.raises(CheckpointError):
        read_checkpoint(variant('long.ckpt', data + b'\x00'))

    with pytest.raises(CheckpointError):
        read_checkpoint(variant('magic.ckpt', b'XXXX' + data[4:]))

    wrong_version = bytearray(data)
    wrong_version[4] = CHECKPOINT_VERSION + 1
    with pytest.raises(CheckpointError) as err:
        read_checkpoint(variant('version.ckpt', bytes(wrong_version)))
    assert 'version' in str(err.value)

    with pytest.raises(CheckpointError):
        read_checkpoint(variant('tiny.ckpt', data[:6]))

    with pytest.raises(FileNotFoundError):
        read_checkpoint(str(tmp_path / 'missing.ckpt'))
