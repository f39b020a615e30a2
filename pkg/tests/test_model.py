#! /usr/bin/env python

"""Tests for network.py"""

import os

import numpy as np
import pytest

from naturalmos.audio_io.wav_io import AudioSignal, read_wav, write_wav
from naturalmos.autograd.layers import mse_loss
from naturalmos.autograd.tensor import Tensor, backward
from naturalmos.features.mel_spectrogram import FeatureConfig
from naturalmos.model.network import NisqaTtsModel, clamp_mos, predict_file
from naturalmos.utils.tools import make_rng

from test_data.toy_data import make_toy_naturalness_set


def expected_chain(n):
    return [('input', (n, 1, 48, 15)),
            ('conv1', (n, 16, 48, 15)),
            ('pool1', (n, 16, 24, 8)),
            ('conv2', (n, 32, 24, 8)),
            ('pool2', (n, 32, 12, 4)),
            ('conv3', (n, 64, 12, 4)),
            ('conv4', (n, 64, 12, 4)),
            ('pool4', (n, 64, 6, 2)),
            ('conv5', (n, 64, 6, 2)),
            ('conv6', (n, 64, 6, 2)),
            ('flatten', (n, 768)),
            ('fc', (n, 20)),
            ('blstm', (n, 256)),
            ('readout', (256,)),
            ('head', (1,))]


def random_segments(n, seed=0):
    return np.random.default_rng(seed).uniform(-80., 0., size=(n, 1, 48, 15))


@pytest.mark.parametrize('n', [1, 7, 85])
def test_shape_audit(n):
    """Layer chain shapes for 1, 7 and 85 segments
    """
    model = NisqaTtsModel(seed=1)
    assert model.shape_audit(n) == expected_chain(n)


def test_parameter_shapes():
    """Parameter names, shapes and total count of the architecture
    """
    model = NisqaTtsModel()
    assert model.flatten_size == 768
    assert model.params['conv1.weight'].shape == (16, 1, 3, 3)
    assert model.params['conv3.weight'].shape == (64, 32, 3, 3)
    assert model.params['fc.weight'].shape == (20, 768)
    assert model.params['blstm.forward.weight_ih'].shape == (512, 20)
    assert model.params['blstm.backward.weight_hh'].shape == (512, 128)
    assert model.params['head.weight'].shape == (1, 256)
    assert len(model.buffers) == 12

    filters = [16, 32, 64, 64, 64, 64]
    channels = [1] + filters[:-1]
    expected = sum(out * cin * 9 + out + 2 * out for out, cin in zip(filters, channels))
    expected += 768 * 20 + 20
    expected += 2 * (512 * 20 + 512 * 128 + 512)
    expected += 256 + 1
    assert model.params.numel() == expected


def test_deterministic_init():
    """The same seed gives the same weights, another seed different ones
    """
    first = NisqaTtsModel(seed=5)
    second = NisqaTtsModel.from_hyperparameters(first.hyperparameters(), seed=5)
    third = NisqaTtsModel(seed=6)
    for name in first.params:
        assert np.array_equal(first.params[name].values, second.params[name].values)
    assert not np.array_equal(first.params['conv2.weight'].values, third.params['conv2.weight'].values)


def test_eval_determinism_and_order():
    """Eval mode is deterministic and the output depends on the segment
    order
    """
    model = NisqaTtsModel(seed=2)
    segments = random_segments(12)
    first = model.predict_segments(segments)
    assert first == model.predict_segments(segments.copy())
    assert np.isfinite(model.predict_segments(segments[:1]))
    assert model.predict_segments(segments[::-1].copy()) != first


def test_zero_model():
    """A zero initialized model outputs its head bias
    """
    model = NisqaTtsModel(init='zeros')
    assert model.predict_segments(random_segments(5)) == 0.
    model.params['head.bias'].values[...] = 0.75
    assert model.predict_segments(random_segments(9, seed=1)) == np.float32(0.75)


def test_sequence_head_forward():
    """The head maps N x 20 features to a scalar, and padding with true
    lengths does not change the estimate
    """
    zero = NisqaTtsModel(init='zeros')
    zero.params['head.bias'].values[...] = -1.5
    out = zero.sequence_head_forward(Tensor(np.ones((4, 20), dtype=np.float32)))
    assert out.shape == ()
    assert out.values == np.float32(-1.5)

    model = NisqaTtsModel(seed=3)
    rng = np.random.default_rng(5)
    short = rng.normal(size=(3, 20)).astype(np.float32)
    long = rng.normal(size=(6, 20)).astype(np.float32)
    padded = np.zeros((2, 6, 20), dtype=np.float32)
    padded[0, :3] = short
    padded[1] = long
    batch = model.sequence_head_forward(Tensor(padded), lengths=[3, 6]).values
    assert batch.shape == (2,)
    np.testing.assert_allclose(batch[0], model.sequence_head_forward(Tensor(short)).values, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(batch[1], model.sequence_head_forward(Tensor(long)).values, rtol=1e-5, atol=1e-6)


def test_forward_batch_matches_single():
    """Batched eval predictions equal one-file predictions
    """
    model = NisqaTtsModel(seed=3)
    files = [random_segments(4, seed=1), random_segments(9, seed=2), random_segments(1, seed=3)]
    batch = model.forward_batch(files, mode='eval')
    assert batch.shape == (3,)
    single = [model.predict_segments(segments) for segments in files]
    assert np.allclose(batch.values, single, rtol=1e-5, atol=1e-6)


def test_gradient_reaches_parameters():
    """One backward pass from the loss reaches every parameter. Conv
    biases are cancelled by the following batch normalization and are
    only checked for finiteness.
    """
    model = NisqaTtsModel(seed=4)
    model.params.zero_grad()
    pred = model.forward_batch([random_segments(6), random_segments(3, seed=7)], mode='train',
                               rng=make_rng(4, 'dropout', 0))
    backward(mse_loss(pred, [3.5, 2.]))
    for name in model.params:
        grad = model.params[name].grad
        assert np.all(np.isfinite(grad)), name
        if name.startswith('conv') and name.endswith('.bias'):
            continue
        assert np.any(grad != 0.), name


def test_train_mode_updates_statistics():
    """Train mode moves the batch-norm statistics, eval mode does not
    """
    model = NisqaTtsModel(seed=4, dropout=0.)
    before = {name: value.copy() for name, value in model.buffers.items()}
    model.predict_segments(random_segments(3))
    for name in model.buffers:
        assert np.array_equal(model.buffers[name], before[name])
    model.forward_batch([random_segments(3)], mode='train')
    assert not np.array_equal(model.buffers['bn1.running_mean'], before['bn1.running_mean'])


def test_input_checks():
    """Wrong segment shapes and a missing dropout generator are rejected
    """
    model = NisqaTtsModel()
    with pytest.raises(ValueError):
        model.predict_segments(np.zeros((3, 1, 40, 15)))
    with pytest.raises(ValueError):
        model.forward_batch([])
    with pytest.raises(ValueError):
        model.cnn_forward(random_segments(2), mode='train')
    with pytest.raises(ValueError):
        NisqaTtsModel(init='orthogonal')


def test_feature_config_changes_flatten():
    """A different front end changes the flattened CNN size
    """
    model = NisqaTtsModel(feature_config=FeatureConfig(n_mels=40, segment_frames=16))
    assert model.flatten_size == 64 * 5 * 2
    audit = dict(model.shape_audit(2))
    assert audit['fc'] == (2, 20)


def test_clamp():
    """Predictions can be clipped to the rating scale
    """
    assert clamp_mos(0.3) == 1.
    assert clamp_mos(6.) == 5.
    assert clamp_mos(3.3) == 3.3


def test_predict_file(tmp_path):
    """File prediction is bitwise stable, a zero model predicts its head
    bias, and a doubled waveform gives a finite prediction
    """
    make_toy_naturalness_set(str(tmp_path), n_files=2, duration=0.3)
    path = os.path.join(str(tmp_path), 'toy_001.wav')
    model = NisqaTtsModel(seed=8)

    first = predict_file(model, path)
    assert first == predict_file(model, path)
    assert isinstance(first, float)

    signal = read_wav(path)
    doubled = os.path.join(str(tmp_path), 'doubled.wav')
    write_wav(doubled, AudioSignal(np.concatenate([signal.samples, signal.samples]), signal.sample_rate))
    assert np.isfinite(predict_file(model, doubled))

    zero = NisqaTtsModel(init='zeros')
    zero.params['head.bias'].values[...] = 2.5
    assert predict_file(zero, path) == 2.5
    zero.params['head.bias'].values[...] = 7.
    assert predict_file(zero, path, clamp=True) == 5.
