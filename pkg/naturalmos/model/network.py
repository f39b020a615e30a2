#! /usr/bin/env python

"""CNN-BiLSTM naturalness predictor.

Each 48 x 15 mel segment is reduced to a 20-dimensional feature vector by
a six layer CNN. The feature sequence of a file is read by a one layer
bidirectional LSTM with 128 units whose final states are mapped to one
MOS value.

Use
---
    ::

        from naturalmos.model.network import NisqaTtsModel, predict_file
        model = NisqaTtsModel(seed=1234)
        for layer, shape in model.shape_audit(85):
            print(layer, shape)
        mos = predict_file(model, 'stimulus.wav')

Notes
-----
    CNN layer chain for an N segment input::

        conv1 (16)  -> N x 16 x 48 x 15
        pool1       -> N x 16 x 24 x 8
        conv2 (32)  -> N x 32 x 24 x 8
        pool2, drop -> N x 32 x 12 x 4
        conv3 (64)  -> N x 64 x 12 x 4
        conv4 (64)  -> N x 64 x 12 x 4
        pool4, drop -> N x 64 x 6 x 2
        conv5 (64), drop
        conv6 (64)  -> N x 64 x 6 x 2
        flatten     -> N x 768
        fc          -> N x 20

    Every convolution is followed by batch normalization and a ReLU.

    The many-to-one readout is the concatenation of the last forward
    state and the first-step backward state (256 values), followed by a
    linear layer to one output. The output is not clamped.

    Initialization: Kaiming-uniform (bound sqrt(6 / fan_in)) for the
    convolution and linear weights, zero biases, LSTM matrices uniform in
    +-1/sqrt(H) with forget-gate bias 1, batch-norm scale 1 and shift 0.
"""

import logging

import numpy as np

from naturalmos.autograd.layers import (batchnorm2d, check_mode, conv2d, dropout, linear, maxpool2d_ceil,
                                        pad_sequences, relu)
from naturalmos.autograd.recurrent import bilstm, init_lstm_weights
from naturalmos.autograd.tensor import ParameterSet, Tensor, flatten, get_default_dtype, reshape
from naturalmos.features.mel_spectrogram import FeatureConfig, SegmentSequence, file_segments
from naturalmos.utils.constants import CONV_FILTERS, DEFAULT_SEED, DROPOUT, LSTM_HIDDEN, SEGMENT_FEATURES
from naturalmos.utils.tools import make_rng

logger = logging.getLogger('naturalmos.model.network')

INIT_SCHEMES = ('kaiming', 'zeros')

# Pooling and dropout after each convolution block
POOL_AFTER = (True, True, False, True, False, False)
DROPOUT_AFTER = (False, True, False, True, True, False)


def clamp_mos(value):
    """Clip predictions to the [1, 5] rating scale"""
    return np.clip(value, 1., 5.)


def pooled_size(size, n_pools):
    for _ in range(n_pools):
        size = -(-size // 2)
    return size


class NisqaTtsModel:
    """Parameters, batch-norm statistics and forward passes of the network.

    Parameters
    ----------
    seed : int
        Seed of the parameter initialization

    feature_config : FeatureConfig
        Front end the model expects its segments from

    dropout : float
        Drop probability of the CNN dropout layers

    hidden : int
        LSTM units per direction

    init : str
        'kaiming' or 'zeros'
    """
    def __init__(self, seed=DEFAULT_SEED, feature_config=None, dropout=DROPOUT, hidden=LSTM_HIDDEN,
                 init='kaiming', conv_filters=None, segment_features=SEGMENT_FEATURES):
        if init not in INIT_SCHEMES:
            raise ValueError('init must be one of {}, got {!r}'.format(INIT_SCHEMES, init))
        self.seed = int(seed)
        self.feature_config = feature_config or FeatureConfig()
        self.dropout = float(dropout)
        self.hidden = int(hidden)
        self.init = init
        self.conv_filters = list(conv_filters or CONV_FILTERS)
        self.segment_features = int(segment_features)
        if len(self.conv_filters) != len(POOL_AFTER):
            raise ValueError('the network has {} convolution layers, got {} filter counts'.format(
                len(POOL_AFTER), len(self.conv_filters)))

        n_pools = sum(POOL_AFTER)
        self.flatten_size = (self.conv_filters[-1] * pooled_size(self.feature_config.n_mels, n_pools)
                             * pooled_size(self.feature_config.segment_frames, n_pools))
        self.params = ParameterSet()
        self.buffers = {}
        self._initialize()

    def _initialize(self):
        rng = make_rng(self.seed, 'init')
        dtype = get_default_dtype()
        zeros = self.init == 'zeros'

        def kaiming(shape, fan_in):
            if zeros:
                return np.zeros(shape, dtype=dtype)
            bound = np.sqrt(6. / fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        in_channels = 1
        for index, filters in enumerate(self.conv_filters, start=1):
            self.params['conv{}.weight'.format(index)] = Tensor(kaiming((filters, in_channels, 3, 3),
                                                                        in_channels * 9))
            self.params['conv{}.bias'.format(index)] = Tensor(np.zeros(filters))
            self.params['bn{}.gamma'.format(index)] = Tensor(np.ones(filters))
            self.params['bn{}.beta'.format(index)] = Tensor(np.zeros(filters))
            self.buffers['bn{}.running_mean'.format(index)] = np.zeros(filters, dtype=dtype)
            self.buffers['bn{}.running_var'.format(index)] = np.ones(filters, dtype=dtype)
            in_channels = filters

        self.params['fc.weight'] = Tensor(kaiming((self.segment_features, self.flatten_size), self.flatten_size))
        self.params['fc.bias'] = Tensor(np.zeros(self.segment_features))

        lstm = init_lstm_weights(self.segment_features, self.hidden, rng, zeros=zeros)
        for name in sorted(lstm):
            self.params['blstm.{}'.format(name)] = Tensor(lstm[name])

        self.params['head.weight'] = Tensor(kaiming((1, 2 * self.hidden), 2 * self.hidden))
        self.params['head.bias'] = Tensor(np.zeros(1))

    def hyperparameters(self):
        """Architecture description stored in checkpoint headers"""
        return {'conv_filters': list(self.conv_filters),
                'dropout': self.dropout,
                'features': {'fft_size': self.feature_config.fft_size,
                             'n_mels': self.feature_config.n_mels,
                             'fmax_hz': self.feature_config.fmax_hz,
                             'window_ms': self.feature_config.window_ms,
                             'hop_ms': self.feature_config.hop_ms,
                             'segment_frames': self.feature_config.segment_frames},
                'hidden': self.hidden,
                'init': self.init,
                'segment_features': self.segment_features}

    @classmethod
    def from_hyperparameters(cls, hyperparameters, seed=DEFAULT_SEED):
        return cls(seed=seed, feature_config=FeatureConfig(**hyperparameters['features']),
                   dropout=hyperparameters['dropout'], hidden=hyperparameters['hidden'],
                   init=hyperparameters.get('init', 'kaiming'), conv_filters=hyperparameters['conv_filters'],
                   segment_features=hyperparameters['segment_features'])

    def state(self):
        """Copies of the parameters and batch-norm statistics"""
        return {'params': self.params.snapshot(),
                'buffers': {name: value.copy() for name, value in self.buffers.items()}}

    def load_state(self, state):
        self.params.load_values(state['params'])
        for name, value in state['buffers'].items():
            if name not in self.buffers:
                raise KeyError('unknown buffer {}'.format(name))
            self.buffers[name][...] = value

    def check_segments(self, segments):
        if isinstance(segments, SegmentSequence):
            segments = segments.segments
        segments = np.asarray(segments)
        expected = (1, self.feature_config.n_mels, self.feature_config.segment_frames)
        if segments.ndim != 4 or segments.shape[1:] != expected or segments.shape[0] < 1:
            raise ValueError('expected N x {} x {} x {} segments, got shape {}'.format(*expected,
                                                                                        segments.shape))
        return segments

    def cnn_forward(self, segments, mode='eval', rng=None, trace=None):
        """Segment feature vectors.

        Parameters
        ----------
        segments : SegmentSequence or numpy.ndarray
            N x 1 x n_mels x segment_frames input

        mode : str
            'train' or 'eval'

        rng : numpy.random.Generator
            Dropout masks, needed in train mode

        trace : list
            If given, (layer, shape) pairs are appended to it

        Returns
        -------
        features : Tensor
            N x 20
        """
        check_mode(mode)
        segments = self.check_segments(segments)
        if mode == 'train' and self.dropout > 0 and rng is None:
            raise ValueError('cnn_forward in train mode needs a random generator for dropout')

        def record(layer, tensor):
            if trace is not None:
                trace.append((layer, tensor.shape))

        x = Tensor(segments)
        record('input', x)
        for index in range(1, len(self.conv_filters) + 1):
            x = conv2d(x, self.params['conv{}.weight'.format(index)], self.params['conv{}.bias'.format(index)])
            x = batchnorm2d(x, self.params['bn{}.gamma'.format(index)], self.params['bn{}.beta'.format(index)],
                            self.buffers['bn{}.running_mean'.format(index)],
                            self.buffers['bn{}.running_var'.format(index)], mode=mode)
            x = relu(x)
            record('conv{}'.format(index), x)
            if POOL_AFTER[index - 1]:
                x = maxpool2d_ceil(x)
                record('pool{}'.format(index), x)
            if DROPOUT_AFTER[index - 1]:
                x = dropout(x, self.dropout, mode, rng)

        x = flatten(x)
        record('flatten', x)
        x = linear(x, self.params['fc.weight'], self.params['fc.bias'])
        record('fc', x)
        return x

    def sequence_head_forward(self, features, lengths=None, trace=None):
        """Map segment features to naturalness estimates.

        Parameters
        ----------
        features : Tensor
            N x 20 for one file or B x N x 20 for a padded batch

        lengths : list
            True sequence lengths of a batch

        Returns
        -------
        mos : Tensor
            Scalar for one file, B values for a batch
        """
        weights = {name[len('blstm.'):]: self.params[name] for name in self.params if name.startswith('blstm.')}
        outputs, final = bilstm(features, weights, lengths=lengths)
        if trace is not None:
            trace.append(('blstm', outputs.shape))
            trace.append(('readout', final.shape))
        out = linear(final, self.params['head.weight'], self.params['head.bias'])
        if trace is not None:
            trace.append(('head', out.shape))
        return reshape(out, out.shape[:-1])

    def forward_batch(self, batch, mode='eval', rng=None):
        """Batched many-to-one prediction.

        Only the valid segments of each file pass through the CNN, so the
        batch-norm statistics never see padding. The features are then
        right-padded and the true lengths mask the BiLSTM.

        Parameters
        ----------
        batch : list
            SegmentSequence objects or N_b x 1 x n_mels x segment_frames arrays

        Returns
        -------
        mos : Tensor
            One value per file
        """
        arrays = [self.check_segments(segments) for segments in batch]
        if not arrays:
            raise ValueError('forward_batch needs at least one file')
        lengths = [array.shape[0] for array in arrays]
        features = self.cnn_forward(np.concatenate(arrays, axis=0), mode=mode, rng=rng)
        padded = pad_sequences(features, lengths)
        return self.sequence_head_forward(padded, lengths=lengths)

    def predict_segments(self, segments):
        """Eval-mode prediction of one segment sequence"""
        return float(self.forward_batch([segments], mode='eval').values[0])

    def shape_audit(self, n_segments):
        """Tensor shapes through the network for an N segment input.

        Returns
        -------
        audit : list
            (layer, shape) pairs in evaluation order
        """
        trace = []
        segments = np.zeros((n_segments, 1, self.feature_config.n_mels, self.feature_config.segment_frames))
        features = self.cnn_forward(segments, mode='eval', trace=trace)
        self.sequence_head_forward(features, trace=trace)
        return trace


def predict_file(model, path, clamp=False):
    """Predict the MOS of one WAV file.

    Parameters
    ----------
    model : NisqaTtsModel
        Trained model, used in eval mode

    path : str
        WAV file

    clamp : bool
        Clip the prediction to [1, 5]

    Returns
    -------
    mos : float
    """
    prediction = model.predict_segments(file_segments(path, model.feature_config))
    if clamp:
        prediction = float(clamp_mos(prediction))
    return prediction
