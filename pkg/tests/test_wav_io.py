#! /usr/bin/env python

"""Tests for wav_io.py"""

import os

import numpy as np
import pytest
from scipy.io import wavfile

from naturalmos.audio_io.wav_io import AudioSignal, quantize, read_wav, write_wav
from naturalmos.utils.exceptions import DataError, TruncatedAudioError, UnsupportedFormatError


def test_read_scaling(tmp_path):
    """A sample word of 16384 decodes to 0.5
    """
    path = str(tmp_path / 'half.wav')
    wavfile.write(path, 16000, np.array([16384, -16384, 0, 32767, -32768], dtype=np.int16))
    signal = read_wav(path)

    assert signal.sample_rate == 16000
    assert signal.samples[0] == 0.5
    assert signal.samples[1] == -0.5
    assert signal.samples[4] == -1.
    assert signal.duration_seconds == 5 / 16000


def test_stereo_downmix(tmp_path):
    """Stereo frames are averaged into one channel
    """
    path = str(tmp_path / 'stereo.wav')
    frames = np.array([[6554, 13107], [100, -100]], dtype=np.int16)
    wavfile.write(path, 16000, frames)
    signal = read_wav(path)

    assert signal.samples.shape == (2,)
    assert np.isclose(signal.samples[0], 0.3, atol=1e-4)
    assert signal.samples[1] == 0.


def test_unsupported_encodings(tmp_path):
    """8-bit and float WAV files are rejected
    """
    path = str(tmp_path / 'eight.wav')
    wavfile.write(path, 16000, np.array([0, 128, 255], dtype=np.uint8))
    with pytest.raises(UnsupportedFormatError):
        read_wav(path)

    path = str(tmp_path / 'float.wav')
    wavfile.write(path, 16000, np.array([0., 0.5], dtype=np.float32))
    with pytest.raises(UnsupportedFormatError):
        read_wav(path)

    path = str(tmp_path / 'text.wav')
    with open(path, 'w') as fid:
        fid.write('not a wave file at all')
    with pytest.raises(DataError):
        read_wav(path)


def test_truncated_and_missing(tmp_path):
    """A short data chunk and a missing file are reported
    """
    path = str(tmp_path / 'cut.wav')
    wavfile.write(path, 16000, np.zeros(1000, dtype=np.int16))
    with open(path, 'rb') as fid:
        data = fid.read()
    with open(path, 'wb') as fid:
        fid.write(data[:-100])
    with pytest.raises(TruncatedAudioError):
        read_wav(path)

    with pytest.raises(FileNotFoundError):
        read_wav(str(tmp_path / 'missing.wav'))


def test_requantize_lossless(tmp_path):
    """Quantizing the decoded samples gives back the stored words
    """
    words = np.random.default_rng(3).integers(-32768, 32768, size=4000).astype(np.int16)
    path = str(tmp_path / 'words.wav')
    wavfile.write(path, 22050, words)

    signal = read_wav(path)
    assert np.array_equal(quantize(signal.samples), words)

    copy_path = str(tmp_path / 'sub' / 'copy.wav')
    write_wav(copy_path, signal)
    assert os.path.isfile(copy_path)
    _, copied = wavfile.read(copy_path)
    assert np.array_equal(copied, words)


def test_quantize_clipping():
    """Quantization rounds and clips to the 16-bit range
    """
    words = quantize([1., -1., 0.5, 1e-6])
    assert words.tolist() == [32767, -32768, 16384, 0]


def test_audio_signal_invariants():
    """Samples must be finite, 1D and inside [-1, 1]
    """
    with pytest.raises(ValueError):
        AudioSignal(np.array([0., 1.5]), 16000)
    with pytest.raises(ValueError):
        AudioSignal(np.array([0., np.nan]), 16000)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros((2, 2)), 16000)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros(4), 0)
