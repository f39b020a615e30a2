#! /usr/bin/env python

"""Read and write 16-bit PCM WAV files.

Use
---
    ::

        from naturalmos.audio_io.wav_io import read_wav, write_wav
        signal = read_wav('stimulus.wav')
        print(signal.sample_rate, signal.duration_seconds)

Notes
-----
    Only 16-bit signed PCM is accepted, mono or stereo. Stereo is
    downmixed by averaging the two channels of each frame. Samples are
    scaled by 1/32768, so re-quantizing the decoded samples reproduces
    the stored sample words.

Dependencies
------------
    scipy.io.wavfile does the chunk decoding. The RIFF chunk sizes are
    checked first so that a short data chunk is reported as truncated
    instead of being silently shortened.
"""

from dataclasses import dataclass
import logging
import os
import struct
import warnings

import numpy as np
from scipy.io import wavfile

from naturalmos.utils.constants import PCM_SCALE
from naturalmos.utils.exceptions import TruncatedAudioError, UnsupportedFormatError
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.audio_io.wav_io')


@dataclass(eq=False)
class AudioSignal:
    """Decoded mono waveform.

    Parameters
    ----------
    samples : numpy.ndarray
        1D float64 amplitudes in [-1, 1]

    sample_rate : int
        Sampling rate in Hz
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.sample_rate = int(self.sample_rate)
        if self.samples.ndim != 1:
            raise ValueError('AudioSignal samples must be 1D, got shape {}'.format(self.samples.shape))
        if self.sample_rate <= 0:
            raise ValueError('Sample rate must be positive, got {}'.format(self.sample_rate))
        if not np.all(np.isfinite(self.samples)):
            raise ValueError('AudioSignal samples must be finite')
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0:
            raise ValueError('AudioSignal samples must lie within [-1, 1]')

    def __len__(self):
        return len(self.samples)

    @property
    def duration_seconds(self):
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples):
        """Return a new signal with the same sample rate"""
        return AudioSignal(samples, self.sample_rate)


def check_data_chunk(path):
    """Walk the RIFF chunks and make sure the data chunk is complete.

    Parameters
    ----------
    path : str
        WAV file

    Returns
    -------
    data_size : int
        Declared size of the data chunk in bytes
    """
    file_size = os.path.getsize(path)
    with open(path, 'rb') as fid:
        header = fid.read(12)
        if len(header) < 12 or header[:4] != b'RIFF' or header[8:12] != b'WAVE':
            raise UnsupportedFormatError('{} is not a RIFF/WAVE file'.format(path))
        while True:
            chunk = fid.read(8)
            if len(chunk) < 8:
                raise TruncatedAudioError('{}: no complete data chunk found'.format(path))
            chunk_id, size = struct.unpack('<4sI', chunk)
            if chunk_id == b'data':
                available = file_size - fid.tell()
                if size > available:
                    raise TruncatedAudioError(('{}: data chunk declares {} bytes but only {} '
                                               'are present').format(path, size, available))
                return size
            fid.seek(size + (size & 1), os.SEEK_CUR)


def read_wav(path):
    """Decode a 16-bit PCM WAV file into a mono AudioSignal.

    Parameters
    ----------
    path : str
        WAV file

    Returns
    -------
    signal : AudioSignal
        Samples scaled by 1/32768; stereo averaged to mono
    """
    if not os.path.isfile(path):
        raise FileNotFoundError('ERROR: Input file {} does not exist'.format(path))

    check_data_chunk(path)

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', wavfile.WavFileWarning)
        try:
            sample_rate, data = wavfile.read(path)
        except ValueError as err:
            raise UnsupportedFormatError('{}: {}'.format(path, err)) from err

    if data.dtype != np.int16:
        raise UnsupportedFormatError(('{}: only 16-bit signed PCM is supported, '
                                      'found {} samples').format(path, data.dtype))

    if data.ndim == 2:
        if data.shape[1] > 2:
            raise UnsupportedFormatError('{}: {} channels found, only mono and stereo are supported'
                                         .format(path, data.shape[1]))
        samples = data.astype(np.float64).mean(axis=1) / PCM_SCALE
    else:
        samples = data.astype(np.float64) / PCM_SCALE

    logger.debug('Read {}: {} samples at {} Hz'.format(path, len(samples), sample_rate))
    return AudioSignal(samples, sample_rate)


def quantize(samples):
    """Convert amplitudes to 16-bit sample words"""
    words = np.clip(np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE), -32768, 32767)
    return words.astype(np.int16)


def write_wav(path, signal):
    """Write an AudioSignal as a mono 16-bit PCM WAV file.

    Parameters
    ----------
    path : str
        Output file

    signal : AudioSignal
        Signal to write
    """
    makepath4file(path)
    wavfile.write(path, signal.sample_rate, quantize(signal.samples))
