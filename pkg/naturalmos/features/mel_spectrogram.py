#! /usr/bin/env python

"""Mel-spectrogram front end and CNN input segmentation.

Use
---
    ::

        from naturalmos.audio_io.wav_io import read_wav
        from naturalmos.features import mel_spectrogram as mel
        signal = read_wav('stimulus.wav')
        frames = mel.compute_mel_spectrogram(signal)
        sequence = mel.segment_spectrogram(frames)
        print(sequence.segments.shape)   # (N, 1, 48, 15)

Notes
-----
    Algorithm:

    The waveform is cut into Hann windowed frames of 20 ms with a hop of
    10 ms. Window and hop are expressed in milliseconds, so their length
    in samples follows the sample rate, while the FFT size is fixed at
    4048 points. Frames lie fully inside the signal (no centering), so
    T = floor((L - win) / hop) + 1.

    The one-sided power spectrum is weighted by 48 triangular filters of
    unit peak whose centers are equally spaced on the HTK mel scale
    m(f) = 2595 * log10(1 + f / 700) between 0 Hz and 8 kHz. Band powers
    are converted to dB with a floor of 1e-12. There is no level
    normalization: absolute level is information for the model.

    The T x 48 result is sliced into overlapping 48 x 15 segments with a
    hop of one frame. Sequences shorter than 15 frames are padded on the
    right with the floor value.
"""

from dataclasses import dataclass, fields
from functools import lru_cache
import logging
from multiprocessing import Pool

from astropy.table import Table
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
import scipy.fft
import scipy.signal

from naturalmos.audio_io.wav_io import read_wav
from naturalmos.utils.constants import (FFT_SIZE, FMAX_HZ, HOP_MS, MIN_SAMPLE_RATE, N_MELS, POWER_FLOOR,
                                        SEGMENT_FRAMES, WINDOW_MS)
from naturalmos.utils.exceptions import DataError
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.features.mel_spectrogram')

DB_FLOOR = 10. * np.log10(POWER_FLOOR)


@dataclass(frozen=True)
class FeatureConfig:
    fft_size: int = FFT_SIZE
    n_mels: int = N_MELS
    fmax_hz: float = FMAX_HZ
    window_ms: float = WINDOW_MS
    hop_ms: float = HOP_MS
    segment_frames: int = SEGMENT_FRAMES

    @classmethod
    def from_config(cls, params):
        """Build from a mapping holding (at least) the feature keys"""
        return cls(**{item.name: params[item.name] for item in fields(cls) if item.name in params})

    def __post_init__(self):
        if self.fft_size < 2 or self.n_mels < 1 or self.segment_frames < 1:
            raise ValueError('fft_size, n_mels and segment_frames must be positive')
        if self.window_ms <= 0 or self.hop_ms <= 0 or self.fmax_hz <= 0:
            raise ValueError('window_ms, hop_ms and fmax_hz must be positive')

    def window_length(self, sample_rate):
        return int(np.floor(self.window_ms * sample_rate / 1000. + 0.5))

    def hop_length(self, sample_rate):
        return max(1, int(np.floor(self.hop_ms * sample_rate / 1000. + 0.5)))


@dataclass(eq=False)
class MelSpectrogram:
    frames: np.ndarray
    frame_hop_s: float
    source_sample_rate: int

    @property
    def n_frames(self):
        return self.frames.shape[0]


@dataclass(eq=False)
class SegmentSequence:
    segments: np.ndarray

    def __len__(self):
        return self.segments.shape[0]


def build_mel_filterbank(sample_rate, config=None):
    """Triangular mel filterbank on the one-sided FFT bins.

    Parameters
    ----------
    sample_rate : int
        Sampling rate in Hz. Must represent fmax (2 * fmax <= rate).

    config : FeatureConfig
        Front-end parameters; defaults give 48 filters up to 8 kHz on a
        4048-point FFT

    Returns
    -------
    filterbank : numpy.ndarray
        n_mels x (fft_size // 2 + 1) read-only matrix
    """
    config = config or FeatureConfig()
    return _mel_filterbank(int(sample_rate), config.fft_size, config.n_mels, float(config.fmax_hz))


@lru_cache(maxsize=16)
def _mel_filterbank(sample_rate, fft_size, n_mels, fmax_hz):
    if sample_rate < MIN_SAMPLE_RATE or sample_rate < 2 * fmax_hz:
        raise ValueError(('Sample rate {} Hz cannot represent the {} Hz maximum mel frequency '
                          '(minimum {} Hz)').format(sample_rate, fmax_hz, max(MIN_SAMPLE_RATE, 2 * fmax_hz)))

    bin_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    mel_points = np.linspace(hz2mel(0.), hz2mel(fmax_hz), n_mels + 2)
    hz_points = mel2hz(mel_points)

    left = hz_points[:-2, np.newaxis]
    center = hz_points[1:-1, np.newaxis]
    right = hz_points[2:, np.newaxis]
    rising = (bin_freqs - left) / (center - left)
    falling = (right - bin_freqs) / (right - center)
    filterbank = np.maximum(0., np.minimum(rising, falling))
    filterbank.flags.writeable = False
    return filterbank


def compute_mel_spectrogram(signal, config=None):
    """Log-power mel spectrogram of a signal.

    Parameters
    ----------
    signal : AudioSignal
        Input waveform

    config : FeatureConfig
        Front-end parameters

    Returns
    -------
    mel : MelSpectrogram
        T x n_mels matrix of 10 * log10(max(power, 1e-12))
    """
    config = config or FeatureConfig()
    power = stft_power(signal, config)
    filterbank = build_mel_filterbank(signal.sample_rate, config)
    band_power = power @ filterbank.T
    frames = 10. * np.log10(np.maximum(band_power, POWER_FLOOR))
    hop_s = config.hop_length(signal.sample_rate) / signal.sample_rate
    return MelSpectrogram(frames, hop_s, signal.sample_rate)


def extract_segments(paths, config=None, nproc=1):
    """Compute the segment sequence of several files.

    Parameters
    ----------
    paths : list
        WAV files

    config : FeatureConfig
        Front-end parameters

    nproc : int
        Number of worker processes. The output order always follows
        ``paths``.

    Returns
    -------
    segments : list
        One N x 1 x n_mels x segment_frames array per file
    """
    config = config or FeatureConfig()
    paths = list(paths)
    if nproc > 1 and len(paths) > 1:
        logger.info('Extracting features of {} files with {} processes'.format(len(paths), nproc))
        with Pool(nproc) as pool:
            return pool.starmap(file_segments, [(path, config) for path in paths])
    return [file_segments(path, config) for path in paths]


def file_segments(path, config=None):
    """Read one file and return its segment array"""
    config = config or FeatureConfig()
    signal = read_wav(path)
    try:
        mel = compute_mel_spectrogram(signal, config)
    except ValueError as err:
        raise DataError('{}: {}'.format(path, err)) from err
    return segment_spectrogram(mel, config.segment_frames).segments


def hz2mel(hz):
    """HTK mel scale"""
    return 2595. * np.log10(1. + np.asarray(hz, dtype=np.float64) / 700.)


def mel2hz(mel):
    return 700. * (10. ** (np.asarray(mel, dtype=np.float64) / 2595.) - 1.)


def segment_spectrogram(mel, segment_frames=SEGMENT_FRAMES):
    """Slice a mel spectrogram into overlapping CNN input segments.

    Parameters
    ----------
    mel : MelSpectrogram
        T x n_mels frames

    segment_frames : int
        Frames per segment

    Returns
    -------
    sequence : SegmentSequence
        N x 1 x n_mels x segment_frames segments, N = max(1, T - segment_frames + 1)
    """
    frames = mel.frames
    if frames.shape[0] < segment_frames:
        padding = np.full((segment_frames - frames.shape[0], frames.shape[1]), DB_FLOOR)
        frames = np.concatenate([frames, padding], axis=0)
    windows = sliding_window_view(frames, segment_frames, axis=0)
    return SegmentSequence(np.ascontiguousarray(windows[:, np.newaxis, :, :]))


def stft_power(signal, config=None):
    """One-sided power spectrogram with a fixed FFT size.

    Parameters
    ----------
    signal : AudioSignal
        Input waveform

    config : FeatureConfig
        Front-end parameters

    Returns
    -------
    power : numpy.ndarray
        T x (fft_size // 2 + 1) array of |X|^2
    """
    config = config or FeatureConfig()
    sample_rate = signal.sample_rate
    win = config.window_length(sample_rate)
    hop = config.hop_length(sample_rate)
    if win > config.fft_size:
        raise ValueError(('Sample rate {} Hz gives a {} sample window, longer than the FFT size {}'
                          .format(sample_rate, win, config.fft_size)))
    if len(signal.samples) < win:
        raise ValueError('Signal of {} samples is shorter than one {} sample window'
                         .format(len(signal.samples), win))

    frames = sliding_window_view(signal.samples, win)[::hop]
    window = scipy.signal.get_window('hann', win)
    spectrum = scipy.fft.rfft(frames * window, n=config.fft_size, axis=1)
    return spectrum.real ** 2 + spectrum.imag ** 2


def write_mel_csv(mel, path):
    """Dump a mel spectrogram as CSV, one row per frame"""
    names = ['mel_{:02d}'.format(band) for band in range(mel.frames.shape[1])]
    table = Table(mel.frames, names=names)
    for name in names:
        table[name].format = '.6f'
    makepath4file(path)
    table.write(path, format='ascii.csv', overwrite=True)
    return path
