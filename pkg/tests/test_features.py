#! /usr/bin/env python

"""Tests for mel_spectrogram.py"""

import os

from astropy.io import ascii
import numpy as np
import pytest

from naturalmos.audio_io.wav_io import AudioSignal
from naturalmos.features.mel_spectrogram import (DB_FLOOR, FeatureConfig, MelSpectrogram, build_mel_filterbank,
                                                 compute_mel_spectrogram, extract_segments, hz2mel, mel2hz,
                                                 segment_spectrogram, stft_power, write_mel_csv)

from test_data.toy_data import make_toy_naturalness_set, tone


def noise_signal(seconds=1., sample_rate=16000, level=0.3, seed=0):
    rng = np.random.default_rng(seed)
    samples = np.clip(level * rng.standard_normal(int(seconds * sample_rate)), -1., 1.)
    return AudioSignal(samples, sample_rate)


def test_stft_framing():
    """One second at 16 kHz gives 99 frames of 2025 bins
    """
    power = stft_power(noise_signal())
    assert power.shape == (99, 2025)
    assert np.all(power >= 0.)


def test_stft_tone_against_dft():
    """A 1 kHz tone concentrates its energy around 1 kHz, and the first
    frame matches a direct DFT of the windowed samples
    """
    sample_rate = 16000
    signal = AudioSignal(tone(1000., 1., amplitude=0.5), sample_rate)
    power = stft_power(signal)

    # Direct DFT of frame 0 on the 4048 point grid
    win = 320
    n = np.arange(win)
    window = 0.5 - 0.5 * np.cos(2. * np.pi * n / win)
    frame = signal.samples[:win] * window
    k = np.arange(2025)[:, np.newaxis]
    dft = np.sum(frame * np.exp(-2j * np.pi * k * n / 4048.), axis=1)
    assert np.allclose(power[0], np.abs(dft) ** 2, rtol=1e-9, atol=1e-12)

    # +-3 bins of the 50 Hz frequency resolution of a 20 ms window
    freqs = np.arange(2025) * sample_rate / 4048.
    near = np.abs(freqs - 1000.) <= 3 * sample_rate / win
    fraction = power[:, near].sum(axis=1) / power.sum(axis=1)
    assert np.all(fraction >= 0.9)


def test_stft_preconditions():
    """Signals shorter than a window and windows longer than the FFT
    size are rejected
    """
    with pytest.raises(ValueError):
        stft_power(AudioSignal(np.zeros(100), 16000))
    with pytest.raises(ValueError):
        stft_power(AudioSignal(np.zeros(10000), 250000))


def test_mel_scale():
    """HTK mel scale and its inverse
    """
    assert np.isclose(hz2mel(700.), 2595. * np.log10(2.))
    assert np.allclose(mel2hz(hz2mel([0., 440., 8000.])), [0., 440., 8000.])


def test_filterbank():
    """48 unit peak filters with increasing centers covering (0, 8 kHz)
    """
    filterbank = build_mel_filterbank(16000)
    assert filterbank.shape == (48, 2025)
    assert np.all(filterbank >= 0.)
    assert np.all(filterbank.sum(axis=1) > 0.)
    assert np.all(np.diff(np.argmax(filterbank, axis=1)) > 0)
    assert np.all(filterbank.max(axis=1) <= 1.)

    freqs = np.arange(2025) * 16000 / 4048.
    covered = (freqs > 0.) & (freqs < 8000.)
    assert np.all(filterbank[:, covered].sum(axis=0) > 0.)
    assert np.all(filterbank[:, 0] == 0.)

    filterbank = build_mel_filterbank(48000)
    above = np.arange(2025) * 48000 / 4048. >= 8000.
    assert np.all(filterbank[:, above] == 0.)
    bin_8050 = int(round(8050. * 4048 / 48000))
    assert np.all(filterbank[:, bin_8050] == 0.)

    with pytest.raises(ValueError):
        build_mel_filterbank(8000)


def test_mel_silence_and_level():
    """Silence sits at the floor; halving the waveform lowers every value
    by 10 * log10(0.25)
    """
    mel = compute_mel_spectrogram(AudioSignal(np.zeros(16000), 16000))
    assert mel.frames.shape == (99, 48)
    assert np.all(mel.frames == DB_FLOOR)
    assert DB_FLOOR == -120.
    assert mel.frame_hop_s == 0.01

    signal = noise_signal()
    loud = compute_mel_spectrogram(signal)
    quiet = compute_mel_spectrogram(signal.with_samples(0.5 * signal.samples))
    assert np.allclose(quiet.frames - loud.frames, 10. * np.log10(0.25), atol=1e-9)


def test_mel_determinism_and_noise():
    """Identical input gives identical output; added noise never lowers
    the mean log power
    """
    signal = AudioSignal(tone(440., 0.5), 16000)
    first = compute_mel_spectrogram(signal)
    second = compute_mel_spectrogram(AudioSignal(signal.samples.copy(), 16000))
    assert np.array_equal(first.frames, second.frames)

    noisy = signal.samples + noise_signal(0.5, level=0.05, seed=1).samples
    noisy = compute_mel_spectrogram(signal.with_samples(np.clip(noisy, -1., 1.)))
    assert noisy.frames.mean() > first.frames.mean()


def test_sample_rate_adaptivity():
    """The same tone at 16 and 48 kHz peaks in the same mel band
    """
    low = compute_mel_spectrogram(AudioSignal(tone(1000., 0.5, sample_rate=16000), 16000))
    high = compute_mel_spectrogram(AudioSignal(tone(1000., 0.5, sample_rate=48000), 48000))
    assert low.frames.shape == high.frames.shape
    assert np.array_equal(np.argmax(low.frames, axis=1), np.argmax(high.frames, axis=1))


def test_segments():
    """N = T - 14 overlapping segments; short inputs are padded
    """
    rng = np.random.default_rng(0)
    mel = MelSpectrogram(rng.standard_normal((99, 48)), 0.01, 16000)
    sequence = segment_spectrogram(mel)
    assert sequence.segments.shape == (85, 1, 48, 15)
    assert len(sequence) == 85
    assert np.array_equal(sequence.segments[3, 0], mel.frames[3:18].T)
    assert np.array_equal(sequence.segments[:-1, :, :, 1:], sequence.segments[1:, :, :, :14])

    assert len(segment_spectrogram(MelSpectrogram(mel.frames[:15], 0.01, 16000))) == 1

    short = segment_spectrogram(MelSpectrogram(mel.frames[:10], 0.01, 16000))
    assert short.segments.shape == (1, 1, 48, 15)
    assert np.array_equal(short.segments[0, 0, :, :10], mel.frames[:10].T)
    assert np.all(short.segments[0, 0, :, 10:] == DB_FLOOR)


def test_feature_config():
    """Configuration keys select the front-end parameters
    """
    config = FeatureConfig.from_config({'n_mels': 40, 'hop_ms': 5., 'lr': 0.1})
    assert config.n_mels == 40
    assert config.hop_length(16000) == 80
    assert config.window_length(16000) == 320
    assert FeatureConfig().window_length(22050) == 441
    with pytest.raises(ValueError):
        FeatureConfig(n_mels=0)

    mel = compute_mel_spectrogram(noise_signal(), config)
    assert mel.frames.shape == (197, 40)


def test_extract_segments(tmp_path):
    """Parallel extraction keeps the file order and the values
    """
    make_toy_naturalness_set(str(tmp_path), n_files=4, duration=0.25)
    paths = [os.path.join(str(tmp_path), 'toy_{:03d}.wav'.format(index)) for index in range(4)]

    serial = extract_segments(paths)
    parallel = extract_segments(paths, nproc=2)
    assert len(serial) == 4
    assert serial[0].shape == (10, 1, 48, 15)
    for first, second in zip(serial, parallel):
        assert np.array_equal(first, second)


def test_write_mel_csv(tmp_path):
    """The CSV dump has one row per frame and one column per band
    """
    mel = compute_mel_spectrogram(noise_signal(0.2))
    path = write_mel_csv(mel, str(tmp_path / 'dump' / 'mel.csv'))
    table = ascii.read(path, format='csv')
    assert len(table) == mel.n_frames
    assert table.colnames[0] == 'mel_00'
    assert table.colnames[-1] == 'mel_47'
    assert np.allclose(table['mel_05'], mel.frames[:, 5], atol=1e-6)
