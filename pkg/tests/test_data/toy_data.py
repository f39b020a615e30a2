#! /usr/bin/env python

"""Synthetic audio and manifests for the naturalmos tests.

The toy naturalness set is a tone with additive noise whose level falls
as the label rises, so that a model can learn the mapping from the
spectrogram alone. The clean references are harmonic tones with a slow
amplitude modulation, standing in for clean speech.
"""

import os

import numpy as np

from naturalmos.audio_io.manifest import ManifestEntry, write_manifest
from naturalmos.audio_io.wav_io import AudioSignal, write_wav

SAMPLE_RATE = 16000


def tone(frequency, duration, sample_rate=SAMPLE_RATE, amplitude=0.3):
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return amplitude * np.sin(2. * np.pi * frequency * t)


def toy_labels(n_files):
    """Labels spread evenly over [1, 5]"""
    return [1. + 4. * index / (n_files - 1) for index in range(n_files)]


def make_toy_naturalness_set(outdir, n_files=20, duration=0.25, seed=0, validation_files=0, n_systems=5,
                             dataset_id='toy', manifest_name='toy_manifest.csv'):
    """Write tone + noise WAV files and their manifest.

    Parameters
    ----------
    outdir : str
        Output directory

    n_files : int
        Number of files; labels are spread evenly over [1, 5]

    duration : float
        Seconds per file

    seed : int
        Seed of the noise

    validation_files : int
        Number of files, taken evenly across the label range, that get
        split=validation; all others get split=train

    Returns
    -------
    manifest_path : str
    """
    rng = np.random.default_rng(seed)
    labels = toy_labels(n_files)
    validation = set()
    if validation_files:
        validation = set(np.linspace(1, n_files - 2, validation_files).round().astype(int).tolist())

    entries = []
    for index, mos in enumerate(labels):
        noise_level = 0.02 + 0.3 * (5. - mos) / 4.
        samples = tone(440., duration) + noise_level * rng.standard_normal(int(round(duration * SAMPLE_RATE)))
        samples = np.clip(samples, -1., 1.)
        name = 'toy_{:03d}.wav'.format(index)
        write_wav(os.path.join(outdir, name), AudioSignal(samples, SAMPLE_RATE))
        entries.append(ManifestEntry(name, dataset_id, 'sys{}'.format(index % n_systems), mos, 10,
                                     'per_stimulus', 'validation' if index in validation else 'train'))
    return write_manifest(entries, os.path.join(outdir, manifest_name))


def make_clean_references(outdir, n_files=40, duration=0.2, seed=0):
    """Write harmonic, amplitude-modulated reference WAV files.

    Returns
    -------
    paths : list
        The written files, sorted by name
    """
    rng = np.random.default_rng(seed)
    n_samples = int(round(duration * SAMPLE_RATE))
    t = np.arange(n_samples) / SAMPLE_RATE
    paths = []
    for index in range(n_files):
        f0 = rng.uniform(100., 250.)
        samples = sum(np.sin(2. * np.pi * f0 * harmonic * t + rng.uniform(0., 2. * np.pi)) / harmonic
                      for harmonic in range(1, 6))
        envelope = 0.5 + 0.5 * np.sin(2. * np.pi * rng.uniform(3., 6.) * t)
        samples = 0.4 * envelope * samples / np.max(np.abs(samples))
        path = os.path.join(outdir, 'ref_{:03d}.wav'.format(index))
        write_wav(path, AudioSignal(samples, SAMPLE_RATE))
        paths.append(path)
    return paths
