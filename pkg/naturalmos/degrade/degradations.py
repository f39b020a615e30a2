#! /usr/bin/env python

"""Parameterized signal degradations with a severity scale.

Every degradation kind has one severity in [0, 1] derived from its
distortion parameter, 0 being the identity:

    ==============  ==================================  =====================
    kind            parameter                           severity
    ==============  ==================================  =====================
    white_noise     snr_db                              (40 - snr_db) / 40
    amplitude_clip  threshold                           1 - threshold
    time_clip       fraction of 20 ms windows zeroed    fraction
    packet_loss     loss_rate of 20 ms frames           loss_rate
    band_filter     low_hz, high_hz                     1 - width / Nyquist
    ==============  ==================================  =====================

The white noise severity is clipped to [0, 1]; severity 0 is generated
as snr_db = 100. A chain of degradations applied one after the other has
severity 1 - prod(1 - s_i).

The severity stands in for a reference-based quality measurement: the
proxy MOS of a degraded file is 4.8 - 3.8 * severity.

Use
---
    ::

        from naturalmos.degrade import degradations
        rng = make_rng(1234, 'degrade', 0)
        spec = degradations.spec_from_severity('time_clip', 0.3, rng, 16000)
        degraded = degradations.apply_degradation(signal, spec, rng)
        mos = degradations.severity_to_proxy_mos(spec)
"""

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.signal

from naturalmos.utils.constants import (CLIP_WINDOW_MS, FIR_TAPS, MAX_TIME_CLIP_FRACTION, MIN_BAND_WIDTH_HZ,
                                        MIN_CLIP_THRESHOLD, NOISE_SNR_RANGE_DB, NOISELESS_SNR_DB, PACKET_MS,
                                        PROXY_MOS_MAX, PROXY_MOS_MIN, TELEPHONE_BAND_HZ)
from naturalmos.utils.definitions import DEGRADATION_KINDS, DEGRADATION_PARAMS

logger = logging.getLogger('naturalmos.degrade.degradations')

CHAIN = 'chain'


@dataclass(frozen=True, eq=False)
class DegradationSpec:
    """One degradation, or a chain of them.

    Parameters
    ----------
    kind : str
        One of DEGRADATION_KINDS, or 'chain'

    params : dict
        Kind-specific parameters (empty for a chain)

    severity : float
        Severity in [0, 1]

    steps : tuple
        DegradationSpec steps of a chain, applied in order
    """
    kind: str
    params: dict = field(default_factory=dict)
    severity: float = 0.
    steps: tuple = ()

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS + [CHAIN]:
            raise ValueError('unknown degradation kind {!r}'.format(self.kind))
        if not 0. <= self.severity <= 1.:
            raise ValueError('severity must lie in [0, 1], got {}'.format(self.severity))
        if self.kind == CHAIN:
            if not self.steps or any(step.kind == CHAIN for step in self.steps):
                raise ValueError('a chain needs one or more single degradation steps')
        elif sorted(self.params) != sorted(DEGRADATION_PARAMS[self.kind]):
            raise ValueError('{} needs parameters {}, got {}'.format(self.kind, DEGRADATION_PARAMS[self.kind],
                                                                      sorted(self.params)))

    @property
    def system_id(self):
        """Label used as system_id in corpus manifests"""
        if self.kind == CHAIN:
            return '+'.join(step.kind for step in self.steps)
        return self.kind


def signal_power(signal):
    return float(np.mean(signal.samples ** 2)) if len(signal.samples) else 0.


def add_white_noise(signal, snr_db, rng, reference_power=None):
    """Add Gaussian noise at a given signal-to-noise ratio.

    Parameters
    ----------
    signal : AudioSignal
        Input; must not be silent unless ``reference_power`` is given

    snr_db : float
        Signal to noise ratio in dB

    rng : numpy.random.Generator
        Noise source

    reference_power : float
        Power the SNR refers to; defaults to the power of ``signal``.
        Chains pass the power of the signal entering the chain.

    Returns
    -------
    signal : AudioSignal
        Noisy signal clipped to [-1, 1]
    """
    power = signal_power(signal) if reference_power is None else reference_power
    if power <= 0:
        raise ValueError('cannot set an SNR on a silent signal')
    noise_power = power * 10. ** (-snr_db / 10.)
    noise = rng.standard_normal(len(signal.samples)) * np.sqrt(noise_power)
    return signal.with_samples(np.clip(signal.samples + noise, -1., 1.))


def amplitude_clip(signal, threshold):
    """Hard-limit samples to [-threshold, threshold]"""
    if threshold <= 0:
        raise ValueError('clipping threshold must be positive, got {}'.format(threshold))
    return signal.with_samples(np.clip(signal.samples, -threshold, threshold))


def window_mask(n_samples, window, selected):
    """Sample mask that is True inside the selected windows"""
    return np.repeat(selected, window)[:n_samples]


def time_clip(signal, fraction, rng, window_ms=CLIP_WINDOW_MS):
    """Zero randomly chosen 20 ms windows.

    The number of windows is floor(fraction * L / window); they are drawn
    without replacement from the window grid, so the signal length is
    preserved and at most ``fraction`` of it is zeroed.
    """
    if not 0. <= fraction < 1.:
        raise ValueError('time clip fraction must satisfy 0 <= fraction < 1, got {}'.format(fraction))
    n_samples = len(signal.samples)
    window = max(1, int(round(window_ms * signal.sample_rate / 1000.)))
    n_windows = -(-n_samples // window)
    # tolerance keeps exact products such as 0.3 * 16000 / 320 at 15
    count = min(n_windows - 1, int(np.floor(fraction * n_samples / window + 1e-9)))
    if count <= 0:
        return signal.with_samples(signal.samples.copy())
    selected = np.zeros(n_windows, dtype=bool)
    selected[rng.choice(n_windows, size=count, replace=False)] = True
    return signal.with_samples(np.where(window_mask(n_samples, window, selected), 0., signal.samples))


def packet_loss_zero_fill(signal, loss_rate, rng, frame_ms=PACKET_MS):
    """Drop each 20 ms frame with probability ``loss_rate`` and fill it with zeros"""
    if not 0. <= loss_rate <= 1.:
        raise ValueError('loss rate must lie in [0, 1], got {}'.format(loss_rate))
    n_samples = len(signal.samples)
    frame = max(1, int(round(frame_ms * signal.sample_rate / 1000.)))
    n_frames = -(-n_samples // frame)
    dropped = rng.random(n_frames) < loss_rate
    return signal.with_samples(np.where(window_mask(n_samples, frame, dropped), 0., signal.samples))


def band_filter(signal, low_hz, high_hz, numtaps=FIR_TAPS):
    """Linear-phase FIR band limitation.

    An 801 tap Hann windowed-sinc filter is applied forward and the
    output is shifted back by the group delay of 400 samples. A low edge
    of 0 gives a low-pass, a high edge at Nyquist a high-pass and the
    full band returns an unchanged copy.

    Parameters
    ----------
    signal : AudioSignal
        Input

    low_hz, high_hz : float
        Pass band edges, 0 <= low_hz < high_hz <= sample_rate / 2

    Returns
    -------
    signal : AudioSignal
        Filtered signal of the same length, clipped to [-1, 1]
    """
    nyquist = signal.sample_rate / 2.
    if not 0. <= low_hz < high_hz <= nyquist:
        raise ValueError('invalid band edges ({}, {}) Hz for a Nyquist frequency of {} Hz'.format(
            low_hz, high_hz, nyquist))
    if low_hz == 0. and high_hz == nyquist:
        return signal.with_samples(signal.samples.copy())

    if low_hz == 0.:
        taps = scipy.signal.firwin(numtaps, high_hz, window='hann', fs=signal.sample_rate)
    elif high_hz == nyquist:
        taps = scipy.signal.firwin(numtaps, low_hz, window='hann', pass_zero=False, fs=signal.sample_rate)
    else:
        taps = scipy.signal.firwin(numtaps, [low_hz, high_hz], window='hann', pass_zero=False,
                                   fs=signal.sample_rate)
    delay = (numtaps - 1) // 2
    filtered = scipy.signal.fftconvolve(signal.samples, taps, mode='full')[delay:delay + len(signal.samples)]
    return signal.with_samples(np.clip(filtered, -1., 1.))


def telephone_band(signal):
    """Narrow-band telephone channel, 300 - 3400 Hz"""
    return band_filter(signal, *TELEPHONE_BAND_HZ)


def chain_severity(severities):
    """Severity of degradations applied one after the other"""
    return float(np.clip(1. - np.prod([1. - s for s in severities]), 0., 1.))


def degradation_severity(kind, params, sample_rate=None):
    """Severity of a single degradation from its parameters.

    Parameters
    ----------
    kind : str
        Degradation kind

    params : dict
        Its parameters

    sample_rate : int
        Needed for band_filter, whose severity is relative to Nyquist

    Returns
    -------
    severity : float
        In [0, 1]
    """
    if kind == 'white_noise':
        severity = (NOISE_SNR_RANGE_DB - params['snr_db']) / NOISE_SNR_RANGE_DB
    elif kind == 'amplitude_clip':
        severity = 1. - params['threshold']
    elif kind == 'time_clip':
        severity = params['fraction']
    elif kind == 'packet_loss':
        severity = params['loss_rate']
    elif kind == 'band_filter':
        if sample_rate is None:
            raise ValueError('band_filter severity needs the sample rate')
        severity = 1. - (params['high_hz'] - params['low_hz']) / (sample_rate / 2.)
    else:
        raise ValueError('unknown degradation kind {!r}'.format(kind))
    return float(np.clip(severity, 0., 1.))


def spec_from_severity(kind, severity, rng, sample_rate):
    """Parameterize a degradation for a target severity.

    Parameters are floored at severity 1 (threshold >= 0.01, fraction
    <= 0.95, band width >= 50 Hz); the recorded severity is the requested
    one. The band of band_filter is placed at a random low edge.

    Returns
    -------
    spec : DegradationSpec
    """
    if not 0. <= severity <= 1.:
        raise ValueError('severity must lie in [0, 1], got {}'.format(severity))
    if kind == 'white_noise':
        snr_db = NOISELESS_SNR_DB if severity == 0. else NOISE_SNR_RANGE_DB * (1. - severity)
        params = {'snr_db': snr_db}
    elif kind == 'amplitude_clip':
        params = {'threshold': max(1. - severity, MIN_CLIP_THRESHOLD)}
    elif kind == 'time_clip':
        params = {'fraction': min(severity, MAX_TIME_CLIP_FRACTION)}
    elif kind == 'packet_loss':
        params = {'loss_rate': severity}
    elif kind == 'band_filter':
        nyquist = sample_rate / 2.
        width = max((1. - severity) * nyquist, MIN_BAND_WIDTH_HZ)
        low_hz = float(rng.uniform(0., nyquist - width))
        params = {'low_hz': low_hz, 'high_hz': min(low_hz + width, nyquist)}
    else:
        raise ValueError('unknown degradation kind {!r}'.format(kind))
    return DegradationSpec(kind, params, float(severity))


def sample_degradation_spec(rng, sample_rate, chain_fraction=0.25):
    """Draw a random degradation condition.

    The kind is uniform over the single kinds and the severity uniform in
    [0, 1]. With probability ``chain_fraction`` a chain of two different
    kinds is drawn instead.
    """
    if rng.random() < chain_fraction:
        kinds = rng.choice(len(DEGRADATION_KINDS), size=2, replace=False)
        steps = tuple(spec_from_severity(DEGRADATION_KINDS[index], float(rng.uniform(0., 1.)), rng, sample_rate)
                      for index in kinds)
        return DegradationSpec(CHAIN, {}, chain_severity([step.severity for step in steps]), steps)
    kind = DEGRADATION_KINDS[rng.integers(len(DEGRADATION_KINDS))]
    return spec_from_severity(kind, float(rng.uniform(0., 1.)), rng, sample_rate)


def apply_degradation(signal, spec, rng, reference_power=None):
    """Apply a DegradationSpec (single or chain) to a signal.

    Noise in a chain is scaled to the power of the chain's input, so a
    step that silences the signal is followed by noise at the requested
    SNR against the original signal.
    """
    if spec.kind == CHAIN:
        if reference_power is None:
            reference_power = signal_power(signal)
        for step in spec.steps:
            signal = apply_degradation(signal, step, rng, reference_power=reference_power)
        return signal
    params = spec.params
    if spec.kind == 'white_noise':
        return add_white_noise(signal, params['snr_db'], rng, reference_power=reference_power)
    if spec.kind == 'amplitude_clip':
        return amplitude_clip(signal, params['threshold'])
    if spec.kind == 'time_clip':
        return time_clip(signal, params['fraction'], rng)
    if spec.kind == 'packet_loss':
        return packet_loss_zero_fill(signal, params['loss_rate'], rng)
    return band_filter(signal, params['low_hz'], params['high_hz'])


def severity_to_proxy_mos(spec):
    """Proxy quality label of a degradation.

    Parameters
    ----------
    spec : DegradationSpec or float
        Degradation or bare severity in [0, 1]

    Returns
    -------
    mos : float
        4.8 - 3.8 * severity, in [1.0, 4.8]
    """
    severity = spec.severity if isinstance(spec, DegradationSpec) else float(spec)
    if not 0. <= severity <= 1.:
        raise ValueError('severity must lie in [0, 1], got {}'.format(severity))
    return PROXY_MOS_MAX - (PROXY_MOS_MAX - PROXY_MOS_MIN) * severity
