#! /usr/bin/env python

"""This file contains constants that are shared across multiple
naturalmos modules: front-end framing values, model sizes, training
defaults and the types of the configuration parameters.
"""

import os

# Front end
FFT_SIZE = 4048
N_MELS = 48
FMAX_HZ = 8000.
WINDOW_MS = 20.
HOP_MS = 10.
SEGMENT_FRAMES = 15
MIN_SAMPLE_RATE = 16000
POWER_FLOOR = 1e-12
DB_FLOOR = -120.

# Model
CONV_FILTERS = [16, 32, 64, 64, 64, 64]
SEGMENT_FEATURES = 20
LSTM_HIDDEN = 128
DROPOUT = 0.2
BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1

# Optimizer
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Degradations
PROXY_MOS_MAX = 4.8
PROXY_MOS_MIN = 1.0
NOISE_SNR_RANGE_DB = 40.
NOISELESS_SNR_DB = 100.
CLIP_WINDOW_MS = 20.
PACKET_MS = 20.
FIR_TAPS = 801
TELEPHONE_BAND_HZ = (300., 3400.)
MIN_CLIP_THRESHOLD = 0.01
MAX_TIME_CLIP_FRACTION = 0.95
MIN_BAND_WIDTH_HZ = 50.

# WAV
PCM_SCALE = 32768.

# Checkpoint
CHECKPOINT_MAGIC = b'NMOS'
CHECKPOINT_VERSION = 1

DEFAULT_SEED = 1234
SEED_ENV_VAR = 'NATURALMOS_SEED'
CONFIG_ENV_VAR = 'NATURALMOS_CONFIGFILE'

DEFAULT_REPORT_NAME = 'report.csv'

# Values come from the shipped naturalmos.cfg; this table types them
CONFIG_TYPES = {'lr': float,
                'pretrain_epochs': int,
                'finetune_max_epochs': int,
                'early_stop_patience': int,
                'batch_size': int,
                'runs': int,
                'seed': int,
                'dropout': float,
                'fft_size': int,
                'n_mels': int,
                'fmax_hz': float,
                'window_ms': float,
                'hop_ms': float,
                'segment_frames': int,
                'jobs': int,
                'clamp_output': bool,
                'conditions_per_file': int,
                'chain_fraction': float,
                'validation_percent': int}

DEFAULT_CONFIG_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'naturalmos.cfg')
