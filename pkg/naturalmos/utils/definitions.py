#! /usr/bin/env python

"""Enumerations and column definitions used throughout naturalmos."""

SPLITS = ['train', 'validation', 'test']

LABEL_LEVELS = ['per_stimulus', 'per_system']

MANIFEST_COLUMNS = ['path', 'dataset_id', 'system_id', 'mos', 'num_votes', 'label_level', 'split']

DEGRADATION_KINDS = ['white_noise', 'amplitude_clip', 'time_clip', 'packet_loss', 'band_filter']

# Parameter names for each single degradation kind
DEGRADATION_PARAMS = {'white_noise': ['snr_db'],
                      'amplitude_clip': ['threshold'],
                      'time_clip': ['fraction'],
                      'packet_loss': ['loss_rate'],
                      'band_filter': ['low_hz', 'high_hz']}

TRAINING_LOG_COLUMNS = ['run', 'epoch', 'train_loss', 'val_avg_pcc', 'seconds']

REPORT_COLUMNS = ['group', 'dataset', 'n_files', 'n_systems', 'stimuli_r', 'stimuli_rmse',
                  'system_r', 'system_rmse', 'minutes', 'files_per_system']

SUMMARY_KINDS = ['Average', 'Worst Case']

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
