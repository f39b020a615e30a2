from naturalmos.features.mel_spectrogram import (DB_FLOOR, FeatureConfig, MelSpectrogram, SegmentSequence,
                                                 build_mel_filterbank, compute_mel_spectrogram,
                                                 extract_segments, segment_spectrogram, stft_power)
