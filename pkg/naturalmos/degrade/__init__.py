from naturalmos.degrade.degradations import (DegradationSpec, add_white_noise, amplitude_clip, apply_degradation,
                                             band_filter, degradation_severity, packet_loss_zero_fill,
                                             sample_degradation_spec, severity_to_proxy_mos, spec_from_severity,
                                             telephone_band, time_clip)
from naturalmos.degrade.pretrain_corpus import generate_pretrain_corpus
