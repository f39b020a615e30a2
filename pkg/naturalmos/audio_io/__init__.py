from naturalmos.audio_io.wav_io import AudioSignal, read_wav, write_wav
from naturalmos.audio_io.manifest import (DatasetManifest, ManifestEntry, load_manifest,
                                          manifest_summary, validate_manifest, write_manifest)
