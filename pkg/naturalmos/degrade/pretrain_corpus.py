#! /usr/bin/env python

"""Generate the degradation corpus used to pretrain the model.

Each clean reference file is degraded under several randomly drawn
conditions. The degraded files are written next to a manifest whose
MOS column holds the proxy label of each condition.

Use
---
    ::

        from naturalmos.degrade.pretrain_corpus import generate_pretrain_corpus
        manifest = generate_pretrain_corpus('clean/', 8, 1234, 'pretrain_data/')

Notes
-----
    The random stream of reference number i is keyed by (seed, 'degrade',
    i), so the corpus does not depend on the number of worker processes.

    Output files are named ``<reference stem>_c<condition>.wav``. All
    conditions of one reference go to the same split: the reference is
    assigned to validation when crc32(file name) % 100 is below
    ``validation_percent``.
"""

import logging
from multiprocessing import Pool
import os
import zlib

from naturalmos.audio_io.manifest import DatasetManifest, ManifestEntry, write_manifest
from naturalmos.audio_io.wav_io import read_wav, write_wav
from naturalmos.degrade.degradations import apply_degradation, sample_degradation_spec, severity_to_proxy_mos
from naturalmos.utils.exceptions import DataError
from naturalmos.utils.tools import make_rng, makepath

logger = logging.getLogger('naturalmos.degrade.pretrain_corpus')

PRETRAIN_DATASET_ID = 'pretrain'
MANIFEST_NAME = 'pretrain_manifest.csv'


def assign_split(name, validation_percent):
    """'validation' or 'train', from a hash of the file name"""
    return 'validation' if zlib.crc32(name.encode('utf-8')) % 100 < validation_percent else 'train'


def degrade_reference(index, path, conditions_per_file, seed, output_dir, chain_fraction=0.25,
                      validation_percent=10):
    """Write all degraded versions of one reference file.

    Returns
    -------
    entries : list
        ManifestEntry objects with paths relative to ``output_dir``
    """
    signal = read_wav(path)
    rng = make_rng(seed, 'degrade', index)
    name = os.path.basename(path)
    stem = os.path.splitext(name)[0]
    split = assign_split(name, validation_percent)

    entries = []
    for condition in range(conditions_per_file):
        spec = sample_degradation_spec(rng, signal.sample_rate, chain_fraction=chain_fraction)
        try:
            degraded = apply_degradation(signal, spec, rng)
        except ValueError as err:
            raise DataError('{}: cannot apply {}: {}'.format(path, spec.system_id, err)) from err
        filename = '{}_c{:02d}.wav'.format(stem, condition)
        try:
            write_wav(os.path.join(output_dir, filename), degraded)
        except OSError as err:
            raise DataError('Cannot write {}: {}'.format(os.path.join(output_dir, filename), err)) from err
        entries.append(ManifestEntry(filename, PRETRAIN_DATASET_ID, spec.system_id, severity_to_proxy_mos(spec),
                                     0, 'per_stimulus', split))
    logger.debug('Degraded {} under {} conditions'.format(path, conditions_per_file))
    return entries


def list_references(reference_dir):
    if not os.path.isdir(reference_dir):
        raise FileNotFoundError('ERROR: Reference directory {} does not exist'.format(reference_dir))
    names = sorted(name for name in os.listdir(reference_dir) if name.lower().endswith('.wav'))
    if not names:
        raise DataError('No WAV files found in reference directory {}'.format(reference_dir))
    return [os.path.join(reference_dir, name) for name in names]


def generate_pretrain_corpus(reference_dir, conditions_per_file, seed, output_dir, chain_fraction=0.25,
                             validation_percent=10, nproc=1, manifest_path=None):
    """Degrade every clean reference and write the corpus manifest.

    Parameters
    ----------
    reference_dir : str
        Directory of clean WAV files

    conditions_per_file : int
        Degraded versions per reference

    seed : int
        Corpus seed

    output_dir : str
        Directory receiving the degraded files

    chain_fraction : float
        Probability that a condition chains two degradations

    validation_percent : int
        Approximate share of references assigned to the validation split

    nproc : int
        Number of worker processes

    manifest_path : str
        Output manifest; defaults to pretrain_manifest.csv in
        ``output_dir``

    Returns
    -------
    manifest : DatasetManifest
    """
    if conditions_per_file < 1:
        raise ValueError('conditions_per_file must be positive, got {}'.format(conditions_per_file))
    references = list_references(reference_dir)
    try:
        makepath(output_dir)
    except (OSError, RuntimeError) as err:
        raise DataError('Cannot create output directory {}: {}'.format(output_dir, err)) from err

    arguments = [(index, path, conditions_per_file, seed, output_dir, chain_fraction, validation_percent)
                 for index, path in enumerate(references)]
    logger.info('Degrading {} reference files under {} conditions each'.format(len(references),
                                                                             conditions_per_file))
    if nproc > 1 and len(references) > 1:
        with Pool(nproc) as pool:
            results = pool.starmap(degrade_reference, arguments)
    else:
        results = [degrade_reference(*args) for args in arguments]
    entries = [entry for result in results for entry in result]

    if manifest_path is None:
        manifest_path = os.path.join(output_dir, MANIFEST_NAME)
    else:
        # Entry paths must stay valid relative to the manifest
        base = os.path.dirname(os.path.abspath(manifest_path))
        entries = [ManifestEntry(os.path.relpath(os.path.join(os.path.abspath(output_dir), entry.path), base),
                                 entry.dataset_id, entry.system_id, entry.mos, entry.num_votes,
                                 entry.label_level, entry.split) for entry in entries]
    write_manifest(entries, manifest_path)
    logger.info('Wrote {} corpus entries to {}'.format(len(entries), manifest_path))
    return DatasetManifest(entries, manifest_path)
