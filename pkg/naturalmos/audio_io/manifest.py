#! /usr/bin/env python

"""Dataset manifests: labeled lists of audio files.

A manifest is a UTF-8 CSV file with the header
``path,dataset_id,system_id,mos,num_votes,label_level,split``. Each row
is one stimulus with its mean opinion score. ``label_level`` tells
whether the score was rated for the file itself (``per_stimulus``) or is
the score of its whole synthesis system (``per_system``).

Use
---
    ::

        from naturalmos.audio_io import manifest
        val = manifest.load_manifest('blizzard_val.csv', rescale=(0, 100))
        problems = manifest.validate_manifest(val)

Notes
-----
    Relative paths are resolved against the directory of the manifest
    file. Ratings collected on another scale are mapped linearly onto
    1-5 with ``rescale=(lo, hi)``.
"""

from collections import defaultdict
from dataclasses import dataclass, field
import logging
import os

from astropy.io import ascii
from astropy.io.ascii import InconsistentTableError
from astropy.table import Table
import numpy as np

from naturalmos.audio_io.wav_io import read_wav
from naturalmos.utils.definitions import LABEL_LEVELS, MANIFEST_COLUMNS, SPLITS
from naturalmos.utils.exceptions import DataError, ManifestError
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.audio_io.manifest')


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    dataset_id: str
    system_id: str
    mos: float
    num_votes: int
    label_level: str
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    source_path: str = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve_path(self, entry):
        """Absolute path of an entry, relative paths being taken from the
        manifest's own directory"""
        if os.path.isabs(entry.path) or self.source_path is None:
            return entry.path
        return os.path.join(os.path.dirname(os.path.abspath(self.source_path)), entry.path)

    def select(self, split=None, dataset_id=None):
        """Return a manifest restricted to one split and/or dataset"""
        entries = [entry for entry in self.entries
                   if (split is None or entry.split == split)
                   and (dataset_id is None or entry.dataset_id == dataset_id)]
        return DatasetManifest(entries, self.source_path)

    def dataset_ids(self):
        """Dataset identifiers in order of first appearance"""
        return list(dict.fromkeys(entry.dataset_id for entry in self.entries))


def format_mos(mos):
    """Text form of a MOS value with at least four decimals that reads
    back to the identical float"""
    text = '{:.4f}'.format(mos)
    if float(text) != mos:
        text = repr(float(mos))
    return text


def rescale_rating(rating, lo, hi):
    """Map a rating on the scale [lo, hi] linearly onto [1, 5]"""
    if not hi > lo:
        raise ValueError('Rating scale must satisfy lo < hi, got ({}, {})'.format(lo, hi))
    return 1. + 4. * (rating - lo) / (hi - lo)


def read_header(path):
    with open(path, 'r', encoding='utf-8') as csv_file:
        return csv_file.readline().strip().lstrip('\ufeff')


def load_manifest(path, rescale=None):
    """Read a manifest CSV file.

    Parameters
    ----------
    path : str
        Manifest CSV file

    rescale : tuple
        Optional (lo, hi) rating scale. Raw ratings x are mapped to
        1 + 4 * (x - lo) / (hi - lo)

    Returns
    -------
    manifest : DatasetManifest
    """
    if not os.path.isfile(path):
        raise FileNotFoundError('ERROR: Manifest {} does not exist'.format(path))

    header = read_header(path)
    if header != ','.join(MANIFEST_COLUMNS):
        raise ManifestError('{}: header must be "{}", got "{}"'.format(path, ','.join(MANIFEST_COLUMNS), header))

    with open(path, 'r', encoding='utf-8') as csv_file:
        n_lines = sum(1 for line in csv_file if line.strip())
    if n_lines < 2:
        return DatasetManifest([], path)

    converters = {column: [ascii.convert_numpy(str)] for column in MANIFEST_COLUMNS}
    try:
        table = ascii.read(path, format='csv', guess=False, fast_reader=False, converters=converters)
    except (InconsistentTableError, ValueError) as err:
        raise ManifestError('{}: malformed row: {}'.format(path, err)) from err

    entries = []
    seen = set()
    for index, row in enumerate(table):
        row_number = index + 1
        values = {}
        for column in MANIFEST_COLUMNS:
            value = row[column]
            values[column] = '' if np.ma.is_masked(value) else str(value).strip()
            if values[column] == '':
                raise ManifestError('{}: empty {} field'.format(path, column), row=row_number)

        try:
            mos = float(values['mos'])
        except ValueError:
            raise ManifestError('{}: mos "{}" is not a number'.format(path, values['mos']), row=row_number)
        try:
            num_votes = int(values['num_votes'])
        except ValueError:
            raise ManifestError('{}: num_votes "{}" is not an integer'.format(path, values['num_votes']),
                                row=row_number)
        if num_votes < 0:
            raise ManifestError('{}: num_votes must be non-negative'.format(path), row=row_number)
        if values['label_level'] not in LABEL_LEVELS:
            raise ManifestError('{}: unknown label_level "{}" (allowed: {})'.format(
                path, values['label_level'], ', '.join(LABEL_LEVELS)), row=row_number)
        if values['split'] not in SPLITS:
            raise ManifestError('{}: unknown split "{}" (allowed: {})'.format(
                path, values['split'], ', '.join(SPLITS)), row=row_number)

        if rescale is not None:
            mos = rescale_rating(mos, *rescale)
        if not (1. <= mos <= 5.) or not np.isfinite(mos):
            raise ManifestError('{}: mos {} outside [1, 5]'.format(path, mos), row=row_number)

        if values['path'] in seen:
            raise ManifestError('{}: duplicate path {}'.format(path, values['path']), row=row_number)
        seen.add(values['path'])

        entries.append(ManifestEntry(values['path'], values['dataset_id'], values['system_id'], mos,
                                     num_votes, values['label_level'], values['split']))

    logger.info('Loaded {} entries from {}'.format(len(entries), path))
    return DatasetManifest(entries, path)


def manifest_summary(manifest, durations=None):
    """Per-dataset counts used in evaluation reports.

    Parameters
    ----------
    manifest : DatasetManifest
        Manifest to summarize

    durations : dict
        Optional map from entry path to duration in seconds. Files are
        decoded when it is not given.

    Returns
    -------
    summary : dict
        dataset_id -> dict with n_files, n_systems, minutes and
        files_per_system
    """
    summary = {}
    for dataset_id in manifest.dataset_ids():
        entries = [entry for entry in manifest.entries if entry.dataset_id == dataset_id]
        systems = {entry.system_id for entry in entries}
        if durations is None:
            seconds = sum(read_wav(manifest.resolve_path(entry)).duration_seconds for entry in entries)
        else:
            seconds = sum(durations[entry.path] for entry in entries)
        summary[dataset_id] = {'n_files': len(entries),
                               'n_systems': len(systems),
                               'minutes': seconds / 60.,
                               'files_per_system': len(entries) / len(systems)}
    return summary


def validate_manifest(manifest, check_audio=True):
    """Collect every invariant violation of a manifest.

    Parameters
    ----------
    manifest : DatasetManifest
        Manifest to check

    check_audio : bool
        If True, every referenced file must exist and decode

    Returns
    -------
    violations : list
        Human readable descriptions; empty if the manifest is valid
    """
    violations = []
    seen = set()
    system_scores = defaultdict(set)
    for entry in manifest.entries:
        if entry.path in seen:
            violations.append('duplicate path {}'.format(entry.path))
        seen.add(entry.path)

        if not (1. <= entry.mos <= 5.):
            violations.append('{}: mos {} outside [1, 5]'.format(entry.path, entry.mos))
        if entry.num_votes < 0:
            violations.append('{}: negative num_votes {}'.format(entry.path, entry.num_votes))
        if entry.label_level not in LABEL_LEVELS:
            violations.append('{}: unknown label_level {}'.format(entry.path, entry.label_level))
        if entry.split not in SPLITS:
            violations.append('{}: unknown split {}'.format(entry.path, entry.split))
        if entry.label_level == 'per_system':
            system_scores[(entry.dataset_id, entry.system_id)].add(entry.mos)

        if check_audio:
            resolved = manifest.resolve_path(entry)
            if not os.path.isfile(resolved):
                violations.append('{}: file does not exist'.format(entry.path))
            else:
                try:
                    read_wav(resolved)
                except DataError as err:
                    violations.append('{}: cannot decode: {}'.format(entry.path, err))

    for (dataset_id, system_id), scores in sorted(system_scores.items()):
        if len(scores) > 1:
            violations.append(('per_system labels of system {} in dataset {} disagree: {}'
                               .format(system_id, dataset_id, sorted(scores))))
    return violations


def write_manifest(entries, path):
    """Write manifest entries as CSV.

    Parameters
    ----------
    entries : list or DatasetManifest
        ManifestEntry objects

    path : str
        Output CSV file

    Returns
    -------
    path : str
        The written file
    """
    entries = list(entries)
    columns = [[entry.path for entry in entries],
               [entry.dataset_id for entry in entries],
               [entry.system_id for entry in entries],
               [format_mos(entry.mos) for entry in entries],
               [str(int(entry.num_votes)) for entry in entries],
               [entry.label_level for entry in entries],
               [entry.split for entry in entries]]
    table = Table(columns, names=MANIFEST_COLUMNS, dtype=[str] * len(MANIFEST_COLUMNS))
    makepath4file(path)
    try:
        ascii.write(table, path, format='csv', overwrite=True)
    except OSError as err:
        raise DataError('Cannot write manifest {}: {}'.format(path, err)) from err
    return path
