#! /usr/bin/env python

"""Evaluation reports: per-dataset correlations and group summaries.

A report has one row per (manifest, dataset) pair holding the number of
files and systems, per-stimuli r and RMSE (only when every file carries
its own rating) and per-system r and RMSE. Datasets are collected in
named groups, e.g. 'validation' and 'test'; every group gets an
'Average' row and a 'Worst Case' row (smallest r, largest RMSE).

Use
---
    ::

        from naturalmos.eval_metrics import report
        result = report.evaluate_datasets(model, [val_a, val_b], ['validation', 'validation'])
        report.write_report_csv(result, 'report.csv')
        print(report.format_report_table(result))

Notes
-----
    Per-system r needs at least 3 systems; with fewer it is reported
    as absent. Per-system RMSE is always reported.

    In the CSV file absent values are written as N/A, floats with repr()
    so that reading the file back gives identical numbers, and the
    effective configuration follows the table as '# key = value' lines.
"""

from dataclasses import asdict, dataclass, field
import logging

from astropy.io import ascii
from astropy.table import Table
import numpy as np

from naturalmos.audio_io.manifest import manifest_summary
from naturalmos.audio_io.wav_io import read_wav
from naturalmos.eval_metrics.metrics import MIN_CORRELATION_POINTS, aggregate_per_system, pearson_r, rmse
from naturalmos.features.mel_spectrogram import extract_segments
from naturalmos.model.network import clamp_mos
from naturalmos.utils.definitions import REPORT_COLUMNS, SUMMARY_KINDS
from naturalmos.utils.exceptions import DataError
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.eval_metrics.report')

ABSENT = 'N/A'
INT_COLUMNS = ('n_files', 'n_systems')
STRING_COLUMNS = ('group', 'dataset')

# Column order and headings of the text table
TABLE_COLUMNS = [('dataset', 'Dataset'), ('n_files', 'Files'), ('n_systems', 'Systems'),
                 ('stimuli_r', 'Stimuli r'), ('stimuli_rmse', 'Stimuli RMSE'),
                 ('system_r', 'System r'), ('system_rmse', 'System RMSE')]


@dataclass
class DatasetResult:
    """One report row. Summary rows carry 'Average' or 'Worst Case' as
    dataset name."""
    group: str
    dataset: str
    n_files: int
    n_systems: int
    stimuli_r: float = None
    stimuli_rmse: float = None
    system_r: float = None
    system_rmse: float = None
    minutes: float = None
    files_per_system: float = None


@dataclass
class EvaluationReport:
    rows: list = field(default_factory=list)
    summaries: list = field(default_factory=list)
    config: list = field(default_factory=list)

    def groups(self):
        return list(dict.fromkeys(row.group for row in self.rows))


def _mean_or_none(values):
    values = [value for value in values if value is not None]
    return float(np.mean(values)) if values else None


def _extreme_or_none(values, func):
    values = [value for value in values if value is not None]
    return float(func(values)) if values else None


def dataset_result(group, dataset_id, manifest, predictions, durations=None):
    """Metrics of one dataset of a manifest.

    Parameters
    ----------
    group : str
        Group label of the row

    dataset_id : str
        Dataset to evaluate

    manifest : DatasetManifest
        Manifest containing the dataset

    predictions : dict
        Entry path -> predicted MOS

    durations : dict
        Entry path -> duration in seconds; minutes are absent without it

    Returns
    -------
    row : DatasetResult
    """
    subset = manifest.select(dataset_id=dataset_id)
    entries = subset.entries
    pairs = aggregate_per_system(predictions, subset)
    n_systems = len(pairs)

    stimuli_r = stimuli_rmse = None
    if all(entry.label_level == 'per_stimulus' for entry in entries):
        predicted = [predictions[entry.path] for entry in entries]
        rated = [entry.mos for entry in entries]
        stimuli_rmse = rmse(predicted, rated)
        if len(entries) >= MIN_CORRELATION_POINTS:
            stimuli_r = pearson_r(predicted, rated)

    system_predicted = [pair[0] for pair in pairs.values()]
    system_rated = [pair[1] for pair in pairs.values()]
    system_r = pearson_r(system_predicted, system_rated) if n_systems >= MIN_CORRELATION_POINTS else None
    system_rmse = rmse(system_predicted, system_rated)

    minutes = None
    if durations is not None:
        minutes = manifest_summary(subset, durations=durations)[dataset_id]['minutes']
    return DatasetResult(group, dataset_id, len(entries), n_systems, stimuli_r, stimuli_rmse, system_r,
                         system_rmse, minutes, len(entries) / n_systems)


def summarize_group(group, rows):
    """'Average' and 'Worst Case' rows over the datasets of one group"""
    n_files = sum(row.n_files for row in rows)
    n_systems = sum(row.n_systems for row in rows)
    minutes = None if any(row.minutes is None for row in rows) else float(sum(row.minutes for row in rows))
    files_per_system = _mean_or_none([row.files_per_system for row in rows])

    average = DatasetResult(group, SUMMARY_KINDS[0], n_files, n_systems,
                            _mean_or_none([row.stimuli_r for row in rows]),
                            _mean_or_none([row.stimuli_rmse for row in rows]),
                            _mean_or_none([row.system_r for row in rows]),
                            _mean_or_none([row.system_rmse for row in rows]),
                            minutes, files_per_system)
    worst = DatasetResult(group, SUMMARY_KINDS[1], n_files, n_systems,
                          _extreme_or_none([row.stimuli_r for row in rows], min),
                          _extreme_or_none([row.stimuli_rmse for row in rows], max),
                          _extreme_or_none([row.system_r for row in rows], min),
                          _extreme_or_none([row.system_rmse for row in rows], max),
                          minutes, files_per_system)
    return [average, worst]


def evaluate_predictions(predictions, manifests, groups, durations=None, config=None):
    """Build a report from precomputed predictions.

    Parameters
    ----------
    predictions : list
        One dict (entry path -> predicted MOS) per manifest

    manifests : list
        DatasetManifest objects

    groups : list
        Group label of each manifest

    durations : list
        Optional dicts (entry path -> seconds), one per manifest

    config : list
        'key = value' lines echoed in the report footer

    Returns
    -------
    report : EvaluationReport
    """
    if not (len(predictions) == len(manifests) == len(groups)):
        raise ValueError('need one prediction dict and one group label per manifest')
    if durations is None:
        durations = [None] * len(manifests)

    rows = []
    for manifest_predictions, manifest, group, manifest_durations in zip(predictions, manifests, groups,
                                                                          durations):
        for dataset_id in manifest.dataset_ids():
            rows.append(dataset_result(group, dataset_id, manifest, manifest_predictions, manifest_durations))

    summaries = []
    for group in dict.fromkeys(groups):
        summaries += summarize_group(group, [row for row in rows if row.group == group])
    return EvaluationReport(rows, summaries, list(config or []))


def predict_manifest(model, manifest, nproc=1, clamp=False):
    """Predictions and durations of every entry of a manifest"""
    paths = [manifest.resolve_path(entry) for entry in manifest.entries]
    segments = extract_segments(paths, model.feature_config, nproc=nproc)
    predictions = {}
    durations = {}
    for entry, path, sequence in zip(manifest.entries, paths, segments):
        value = model.predict_segments(sequence)
        predictions[entry.path] = float(clamp_mos(value)) if clamp else value
        durations[entry.path] = read_wav(path).duration_seconds
    return predictions, durations


def evaluate_datasets(model, manifests, groups, nproc=1, clamp=False, config=None):
    """Predict every file of the manifests and build the report.

    Parameters
    ----------
    model : NisqaTtsModel
        Model, used in eval mode

    manifests : list
        DatasetManifest objects

    groups : list
        Group label of each manifest

    nproc : int
        Worker processes for feature extraction

    clamp : bool
        Clip predictions to [1, 5] before scoring

    Returns
    -------
    report : EvaluationReport
    """
    predictions = []
    durations = []
    for manifest in manifests:
        logger.info('Predicting {} files of {}'.format(len(manifest), manifest.source_path))
        manifest_predictions, manifest_durations = predict_manifest(model, manifest, nproc=nproc, clamp=clamp)
        predictions.append(manifest_predictions)
        durations.append(manifest_durations)
    return evaluate_predictions(predictions, manifests, groups, durations=durations, config=config)


def format_value(value):
    if value is None:
        return ABSENT
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def parse_value(column, text):
    if text == ABSENT:
        return None
    if column in STRING_COLUMNS:
        return text
    if column in INT_COLUMNS:
        return int(text)
    return float(text)


def write_report_csv(report, path):
    """Write the report rows, then the summaries, then the configuration"""
    rows = report.rows + report.summaries
    table = Table([[format_value(getattr(row, column)) for row in rows] for column in REPORT_COLUMNS],
                  names=REPORT_COLUMNS, dtype=[str] * len(REPORT_COLUMNS))
    makepath4file(path)
    try:
        ascii.write(table, path, format='csv', overwrite=True)
        with open(path, 'a', encoding='utf-8') as csv_file:
            for line in report.config:
                csv_file.write('# {}\n'.format(line))
    except OSError as err:
        raise DataError('Cannot write report {}: {}'.format(path, err)) from err
    logger.info('Wrote evaluation report {}'.format(path))
    return path


def read_report_csv(path):
    """Read a report written by ``write_report_csv``.

    Returns
    -------
    report : EvaluationReport
    """
    with open(path, 'r', encoding='utf-8') as csv_file:
        lines = csv_file.read().splitlines()
    config = [line[2:] for line in lines if line.startswith('# ')]
    data_lines = [line for line in lines if line and not line.startswith('#')]
    converters = {column: [ascii.convert_numpy(str)] for column in REPORT_COLUMNS}
    table = ascii.read(data_lines, format='csv', guess=False, fast_reader=False, converters=converters)
    if list(table.colnames) != REPORT_COLUMNS:
        raise DataError('{}: unexpected report columns {}'.format(path, table.colnames))

    rows = []
    summaries = []
    for record in table:
        row = DatasetResult(**{column: parse_value(column, str(record[column])) for column in REPORT_COLUMNS})
        (summaries if row.dataset in SUMMARY_KINDS else rows).append(row)
    return EvaluationReport(rows, summaries, config)


def format_report_table(report, precision=3):
    """Text table with one block of rows per group"""
    fmt = '{{:.{}f}}'.format(precision)
    rows = []
    for group in report.groups():
        group_rows = [row for row in report.rows if row.group == group]
        group_rows += [row for row in report.summaries if row.group == group]
        for row in group_rows:
            values = asdict(row)
            rows.append([group] + [ABSENT if values[column] is None else
                                   fmt.format(values[column]) if isinstance(values[column], float)
                                   else str(values[column]) for column, _ in TABLE_COLUMNS])
    names = ['Group'] + [heading for _, heading in TABLE_COLUMNS]
    if not rows:
        return ''
    table = Table(rows=rows, names=names, dtype=[str] * len(names))
    return '\n'.join(table.pformat(max_lines=-1, max_width=-1))