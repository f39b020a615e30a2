#! /usr/bin/env python

"""Command line interface of naturalmos.

One executable runs the whole pipeline: building the degradation
corpus, pretraining, fine-tuning, prediction, evaluation, the gradient
check of the autograd layers and inspection of checkpoints and
manifests.

Use
---
    ::

        naturalmos make-pretrain-data --refdir clean/ --outdir corpus/
        naturalmos pretrain --manifest corpus/pretrain_manifest.csv --out pretrain.ckpt
        naturalmos finetune --train train.csv --val val.csv --init pretrain.ckpt --out best.ckpt
        naturalmos predict --model best.ckpt --wav a.wav b.wav
        naturalmos evaluate --model best.ckpt --manifest val.csv --group validation --out report.csv
        naturalmos gradcheck
        naturalmos inspect --model best.ckpt

Notes
-----
    Exit codes: 0 success, 1 usage error, 2 data error (including
    missing files), 3 numeric failure (non-finite loss, failed gradient
    check).

    The configuration starts at the package defaults, then applies
    NATURALMOS_SEED, the config file (-c, default $NATURALMOS_CONFIGFILE),
    -p key value pairs and finally --seed and --jobs.
"""

import argparse
import json
import logging
import os
import sys

from astropy.table import Table

from naturalmos.audio_io.manifest import load_manifest, manifest_summary, validate_manifest, write_manifest
from naturalmos.audio_io.wav_io import read_wav
from naturalmos.autograd.gradcheck import run_gradcheck_suite
from naturalmos.degrade.pretrain_corpus import generate_pretrain_corpus
from naturalmos.eval_metrics.metrics import aggregate_per_system
from naturalmos.eval_metrics.plots import plot_per_system
from naturalmos.eval_metrics.report import (evaluate_predictions, format_report_table, predict_manifest,
                                            write_report_csv)
from naturalmos.features.mel_spectrogram import compute_mel_spectrogram, extract_segments, write_mel_csv
from naturalmos.model.checkpoint import inspect_checkpoint, load_checkpoint, read_checkpoint, write_checkpoint
from naturalmos.model.network import clamp_mos
from naturalmos.training.trainer import TrainConfig, compare_transfer, finetune, pretrain, write_training_log
from naturalmos.utils.constants import CONFIG_ENV_VAR, DEFAULT_REPORT_NAME
from naturalmos.utils.definitions import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE
from naturalmos.utils.exceptions import DataError, NumericError, UsageError
from naturalmos.utils.logging_functions import configure_logging, log_fail, log_info
from naturalmos.utils.tools import CliConfig

__all__ = ['ArgumentParser', 'define_options', 'dispatch', 'main', 'write_manifest']

logger = logging.getLogger('naturalmos.cli')


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises UsageError instead of exiting"""
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write('{}: error: {}\n'.format(self.prog, message))
        raise UsageError(message)


def common_options():
    parser = ArgumentParser(add_help=False)
    parser.add_argument('-c', '--cfgfile', default=os.environ.get(CONFIG_ENV_VAR),
                        help='flat "key = value" config file (default=$NATURALMOS_CONFIGFILE)')
    parser.add_argument('-p', '--params', action='append', default=None, nargs=2, metavar=('KEY', 'VALUE'),
                        help='"-p key value" sets a configuration parameter. Can be used multiple times')
    parser.add_argument('--seed', type=int, default=None, help='seed of every stochastic stage')
    parser.add_argument('--jobs', type=int, default=None,
                        help='worker processes for feature extraction and degradation')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='verbosity level: -v shows info, -vv shows debug messages on screen')
    parser.add_argument('--logdir', default=None, help='directory for the log file (default: no log file)')
    parser.add_argument('--logFileLevel', default='info', help='Minimum message level to add to log file')
    parser.add_argument('--logScreenLevel', default='warning', help='Minimum message level to display to screen')
    return parser


def define_options():
    """Build the parser with all subcommands"""
    common = common_options()
    parser = ArgumentParser(prog='naturalmos', description='Naturalness MOS prediction for synthesized speech')
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=ArgumentParser)
    subparsers.required = True

    sub = subparsers.add_parser('make-pretrain-data', parents=[common],
                                help='degrade clean references into a pretraining corpus')
    sub.add_argument('--refdir', required=True, help='directory of clean WAV files')
    sub.add_argument('--outdir', required=True, help='output directory of the degraded files')
    sub.add_argument('--conditions', type=int, default=None,
                     help='degraded versions per reference (default: conditions_per_file)')
    sub.add_argument('--manifest', default=None, help='output manifest (default: OUTDIR/pretrain_manifest.csv)')

    sub = subparsers.add_parser('pretrain', parents=[common], help='train on a pretraining corpus')
    sub.add_argument('--manifest', required=True, help='corpus manifest')
    sub.add_argument('--out', required=True, help='output checkpoint')
    sub.add_argument('--log', default=None, help='training log CSV')

    sub = subparsers.add_parser('finetune', parents=[common], help='fine-tune on naturalness ratings')
    sub.add_argument('--train', nargs='+', required=True, help='manifests with split=train entries')
    sub.add_argument('--val', nargs='+', required=True, help='manifests with split=validation entries')
    sub.add_argument('--out', required=True, help='checkpoint of the selected run and epoch')
    sub.add_argument('--init', default=None, help='pretrained checkpoint (default: train from scratch)')
    sub.add_argument('--outdir', default=None, help='directory for the best checkpoint of every run')
    sub.add_argument('--compare-scratch', action='store_true', default=False,
                     help='also train from scratch and print both variants side by side (needs --init)')
    sub.add_argument('--log', default=None, help='training log CSV')

    sub = subparsers.add_parser('predict', parents=[common], help='predict the MOS of WAV files')
    sub.add_argument('--model', required=True, help='checkpoint')
    sub.add_argument('--wav', nargs='+', required=True, help='WAV files')
    sub.add_argument('--clamp', action='store_true', default=False, help='clip predictions to [1, 5]')
    sub.add_argument('--dump-mel', default=None, help='directory for CSV dumps of the mel spectrograms')

    sub = subparsers.add_parser('evaluate', parents=[common], help='score a model against rated manifests')
    sub.add_argument('--model', required=True, help='checkpoint')
    sub.add_argument('--manifest', action='append', required=True, help='rated manifest. Repeatable')
    sub.add_argument('--group', action='append', required=True,
                     help='group of the manifest at the same position, e.g. validation or test. Repeatable')
    sub.add_argument('--out', default=DEFAULT_REPORT_NAME,
                     help='report CSV (default=%(default)s in the working directory)')
    sub.add_argument('--plot-dir', default=None, help='directory for per-system scatter plots')
    sub.add_argument('--rescale', type=float, nargs=2, default=None, metavar=('LO', 'HI'),
                     help='map ratings from the scale [LO, HI] onto [1, 5]')

    sub = subparsers.add_parser('gradcheck', parents=[common], help='finite difference check of every layer')
    sub.add_argument('--points', type=int, default=5, help='random points per layer (default=%(default)s)')

    sub = subparsers.add_parser('inspect', parents=[common], help='show a checkpoint header or manifest summary')
    target = sub.add_mutually_exclusive_group(required=True)
    target.add_argument('--model', default=None, help='checkpoint')
    target.add_argument('--manifest', default=None, help='manifest')
    return parser


def load_config(args):
    """Effective configuration: defaults, environment, file, -p, flags"""
    cfg = CliConfig()
    cfg.apply_environment()
    cfg.loadcfgfile(args.cfgfile)
    cfg.setvals(args.params)
    if args.seed is not None:
        cfg.setval('seed', args.seed, source='--seed')
    if args.jobs is not None:
        if args.jobs < 1:
            cfg.error('--jobs must be positive, got {}'.format(args.jobs))
        cfg.setval('jobs', args.jobs, source='--jobs')
    cfg.log_seed()
    return cfg


def train_config(cfg):
    try:
        return TrainConfig.from_config(cfg)
    except ValueError as err:
        raise UsageError('invalid training configuration: {}'.format(err)) from err


def make_pretrain_data(args, cfg):
    if args.conditions is not None:
        cfg.setval('conditions_per_file', args.conditions, source='--conditions')
    if cfg['conditions_per_file'] < 1:
        cfg.error('conditions_per_file must be positive, got {}'.format(cfg['conditions_per_file']))
    manifest = generate_pretrain_corpus(args.refdir, cfg['conditions_per_file'], cfg['seed'], args.outdir,
                                        chain_fraction=cfg['chain_fraction'],
                                        validation_percent=cfg['validation_percent'], nproc=cfg['jobs'],
                                        manifest_path=args.manifest)
    print('{}\t{} files'.format(manifest.source_path, len(manifest)))


def run_pretrain(args, cfg):
    config = train_config(cfg)
    checkpoint = pretrain(load_manifest(args.manifest), config, log_path=args.log)
    write_checkpoint(checkpoint, args.out)
    print(args.out)


def run_finetune(args, cfg):
    config = train_config(cfg)
    if args.compare_scratch and args.init is None:
        raise UsageError('--compare-scratch needs a pretrained checkpoint (--init)')
    train_manifests = [load_manifest(path) for path in args.train]
    validation_manifests = [load_manifest(path) for path in args.val]
    start = read_checkpoint(args.init) if args.init is not None else None

    if args.compare_scratch:
        table, results = compare_transfer(start, train_manifests, validation_manifests, config,
                                          outdir=args.outdir)
        if args.log is not None:
            root, ext = os.path.splitext(args.log)
            for variant, (_, records) in results.items():
                write_training_log(records, '{}_{}{}'.format(root, variant, ext or '.csv'))
        best = results['transfer'][0]
        print('\n'.join(table.pformat(max_lines=-1, max_width=-1)))
    else:
        best, _ = finetune(start, train_manifests, validation_manifests, config, outdir=args.outdir,
                           log_path=args.log)
    write_checkpoint(best, args.out)
    print('{}\trun {} epoch {} val_avg_pcc {:.4f}'.format(args.out, best.meta['run'], best.meta['epoch'],
                                                          best.meta['val_avg_pcc']))


def run_predict(args, cfg):
    model = load_checkpoint(args.model)
    clamp = args.clamp or cfg['clamp_output']
    segments = extract_segments(args.wav, model.feature_config, nproc=cfg['jobs'])
    for path, sequence in zip(args.wav, segments):
        prediction = model.predict_segments(sequence)
        if clamp:
            prediction = float(clamp_mos(prediction))
        print('{}\t{:.4f}'.format(path, prediction))
        if args.dump_mel is not None:
            stem = os.path.splitext(os.path.basename(path))[0]
            mel = compute_mel_spectrogram(read_wav(path), model.feature_config)
            write_mel_csv(mel, os.path.join(args.dump_mel, '{}_mel.csv'.format(stem)))


def run_evaluate(args, cfg):
    groups = args.group
    if len(groups) == 1 and len(args.manifest) > 1:
        groups = groups * len(args.manifest)
    if len(groups) != len(args.manifest):
        raise UsageError('give one --group per --manifest (or a single --group for all), got {} and {}'.format(
            len(args.manifest), len(args.group)))
    try:
        manifests = [load_manifest(path, rescale=args.rescale) for path in args.manifest]
    except ValueError as err:
        if isinstance(err, DataError):
            raise
        raise UsageError(str(err)) from err
    model = load_checkpoint(args.model)

    predictions = []
    durations = []
    for manifest in manifests:
        manifest_predictions, manifest_durations = predict_manifest(model, manifest, nproc=cfg['jobs'],
                                                                    clamp=cfg['clamp_output'])
        predictions.append(manifest_predictions)
        durations.append(manifest_durations)
    report = evaluate_predictions(predictions, manifests, groups, durations=durations, config=cfg.lines())
    write_report_csv(report, args.out)
    print(format_report_table(report))

    if args.plot_dir is not None:
        for manifest, group, manifest_predictions in zip(manifests, groups, predictions):
            stem = os.path.splitext(os.path.basename(manifest.source_path))[0]
            pairs = aggregate_per_system(manifest_predictions, manifest)
            for dataset_id in manifest.dataset_ids():
                dataset_pairs = {key: value for key, value in pairs.items() if key[0] == dataset_id}
                plot_per_system(dataset_pairs,
                                os.path.join(args.plot_dir, '{}_{}_{}.png'.format(group, stem, dataset_id)),
                                title='{} {}'.format(group, dataset_id))


def run_gradcheck(args, cfg):
    if args.points < 1:
        raise UsageError('--points must be positive, got {}'.format(args.points))
    results = run_gradcheck_suite(points=args.points, seed=cfg['seed'])
    print('\n'.join(results.pformat(max_lines=-1, max_width=-1)))
    failed = sorted(set(results['op'][~results['ok']]))
    if failed:
        raise NumericError('gradient check failed for {}'.format(', '.join(failed)))


def run_inspect(args, cfg):
    if args.model is not None:
        header = inspect_checkpoint(args.model)
        print(json.dumps(header, indent=2, sort_keys=True))
        return

    manifest = load_manifest(args.manifest)
    violations = validate_manifest(manifest)
    if violations:
        for violation in violations:
            print('VIOLATION: {}'.format(violation))
        raise DataError('{}: {} invariant violations'.format(args.manifest, len(violations)))

    summary = manifest_summary(manifest)
    rows = [(dataset_id, values['n_files'], values['n_systems'], values['minutes'], values['files_per_system'])
            for dataset_id, values in summary.items()]
    table = Table(rows=rows if rows else None, names=('dataset', 'n_files', 'n_systems', 'minutes',
                                                      'files_per_system'),
                  dtype=[str, int, int, float, float])
    table['minutes'].format = '.2f'
    table['files_per_system'].format = '.2f'
    print('\n'.join(table.pformat(max_lines=-1, max_width=-1)))


COMMANDS = {'make-pretrain-data': make_pretrain_data,
            'pretrain': run_pretrain,
            'finetune': run_finetune,
            'predict': run_predict,
            'evaluate': run_evaluate,
            'gradcheck': run_gradcheck,
            'inspect': run_inspect}


@log_info
@log_fail
def run_command(args):
    cfg = load_config(args)
    COMMANDS[args.command](args, cfg)


def dispatch(argv=None):
    """Run one subcommand and return its exit code.

    Parameters
    ----------
    argv : list
        Command line arguments without the program name; sys.argv[1:]
        if None

    Returns
    -------
    code : int
        0 success, 1 usage error, 2 data error, 3 numeric failure
    """
    parser = define_options()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as err:
        # --help
        return err.code if isinstance(err.code, int) else EXIT_OK

    screen_level = args.logScreenLevel
    if args.verbose == 1:
        screen_level = 'info'
    elif args.verbose > 1:
        screen_level = 'debug'
    try:
        configure_logging('naturalmos_{}'.format(args.command.replace('-', '_')), path=args.logdir,
                          log_file_level=args.logFileLevel.lower(), log_screen_level=screen_level.lower())
    except ValueError as err:
        sys.stderr.write('naturalmos: error: bad log level: {}\n'.format(err))
        return EXIT_USAGE

    try:
        run_command(args)
    except UsageError:
        return EXIT_USAGE
    except (DataError, FileNotFoundError):
        return EXIT_DATA
    except NumericError:
        return EXIT_NUMERIC
    except ValueError:
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(dispatch())


if __name__ == '__main__':
    main()
