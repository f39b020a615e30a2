#! /usr/bin/env python

"""Two-stage training: pretraining on the degradation corpus, then
fine-tuning on naturalness ratings with several runs.

Use
---
    ::

        from naturalmos.training.trainer import TrainConfig, finetune, pretrain
        config = TrainConfig(seed=1234)
        start = pretrain(corpus_manifest, config)
        best, records = finetune(start, [train_manifest], [val_manifest], config)

Notes
-----
    The loss is the mean squared error between predicted and rated MOS.
    Files are shuffled every epoch with the stream (seed, 'shuffle',
    epoch) and grouped into batches of ``batch_size`` files; the dropout
    masks of optimizer step k come from (seed, 'dropout', k). Variable
    length files are padded and masked inside the network.

    Fine-tuning trains every weight. After each epoch the model predicts
    the validation split of every (manifest, dataset) group, the Pearson
    correlations with the ratings are averaged, and training stops once
    this average has not improved for ``early_stop_patience`` epochs.
    Run r uses seed + r. The run and epoch with the highest average
    validation correlation is returned; ties go to the lowest run, then
    the earliest epoch.

    Files labeled per_system carry their system MOS as target.
"""

from dataclasses import dataclass, field, fields
import logging
import time

from astropy.io import ascii
from astropy.table import Table
import numpy as np

from naturalmos.autograd.layers import mse_loss
from naturalmos.autograd.optim import Adam
from naturalmos.autograd.tensor import backward
from naturalmos.eval_metrics.metrics import MIN_CORRELATION_POINTS, pearson_r
from naturalmos.features.mel_spectrogram import FeatureConfig, extract_segments
from naturalmos.model.checkpoint import ModelCheckpoint, write_checkpoint
from naturalmos.model.network import NisqaTtsModel
from naturalmos.utils.constants import DEFAULT_SEED, DROPOUT
from naturalmos.utils.definitions import TRAINING_LOG_COLUMNS
from naturalmos.utils.exceptions import DataError, NumericError
from naturalmos.utils.tools import hash_lines, make_rng, makepath, makepath4file

logger = logging.getLogger('naturalmos.training.trainer')


@dataclass
class TrainConfig:
    """Training hyperparameters. The loss is fixed to MSE."""
    lr: float = 0.001
    pretrain_epochs: int = 24
    finetune_max_epochs: int = 100
    early_stop_patience: int = 15
    batch_size: int = 16
    runs: int = 3
    seed: int = DEFAULT_SEED
    dropout: float = DROPOUT
    jobs: int = 1
    features: FeatureConfig = field(default_factory=FeatureConfig)
    config_text: tuple = ()

    loss = 'mse'

    def __post_init__(self):
        for name in ('pretrain_epochs', 'finetune_max_epochs', 'early_stop_patience', 'batch_size', 'runs',
                     'jobs'):
            if getattr(self, name) < 1:
                raise ValueError('{} must be positive, got {}'.format(name, getattr(self, name)))
        if not self.lr > 0:
            raise ValueError('lr must be positive, got {}'.format(self.lr))
        if self.seed < 0:
            raise ValueError('seed must be non-negative, got {}'.format(self.seed))

    @classmethod
    def from_config(cls, config):
        """Build from a CliConfig (or a plain dict of its keys)"""
        params = config.as_dict() if hasattr(config, 'as_dict') else dict(config)
        names = [item.name for item in fields(cls) if item.name not in ('features', 'config_text')]
        text = tuple(config.lines()) if hasattr(config, 'lines') else ()
        return cls(features=FeatureConfig.from_config(params), config_text=text,
                   **{name: params[name] for name in names if name in params})

    def lines(self):
        """Effective configuration as sorted 'key = value' lines"""
        if self.config_text:
            return list(self.config_text)
        values = {item.name: getattr(self, item.name) for item in fields(self)
                  if item.name not in ('features', 'config_text')}
        values.update({item.name: getattr(self.features, item.name) for item in fields(self.features)})
        return ['{} = {}'.format(key, values[key]) for key in sorted(values)]

    def config_hash(self):
        return hash_lines(self.lines())


@dataclass
class TrainRunRecord:
    """Per-epoch history of one training run. Epochs are 1-based."""
    run: int
    train_loss: list = field(default_factory=list)
    val_avg_pcc: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = None
    checkpoint_path: str = None

    @property
    def best_pcc(self):
        if self.best_epoch is None:
            return None
        return self.val_avg_pcc[self.best_epoch - 1]

    def add_epoch(self, train_loss, val_avg_pcc=None, seconds=0.):
        self.train_loss.append(float(train_loss))
        self.val_avg_pcc.append(None if val_avg_pcc is None else float(val_avg_pcc))
        self.seconds.append(float(seconds))


class SegmentCache:
    """Segment arrays of audio files, computed once per file"""
    def __init__(self, feature_config=None, nproc=1):
        self.feature_config = feature_config or FeatureConfig()
        self.nproc = nproc
        self._segments = {}

    def get(self, paths):
        missing = [path for path in dict.fromkeys(paths) if path not in self._segments]
        if missing:
            for path, segments in zip(missing, extract_segments(missing, self.feature_config, nproc=self.nproc)):
                self._segments[path] = segments
        return [self._segments[path] for path in paths]


def manifest_samples(manifests, split):
    """(resolved path, target MOS) pairs of one split of several manifests"""
    return [(manifest.resolve_path(entry), entry.mos) for manifest in manifests
            for entry in manifest.select(split=split).entries]


def validation_groups(manifests):
    """Validation entries per (manifest, dataset) group.

    Returns
    -------
    groups : list
        (label, samples) pairs; each group has at least 3 files
    """
    groups = []
    for index, manifest in enumerate(manifests):
        selected = manifest.select(split='validation')
        for dataset_id in selected.dataset_ids():
            samples = manifest_samples([selected.select(dataset_id=dataset_id)], 'validation')
            label = '{}:{}'.format(manifest.source_path or index, dataset_id)
            if len(samples) < MIN_CORRELATION_POINTS:
                raise DataError('validation group {} has {} files, at least {} are needed for a correlation'
                                .format(label, len(samples), MIN_CORRELATION_POINTS))
            groups.append((label, samples))
    if not groups:
        raise DataError('the validation manifests contain no entries with split=validation')
    return groups


class Trainer:
    """Optimizer loop of one model.

    Parameters
    ----------
    model : NisqaTtsModel
        Model to train in place

    config : TrainConfig
        Hyperparameters; ``seed`` keys the shuffle and dropout streams

    cache : SegmentCache
        Shared feature cache

    optimizer : Adam
        Defaults to Adam with ``config.lr``
    """
    def __init__(self, model, config, cache=None, optimizer=None, seed=None):
        self.model = model
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.cache = cache or SegmentCache(model.feature_config, nproc=config.jobs)
        self.optimizer = optimizer or Adam(model.params, lr=config.lr)
        self.global_step = 0

    def train_epoch(self, samples, epoch):
        """One pass over the training samples.

        Parameters
        ----------
        samples : list
            (path, target MOS) pairs

        epoch : int
            Epoch number, keys the shuffle

        Returns
        -------
        loss : float
            Mean squared error over the epoch, weighted by file
        """
        if not samples:
            raise DataError('no training files')
        order = make_rng(self.seed, 'shuffle', epoch).permutation(len(samples))
        total = 0.
        for start in range(0, len(samples), self.config.batch_size):
            batch = [samples[index] for index in order[start:start + self.config.batch_size]]
            segments = self.cache.get([path for path, _ in batch])
            targets = np.array([target for _, target in batch])

            self.optimizer.zero_grad()
            rng = make_rng(self.seed, 'dropout', self.global_step)
            predictions = self.model.forward_batch(segments, mode='train', rng=rng)
            loss = mse_loss(predictions, targets)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError('non-finite loss {} at epoch {}, step {}'.format(value, epoch, self.global_step))
            backward(loss)
            for name in self.model.params:
                if not np.all(np.isfinite(self.model.params[name].grad)):
                    raise NumericError('non-finite gradient of {} at epoch {}, step {}'.format(
                        name, epoch, self.global_step))
            self.optimizer.step()
            self.global_step += 1
            total += value * len(batch)
        return total / len(samples)

    def validation_pcc(self, groups):
        """Average per-stimuli correlation over validation groups"""
        correlations = []
        for _, samples in groups:
            segments = self.cache.get([path for path, _ in samples])
            predicted = [self.model.predict_segments(sequence) for sequence in segments]
            correlations.append(pearson_r(predicted, [target for _, target in samples]))
        return float(np.mean(correlations))


def pretrain(manifest, config, log_path=None):
    """Train a fresh model on a pretraining corpus.

    Parameters
    ----------
    manifest : DatasetManifest
        Corpus manifest; its train split is used

    config : TrainConfig
        Hyperparameters; ``pretrain_epochs`` epochs are run

    log_path : str
        Optional training log CSV

    Returns
    -------
    checkpoint : ModelCheckpoint
        Model, metadata (stage, epochs, seed, config hash) and Adam state
    """
    samples = manifest_samples([manifest], 'train')
    if not samples:
        raise DataError('pretraining corpus {} has no training entries'.format(manifest.source_path))

    model = NisqaTtsModel(seed=config.seed, feature_config=config.features, dropout=config.dropout)
    trainer = Trainer(model, config)
    record = TrainRunRecord(0)
    logger.info('Pretraining on {} files for {} epochs'.format(len(samples), config.pretrain_epochs))
    for epoch in range(1, config.pretrain_epochs + 1):
        start = time.time()
        loss = trainer.train_epoch(samples, epoch)
        record.add_epoch(loss, seconds=time.time() - start)
        logger.info('pretrain epoch {}: loss {:.4f}'.format(epoch, loss))

    if log_path is not None:
        write_training_log([record], log_path)
    meta = {'stage': 'pretrain',
            'epochs': config.pretrain_epochs,
            'seed': config.seed,
            'config': config.lines(),
            'config_hash': config.config_hash(),
            'train_loss': record.train_loss}
    return ModelCheckpoint(model, meta, trainer.optimizer.state_dict())


def start_model(start, seed, config):
    """Fresh model, or a copy of the starting checkpoint's model"""
    if start is None:
        return NisqaTtsModel(seed=seed, feature_config=config.features, dropout=config.dropout)
    source = start.model if isinstance(start, ModelCheckpoint) else start
    model = NisqaTtsModel.from_hyperparameters(source.hyperparameters(), seed=seed)
    model.load_state(source.state())
    return model


def finetune(start, train_manifests, validation_manifests, config, outdir=None, log_path=None):
    """Fine-tune on naturalness ratings with several runs.

    Parameters
    ----------
    start : ModelCheckpoint, NisqaTtsModel or None
        Pretrained starting point; None trains from scratch

    train_manifests : list
        Manifests whose split=train entries are trained on

    validation_manifests : list
        Manifests whose split=validation entries drive model selection

    config : TrainConfig
        Hyperparameters

    outdir : str
        If given, the best checkpoint of every run is written there

    log_path : str
        Optional training log CSV

    Returns
    -------
    best : ModelCheckpoint
        Model of the selected run and epoch

    records : list
        One TrainRunRecord per run
    """
    if not train_manifests or not validation_manifests:
        raise DataError('fine-tuning needs at least one train and one validation manifest')
    samples = manifest_samples(train_manifests, 'train')
    if not samples:
        raise DataError('the train manifests contain no entries with split=train')
    groups = validation_groups(validation_manifests)
    variant = 'scratch' if start is None else 'transfer'

    features = config.features if start is None else (start.model if isinstance(start, ModelCheckpoint)
                                                      else start).feature_config
    cache = SegmentCache(features, nproc=config.jobs)
    records = []
    best_states = []
    for run in range(config.runs):
        run_seed = config.seed + run
        model = start_model(start, run_seed, config)
        trainer = Trainer(model, config, cache=cache, seed=run_seed)
        record = TrainRunRecord(run)
        best_pcc = -np.inf
        best_state = None
        since_best = 0
        for epoch in range(1, config.finetune_max_epochs + 1):
            begin = time.time()
            loss = trainer.train_epoch(samples, epoch)
            pcc = trainer.validation_pcc(groups)
            record.add_epoch(loss, pcc, time.time() - begin)
            logger.info('{} run {} epoch {}: loss {:.4f}, validation PCC {:.4f}'.format(
                variant, run, epoch, loss, pcc))
            if pcc > best_pcc:
                best_pcc = pcc
                record.best_epoch = epoch
                best_state = model.state()
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    logger.info('Early stop of run {} after epoch {}'.format(run, epoch))
                    break

        if outdir is not None:
            makepath(outdir)
            model.load_state(best_state)
            run_meta = run_metadata(variant, run, record, config)
            record.checkpoint_path = write_checkpoint(ModelCheckpoint(model, run_meta),
                                                      '{}/{}_run{}_best.ckpt'.format(outdir, variant, run))
        records.append(record)
        best_states.append(best_state)

    best_run, best_epoch = select_best_run(records)
    model = start_model(start, config.seed + best_run, config)
    model.load_state(best_states[best_run])
    logger.info('Selected run {} epoch {} (validation PCC {:.4f})'.format(best_run, best_epoch,
                                                                         records[best_run].best_pcc))
    if log_path is not None:
        write_training_log(records, log_path)
    return ModelCheckpoint(model, run_metadata(variant, best_run, records[best_run], config)), records


def run_metadata(variant, run, record, config):
    return {'stage': 'finetune',
            'init': variant,
            'run': run,
            'epoch': record.best_epoch,
            'epochs_run': len(record.train_loss),
            'val_avg_pcc': record.best_pcc,
            'seed': config.seed,
            'config': config.lines(),
            'config_hash': config.config_hash()}


def select_best_run(records):
    """Run and epoch with the highest average validation correlation.

    Parameters
    ----------
    records : list
        TrainRunRecord objects

    Returns
    -------
    run, epoch : int
        Index of the run in ``records`` and its 1-based epoch; ties go to
        the lowest run, then the earliest epoch
    """
    if not records:
        raise ValueError('select_best_run needs at least one record')
    best = None
    for index, record in enumerate(records):
        for epoch, pcc in enumerate(record.val_avg_pcc, start=1):
            if pcc is not None and (best is None or pcc > best[0]):
                best = (pcc, index, epoch)
    if best is None:
        raise ValueError('no validation correlation recorded')
    return best[1], best[2]


def compare_transfer(pretrained, train_manifests, validation_manifests, config, outdir=None):
    """Fine-tune from a pretrained model and from scratch, side by side.

    Returns
    -------
    table : astropy.table.Table
        Columns variant, best_run, best_epoch, val_avg_pcc

    results : dict
        variant -> (best ModelCheckpoint, run records)
    """
    results = {'transfer': finetune(pretrained, train_manifests, validation_manifests, config, outdir=outdir),
               'scratch': finetune(None, train_manifests, validation_manifests, config, outdir=outdir)}
    rows = []
    for variant, (best, _) in results.items():
        rows.append((variant, best.meta['run'], best.meta['epoch'], best.meta['val_avg_pcc']))
    table = Table(rows=rows, names=('variant', 'best_run', 'best_epoch', 'val_avg_pcc'))
    table['val_avg_pcc'].format = '.4f'
    return table, results


def write_training_log(records, path):
    """Write one CSV row per run and epoch: run,epoch,train_loss,val_avg_pcc,seconds"""
    rows = []
    for record in records:
        for epoch, (loss, pcc, seconds) in enumerate(zip(record.train_loss, record.val_avg_pcc, record.seconds),
                                                     start=1):
            rows.append((record.run, epoch, repr(loss), 'N/A' if pcc is None else repr(pcc),
                         '{:.3f}'.format(seconds)))
    table = Table(rows=rows if rows else None, names=TRAINING_LOG_COLUMNS,
                  dtype=[int, int, str, str, str])
    makepath4file(path)
    ascii.write(table, path, format='csv', overwrite=True)
    return path
