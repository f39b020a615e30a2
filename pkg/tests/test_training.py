#! /usr/bin/env python

"""Tests for trainer.py"""

import hashlib
import os

from astropy.io import ascii
import numpy as np
import pytest

from naturalmos.audio_io.manifest import ManifestEntry, DatasetManifest, load_manifest, write_manifest
from naturalmos.autograd.optim import Adam
from naturalmos.degrade.pretrain_corpus import generate_pretrain_corpus
from naturalmos.model.checkpoint import read_checkpoint, write_checkpoint
from naturalmos.model.network import NisqaTtsModel
from naturalmos.training.trainer import (SegmentCache, TrainConfig, Trainer, TrainRunRecord, compare_transfer,
                                         finetune, manifest_samples, pretrain, select_best_run,
                                         validation_groups, write_training_log)
from naturalmos.utils.exceptions import DataError

from test_data.toy_data import make_clean_references, make_toy_naturalness_set


def toy_samples(outdir, **kwargs):
    manifest = load_manifest(make_toy_naturalness_set(outdir, **kwargs))
    return manifest, manifest_samples([manifest], 'train')


def train_rmse(trainer, samples):
    segments = trainer.cache.get([path for path, _ in samples])
    predicted = np.array([trainer.model.predict_segments(sequence) for sequence in segments])
    return float(np.sqrt(np.mean((predicted - [target for _, target in samples]) ** 2)))


def file_digest(path):
    with open(path, 'rb') as fid:
        return hashlib.sha256(fid.read()).hexdigest()


def test_train_config():
    """Defaults, validation and configuration text
    """
    config = TrainConfig()
    assert (config.lr, config.pretrain_epochs, config.finetune_max_epochs) == (0.001, 24, 100)
    assert (config.early_stop_patience, config.batch_size, config.runs) == (15, 16, 3)
    assert config.loss == 'mse'

    for bad in ({'lr': 0.}, {'batch_size': 0}, {'runs': 0}, {'seed': -1}, {'early_stop_patience': 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    config = TrainConfig.from_config({'lr': 0.01, 'runs': 2, 'n_mels': 40, 'clamp_output': False})
    assert config.lr == 0.01
    assert config.runs == 2
    assert config.features.n_mels == 40
    lines = config.lines()
    assert lines == sorted(lines)
    assert 'runs = 2' in lines
    assert config.config_hash() == TrainConfig.from_config({'lr': 0.01, 'runs': 2, 'n_mels': 40}).config_hash()
    assert config.config_hash() != TrainConfig().config_hash()


def test_select_best_run():
    """Argmax over runs and epochs with ties to the lowest run and epoch
    """
    records = [TrainRunRecord(run, val_avg_pcc=values) for run, values in enumerate([[0.4], [0.7], [0.6]])]
    assert select_best_run(records) == (1, 1)

    records = [TrainRunRecord(run, val_avg_pcc=[0.5, 0.5, 0.5]) for run in range(3)]
    assert select_best_run(records) == (0, 1)

    records = [TrainRunRecord(0, val_avg_pcc=[0.1, 0.3, 0.9, 0.9, 0.2])]
    assert select_best_run(records) == (0, 3)

    with pytest.raises(ValueError):
        select_best_run([])
    with pytest.raises(ValueError):
        select_best_run([TrainRunRecord(0, val_avg_pcc=[None])])


def test_training_log(tmp_path):
    """One CSV row per run and epoch, N/A without validation
    """
    first = TrainRunRecord(0)
    first.add_epoch(1.5, seconds=0.25)
    first.add_epoch(0.75, seconds=0.5)
    second = TrainRunRecord(1)
    second.add_epoch(2., 0.5, 1.)
    path = write_training_log([first, second], str(tmp_path / 'logs' / 'train.csv'))

    table = ascii.read(path, format='csv')
    assert table.colnames == ['run', 'epoch', 'train_loss', 'val_avg_pcc', 'seconds']
    assert list(table['run']) == [0, 0, 1]
    assert list(table['epoch']) == [1, 2, 1]
    assert float(table['train_loss'][1]) == 0.75
    assert str(table['val_avg_pcc'][0]) == 'N/A'
    assert float(table['val_avg_pcc'][2]) == 0.5


def test_validation_groups(tmp_path):
    """Validation groups need at least three files
    """
    manifest = load_manifest(make_toy_naturalness_set(str(tmp_path), n_files=6, validation_files=3))
    groups = validation_groups([manifest])
    assert len(groups) == 1
    assert len(groups[0][1]) == 3

    small = DatasetManifest(manifest.entries[:3], manifest.source_path)
    with pytest.raises(DataError):
        validation_groups([small])
    with pytest.raises(DataError):
        validation_groups([DatasetManifest([e for e in manifest.entries if e.split == 'train'])])


def test_system_targets(tmp_path):
    """Files labeled per system train on their system MOS
    """
    entries = [ManifestEntry('a.wav', 'd', 'sysA', 3.2, 0, 'per_system', 'train'),
               ManifestEntry('b.wav', 'd', 'sysA', 3.2, 0, 'per_system', 'train'),
               ManifestEntry('c.wav', 'd', 'sysB', 1.5, 0, 'per_system', 'test')]
    manifest = DatasetManifest(entries, str(tmp_path / 'm.csv'))
    samples = manifest_samples([manifest], 'train')
    assert [target for _, target in samples] == [3.2, 3.2]
    assert samples[0][0] == os.path.join(str(tmp_path), 'a.wav')


def test_zero_learning_rate(tmp_path):
    """With lr = 0 the parameters and the loss do not change
    """
    _, samples = toy_samples(str(tmp_path), n_files=2)
    model = NisqaTtsModel(seed=3, dropout=0.)
    before = model.params.snapshot()
    trainer = Trainer(model, TrainConfig(batch_size=1, dropout=0.), optimizer=Adam(model.params, lr=0.))
    losses = [trainer.train_epoch(samples[:1], epoch) for epoch in range(1, 4)]
    assert losses[0] == losses[1] == losses[2]
    for name in model.params:
        assert np.array_equal(model.params[name].values, before[name])
    assert trainer.optimizer.t == 3


def test_loss_trajectory_determinism(tmp_path):
    """The same seed and data give the same losses; the shuffle depends on
    the epoch
    """
    _, samples = toy_samples(str(tmp_path), n_files=6)
    config = TrainConfig(batch_size=2, seed=9)
    trajectories = []
    for _ in range(2):
        trainer = Trainer(NisqaTtsModel(seed=9), config)
        trajectories.append([trainer.train_epoch(samples, epoch) for epoch in range(1, 4)])
        assert trainer.global_step == 9
    assert trajectories[0] == trajectories[1]
    assert all(np.isfinite(trajectories[0]))

    with pytest.raises(DataError):
        Trainer(NisqaTtsModel(), config).train_epoch([], 1)


def test_segment_cache(tmp_path):
    """Features are computed once per file and keep the request order
    """
    _, samples = toy_samples(str(tmp_path), n_files=3)
    cache = SegmentCache()
    paths = [path for path, _ in samples]
    first = cache.get(paths[::-1])
    second = cache.get(paths)
    assert first[0] is second[-1]
    assert len(cache.get([paths[0], paths[0]])) == 2


def test_pretrain(tmp_path):
    """Pretraining runs the configured epochs and records its settings
    """
    refdir = str(tmp_path / 'refs')
    os.makedirs(refdir)
    make_clean_references(refdir, n_files=4)
    corpus = generate_pretrain_corpus(refdir, 2, 5, str(tmp_path / 'corpus'), validation_percent=0)
    config = TrainConfig(pretrain_epochs=3, batch_size=4, seed=5)

    checkpoint = pretrain(corpus, config, log_path=str(tmp_path / 'pretrain_log.csv'))
    assert checkpoint.meta['stage'] == 'pretrain'
    assert checkpoint.meta['epochs'] == 3
    assert checkpoint.meta['seed'] == 5
    assert checkpoint.meta['config_hash'] == config.config_hash()
    assert len(checkpoint.meta['train_loss']) == 3
    assert checkpoint.optimizer_state['t'] == 3 * 2
    assert len(ascii.read(str(tmp_path / 'pretrain_log.csv'), format='csv')) == 3

    again = pretrain(corpus, config)
    for name in checkpoint.model.params:
        assert np.array_equal(checkpoint.model.params[name].values, again.model.params[name].values)

    with pytest.raises(DataError):
        pretrain(corpus.select(split='validation'), config)


def test_finetune(tmp_path):
    """Several runs with early stopping; the best run and epoch is
    returned and the starting checkpoint file is left alone
    """
    manifest, _ = toy_samples(str(tmp_path / 'toy'), n_files=12, validation_files=4)
    config = TrainConfig(finetune_max_epochs=4, early_stop_patience=2, batch_size=4, runs=2, seed=21)

    start_path = write_checkpoint(pretrain(manifest, TrainConfig(pretrain_epochs=1, batch_size=4, seed=2)),
                                  str(tmp_path / 'start.ckpt'))
    digest = file_digest(start_path)
    start = read_checkpoint(start_path)

    best, records = finetune(start, [manifest], [manifest], config, outdir=str(tmp_path / 'runs'),
                             log_path=str(tmp_path / 'finetune_log.csv'))
    assert file_digest(start_path) == digest
    assert len(records) == 2
    assert [record.run for record in records] == [0, 1]

    run, epoch = select_best_run(records)
    assert best.meta['run'] == run
    assert best.meta['epoch'] == epoch
    assert best.meta['init'] == 'transfer'
    assert best.meta['val_avg_pcc'] == max(max(record.val_avg_pcc) for record in records)

    n_rows = 0
    for record in records:
        assert 1 <= len(record.train_loss) <= 4
        assert record.best_pcc == max(record.val_avg_pcc)
        assert all(record.best_pcc >= pcc for pcc in record.val_avg_pcc[record.best_epoch:])
        assert os.path.isfile(record.checkpoint_path)
        n_rows += len(record.train_loss)
    assert len(ascii.read(str(tmp_path / 'finetune_log.csv'), format='csv')) == n_rows

    saved = read_checkpoint(records[run].checkpoint_path).model
    for name in best.model.params:
        assert np.array_equal(saved.params[name].values, best.model.params[name].values)

    with pytest.raises(DataError):
        finetune(start, [], [manifest], config)


def test_compare_transfer(tmp_path):
    """Transfer and scratch fine-tuning side by side
    """
    manifest, _ = toy_samples(str(tmp_path), n_files=8, validation_files=3)
    config = TrainConfig(finetune_max_epochs=2, batch_size=4, runs=1, seed=4)
    pretrained = pretrain(manifest, TrainConfig(pretrain_epochs=1, batch_size=4, seed=4))
    table, results = compare_transfer(pretrained, [manifest], [manifest], config)
    assert list(table['variant']) == ['transfer', 'scratch']
    assert table.colnames == ['variant', 'best_run', 'best_epoch', 'val_avg_pcc']
    assert results['scratch'][0].meta['init'] == 'scratch'


@pytest.mark.slow
def test_overfit_toy_set(tmp_path):
    """A fresh model fits 20 toy files to a training RMSE below 0.1
    """
    _, samples = toy_samples(str(tmp_path), n_files=20)
    trainer = Trainer(NisqaTtsModel(seed=1, dropout=0.), TrainConfig(lr=0.001, batch_size=4, dropout=0., seed=1))
    rmse = np.inf
    for epoch in range(1, 501):
        trainer.train_epoch(samples, epoch)
        if epoch % 10 == 0:
            rmse = train_rmse(trainer, samples)
            if rmse < 0.1:
                break
    assert rmse < 0.1


@pytest.mark.slow
def test_overfit_single_file(tmp_path):
    """One file labeled 4.2 is learned within 0.05
    """
    manifest, _ = toy_samples(str(tmp_path), n_files=5)
    path = manifest.resolve_path(manifest.entries[2])
    trainer = Trainer(NisqaTtsModel(seed=2, dropout=0.), TrainConfig(batch_size=1, dropout=0., seed=2))
    losses = [trainer.train_epoch([(path, 4.2)], epoch) for epoch in range(1, 501)]
    assert losses[-1] < 0.01
    assert train_rmse(trainer, [(path, 4.2)]) < 0.05


@pytest.mark.slow
def test_pipeline_rehearsal(tmp_path):
    """Corpus generation, 24 pretraining epochs and two fine-tuning runs
    reproduce the best checkpoint byte for byte
    """
    refdir = str(tmp_path / 'refs')
    os.makedirs(refdir)
    make_clean_references(refdir, n_files=40)
    toy = load_manifest(make_toy_naturalness_set(str(tmp_path / 'toy'), n_files=20, validation_files=5))

    digests = []
    for attempt in range(2):
        workdir = tmp_path / 'attempt{}'.format(attempt)
        corpus = generate_pretrain_corpus(refdir, 8, 1234, str(workdir / 'corpus'))
        assert len(corpus) == 320
        pretrained = pretrain(corpus, TrainConfig(batch_size=16, seed=1234))
        assert pretrained.meta['epochs'] == 24
        assert pretrained.meta['train_loss'][-1] < pretrained.meta['train_loss'][0]

        best, records = finetune(pretrained, [toy], [toy],
                                 TrainConfig(finetune_max_epochs=10, early_stop_patience=3, batch_size=4, runs=2,
                                             seed=1234))
        assert len(records) == 2
        digests.append(file_digest(write_checkpoint(best, str(workdir / 'best.ckpt'))))
    assert digests[0] == digests[1]
