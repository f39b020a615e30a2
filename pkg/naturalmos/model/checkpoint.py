#! /usr/bin/env python

"""Binary checkpoint files.

Layout (little endian)::

    b'NMOS'                         magic
    u32                             format version
    u32                             header length in bytes
    header                          UTF-8 JSON, sorted keys
    tensor records, in header order:
        u16 name length, name, u8 ndim, ndim x u32 dims, float32 data
    8 bytes                         BLAKE2b digest of everything above

The header holds the architecture hyperparameters, the model seed, the
caller's metadata (training stage, configuration, ...) and the name and
shape of every tensor record. Batch-norm statistics are stored as
``buffer/<name>`` records and optional Adam moments as ``optim.m/<name>``
and ``optim.v/<name>``.

Use
---
    ::

        from naturalmos.model.checkpoint import load_checkpoint, save_checkpoint
        save_checkpoint(model, {'stage': 'pretrain'}, 'pretrain.ckpt')
        model = load_checkpoint('pretrain.ckpt')
"""

from dataclasses import dataclass
import hashlib
import json
import logging
import os
import struct

import numpy as np

from naturalmos.model.network import NisqaTtsModel
from naturalmos.utils.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from naturalmos.utils.exceptions import CheckpointError
from naturalmos.utils.tools import makepath4file

logger = logging.getLogger('naturalmos.model.checkpoint')

DIGEST_SIZE = 8
PREAMBLE = struct.Struct('<4sII')
BUFFER_PREFIX = 'buffer/'
MOMENT_PREFIXES = {'m': 'optim.m/', 'v': 'optim.v/'}


@dataclass
class ModelCheckpoint:
    model: NisqaTtsModel
    meta: dict
    optimizer_state: dict = None
    path: str = None


def digest(data):
    return hashlib.blake2b(data, digest_size=DIGEST_SIZE).digest()


def encode_record(name, array):
    name_bytes = name.encode('utf-8')
    array = np.ascontiguousarray(array, dtype='<f4')
    return b''.join([struct.pack('<H', len(name_bytes)), name_bytes, struct.pack('<B', array.ndim),
                     struct.pack('<{}I'.format(array.ndim), *array.shape), array.tobytes()])


def record_size(name, shape):
    return 2 + len(name.encode('utf-8')) + 1 + 4 * len(shape) + 4 * int(np.prod(shape, dtype=np.int64))


def save_checkpoint(model, meta, path, optimizer_state=None):
    """Write a model (and optionally its Adam state) to a checkpoint file.

    Parameters
    ----------
    model : NisqaTtsModel
        Model to save

    meta : dict
        JSON serializable metadata, e.g. stage, epochs, seed, config

    path : str
        Output file

    optimizer_state : dict
        ``Adam.state_dict()``; if given, the step count and moments are
        stored too

    Returns
    -------
    path : str
    """
    tensors = [(name, model.params[name].values) for name in model.params]
    tensors += [(BUFFER_PREFIX + name, model.buffers[name]) for name in sorted(model.buffers)]
    optimizer_t = None
    if optimizer_state is not None:
        optimizer_t = int(optimizer_state['t'])
        for key, prefix in MOMENT_PREFIXES.items():
            tensors += [(prefix + name, optimizer_state[key][name]) for name in sorted(optimizer_state[key])]

    header = {'hyperparameters': model.hyperparameters(),
              'meta': meta,
              'optimizer_t': optimizer_t,
              'seed': model.seed,
              'tensors': [[name, list(np.shape(array))] for name, array in tensors],
              'version': CHECKPOINT_VERSION}
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')

    body = b''.join([PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
                    + [encode_record(name, array) for name, array in tensors])
    makepath4file(path)
    try:
        with open(path, 'wb') as fid:
            fid.write(body + digest(body))
    except OSError as err:
        raise CheckpointError('Cannot write checkpoint {}: {}'.format(path, err)) from err
    logger.info('Saved checkpoint {} ({} tensors)'.format(path, len(tensors)))
    return path


def read_preamble(fid, path):
    preamble = fid.read(PREAMBLE.size)
    if len(preamble) < PREAMBLE.size:
        raise CheckpointError('{}: truncated checkpoint preamble'.format(path))
    magic, version, header_length = PREAMBLE.unpack(preamble)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError('{}: not a naturalmos checkpoint (magic {!r})'.format(path, magic))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError('{}: checkpoint format version {} is not supported (expected {})'.format(
            path, version, CHECKPOINT_VERSION))
    header_bytes = fid.read(header_length)
    if len(header_bytes) < header_length:
        raise CheckpointError('{}: truncated checkpoint header'.format(path))
    try:
        header = json.loads(header_bytes.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as err:
        raise CheckpointError('{}: unreadable checkpoint header: {}'.format(path, err)) from err
    return header, PREAMBLE.size + header_length


def inspect_checkpoint(path):
    """Return the header of a checkpoint without decoding any tensor"""
    if not os.path.isfile(path):
        raise FileNotFoundError('ERROR: Checkpoint {} does not exist'.format(path))
    with open(path, 'rb') as fid:
        header, _ = read_preamble(fid, path)
    return header


def read_checkpoint(path):
    """Read a checkpoint file.

    Parameters
    ----------
    path : str
        Checkpoint file

    Returns
    -------
    checkpoint : ModelCheckpoint
        Model with all parameters and batch-norm statistics restored,
        the stored metadata and the optimizer state (None if absent)
    """
    if not os.path.isfile(path):
        raise FileNotFoundError('ERROR: Checkpoint {} does not exist'.format(path))
    with open(path, 'rb') as fid:
        header, offset = read_preamble(fid, path)
        fid.seek(0)
        data = fid.read()

    try:
        layout = [(str(name), tuple(int(dim) for dim in shape)) for name, shape in header['tensors']]
        expected = offset + sum(record_size(name, shape) for name, shape in layout) + DIGEST_SIZE
    except (KeyError, TypeError, ValueError) as err:
        raise CheckpointError('{}: malformed checkpoint header: {}'.format(path, err)) from err
    if len(data) < expected:
        raise CheckpointError('{}: truncated checkpoint, {} of {} bytes present'.format(path, len(data), expected))
    if len(data) > expected:
        raise CheckpointError('{}: {} unexpected trailing bytes'.format(path, len(data) - expected))
    if digest(data[:-DIGEST_SIZE]) != data[-DIGEST_SIZE:]:
        raise CheckpointError('{}: digest mismatch, the checkpoint is corrupted'.format(path))

    tensors = {}
    for name, shape in layout:
        name_length, = struct.unpack_from('<H', data, offset)
        offset += 2
        stored_name = data[offset:offset + name_length].decode('utf-8')
        offset += name_length
        ndim, = struct.unpack_from('<B', data, offset)
        offset += 1
        dims = struct.unpack_from('<{}I'.format(ndim), data, offset)
        offset += 4 * ndim
        if stored_name != name or tuple(dims) != shape:
            raise CheckpointError('{}: record {} does not match the header'.format(path, stored_name))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(data, dtype='<f4', count=count, offset=offset).reshape(shape).copy()
        offset += 4 * count

    model = NisqaTtsModel.from_hyperparameters(header['hyperparameters'], seed=header['seed'])
    try:
        model.load_state({'params': {name: tensors[name] for name in model.params},
                          'buffers': {name: tensors[BUFFER_PREFIX + name] for name in model.buffers}})
    except (KeyError, ValueError) as err:
        raise CheckpointError('{}: checkpoint does not fit the stored architecture: {}'.format(path, err)) from err

    optimizer_state = None
    if header.get('optimizer_t') is not None:
        optimizer_state = {'t': header['optimizer_t']}
        for key, prefix in MOMENT_PREFIXES.items():
            optimizer_state[key] = {name[len(prefix):]: value for name, value in tensors.items()
                                    if name.startswith(prefix)}

    logger.info('Loaded checkpoint {}'.format(path))
    return ModelCheckpoint(model, header['meta'], optimizer_state, path)


def load_checkpoint(path):
    """Read a checkpoint and return its model only"""
    return read_checkpoint(path).model


def write_checkpoint(checkpoint, path):
    """Save a ModelCheckpoint, including its optimizer state"""
    checkpoint.path = save_checkpoint(checkpoint.model, checkpoint.meta, path, checkpoint.optimizer_state)
    return checkpoint.path
