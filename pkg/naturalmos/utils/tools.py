#!/usr/bin/env python
'''
Small helpers shared by the naturalmos modules: directory handling,
the flat key = value configuration class and the keyed random streams.
'''

import hashlib
import logging
import os
import re
import zlib

import numpy as np
import yaml

from naturalmos.utils.constants import CONFIG_TYPES, DEFAULT_CONFIG_FILE, SEED_ENV_VAR
from naturalmos.utils.exceptions import UsageError

logger = logging.getLogger('naturalmos.tools')


def makepath(path, raiseError=True):
    if path == '' or path is None:
        return(0)
    if not os.path.isdir(path):
        os.makedirs(path, exist_ok=True)
        if not os.path.isdir(path):
            if raiseError:
                raise RuntimeError('ERROR: Cannot create directory {}'.format(path))
            else:
                return(1)
    return(0)


def makepath4file(filename, raiseError=True):
    path = os.path.dirname(filename)
    if path and not os.path.isdir(path):
        return(makepath(path, raiseError=raiseError))
    else:
        return(0)


def hash_lines(lines):
    """Short SHA-256 fingerprint of configuration lines"""
    return hashlib.sha256('\n'.join(lines).encode('utf-8')).hexdigest()[:16]


def make_rng(seed, purpose, index=0):
    """Return an independent random stream keyed by (seed, purpose, index).

    The stream uses the counter-based Philox generator, so the numbers
    drawn for one key never depend on how many numbers were drawn for
    any other key.

    Parameters
    ----------
    seed : int
        Non-negative run seed

    purpose : str
        Name of the consumer, e.g. 'init', 'shuffle', 'dropout', 'degrade'

    index : int
        Counter within the purpose (epoch, step, file index, ...)

    Returns
    -------
    rng : numpy.random.Generator
    """
    if int(seed) < 0 or int(index) < 0:
        raise ValueError('seed and index must be non-negative, got {} and {}'.format(seed, index))
    key = zlib.crc32(purpose.encode('utf-8'))
    sequence = np.random.SeedSequence([int(seed), key, int(index)])
    return np.random.Generator(np.random.Philox(sequence))


class CliConfig:
    """Effective configuration of one naturalmos command.

    Values start at the shipped ``naturalmos.cfg`` and are overridden,
    in this order, by the ``NATURALMOS_SEED`` environment variable, a
    flat ``key = value`` config file, ``-p key value`` pairs and finally
    dedicated command line flags. Unknown keys are rejected.
    """
    def __init__(self, defaultcfgfile=DEFAULT_CONFIG_FILE):
        self.params = {}
        self.sources = {}
        self.envvarpattern = re.compile(r'\$(\w+)')
        self.linepattern = re.compile(r'^\s*([A-Za-z_]\w*)\s*[=:]\s*(.*?)\s*$')
        self.loadcfgfile(defaultcfgfile, source='default')
        missing = sorted(set(CONFIG_TYPES) - set(self.params))
        if missing:
            raise RuntimeError('ERROR: default config file {} does not set {}'.format(
                defaultcfgfile, ', '.join(missing)))

    def error(self, errormsg):
        raise UsageError(errormsg)

    def __getitem__(self, key):
        return self.params[key]

    def as_dict(self):
        return dict(self.params)

    def subenvvarplaceholder(self, text):
        """Substitute $NAME environment variables in a string"""
        for name in self.envvarpattern.findall(text):
            if name not in os.environ:
                self.error('environment variable {} used in config file, but not set!'.format(name))
            text = re.sub(r'\${}'.format(name), os.environ[name], text)
        return text

    def parse_value(self, param, text):
        """Convert the text of a value to the type of the parameter.

        We use yaml.safe_load so that integers, floats and booleans are
        correctly converted.
        """
        try:
            value = yaml.safe_load(self.subenvvarplaceholder(str(text)))
        except yaml.YAMLError as err:
            self.error('cannot parse value {!r} for parameter {}: {}'.format(text, param, err))
        return self.check_type(param, value)

    def check_type(self, param, value):
        kind = CONFIG_TYPES[param]
        if kind is bool:
            if not isinstance(value, bool):
                self.error('parameter {} must be true or false, got {!r}'.format(param, value))
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                self.error('parameter {} must be an integer, got {!r}'.format(param, value))
        elif kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.error('parameter {} must be a number, got {!r}'.format(param, value))
            value = float(value)
        return value

    def setval(self, param, val, source='command line'):
        if param not in CONFIG_TYPES:
            self.error('parameter {} does not exist! Known parameters: {}'.format(
                param, ', '.join(sorted(CONFIG_TYPES))))
        if isinstance(val, str):
            val = self.parse_value(param, val)
        else:
            val = self.check_type(param, val)
        if param == 'seed' and val < 0:
            self.error('seed must be non-negative, got {}'.format(val))
        self.params[param] = val
        self.sources[param] = source
        return(0)

    def setvals(self, param_val_list, source='command line'):
        if param_val_list is None:
            return(0)
        for (param, val) in param_val_list:
            self.setval(param, val, source=source)
        return(0)

    def apply_environment(self):
        """Use NATURALMOS_SEED as the lowest-precedence seed source"""
        if SEED_ENV_VAR in os.environ:
            self.setval('seed', os.environ[SEED_ENV_VAR], source='environment')

    def loadcfgfile(self, filename, source=None):
        """Read a flat ``key = value`` config file.

        Lines starting with # and blank lines are skipped; ``key: value``
        is accepted as well. ``source`` labels the values, defaulting to
        the file name.
        """
        if filename is None:
            return(0)
        if source is None:
            source = filename
        if not os.path.isfile(filename):
            self.error('config file {} does not exist'.format(filename))
        with open(filename, 'r', encoding='utf-8') as cfg:
            for lineno, line in enumerate(cfg, start=1):
                stripped = line.strip()
                if not stripped or stripped.startswith('#'):
                    continue
                match = self.linepattern.match(stripped)
                if match is None:
                    self.error('{}:{}: expected "key = value", got {!r}'.format(filename, lineno, stripped))
                self.setval(match.group(1), match.group(2), source=source)
        return(0)

    def lines(self):
        """Sorted ``key = value`` lines of the effective configuration"""
        return ['{} = {}'.format(key, str(self.params[key]).lower() if isinstance(self.params[key], bool)
                                 else self.params[key]) for key in sorted(self.params)]

    def config_hash(self):
        return hash_lines(self.lines())

    def log_seed(self):
        logger.info('Using seed {} (source: {})'.format(self.params['seed'], self.sources['seed']))
