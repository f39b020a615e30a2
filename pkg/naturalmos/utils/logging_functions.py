""" Logging functions for naturalmos

This module configures the logger for the naturalmos package. It also
provides decorators to log the execution of the command line
subcommands.

Use
---

    To log the execution of a function, use:
    ::

        from naturalmos.utils.logging_functions import configure_logging
        from naturalmos.utils.logging_functions import log_info
        from naturalmos.utils.logging_functions import log_fail

        @log_info
        @log_fail
        def my_main_function():
            pass

        if __name__ == '__main__':
            configure_logging('my_module', path='./logs')
            my_main_function()

Notes
-----
    Screen output always goes to stderr so that stdout only carries
    results. A log file is only written when a path is given.
"""

import datetime
import getpass
import importlib
import logging
from logging import StreamHandler
from logging.handlers import RotatingFileHandler
import os
import socket
import sys
import time
import traceback

from functools import wraps

from naturalmos.utils.tools import makepath

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%m/%d/%Y %H:%M:%S %p'

# Packages whose versions are logged by log_info
TRACKED_MODULES = ['numpy', 'scipy', 'astropy', 'matplotlib']


def configure_logging(module, path=None, log_file_level='info', log_screen_level='warning'):
    """Configure the naturalmos logger with a standard logging format.

    Parameters
    ----------
    module : str
        The name of the module being logged.

    path : str
        Directory for the log file. If None, nothing is written to disk.

    log_file_level : str
        Minimum message level to route to the output log file.
        Allowed values: "debug", "info", "warning", "error", "critical"

    log_screen_level : str
        Minimum message level to route to stderr.

    Returns
    -------
    log_file : str
        Name and path of the output log file, or None
    """
    logger = logging.getLogger('naturalmos')
    logger.setLevel(logging.DEBUG)

    # Drop handlers from an earlier call so that messages are not repeated
    for handler in list(logger.handlers):
        if getattr(handler, '_naturalmos_handler', False):
            logger.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT)

    console_handler = StreamHandler(sys.stderr)
    console_handler.setLevel(log_screen_level.upper())
    console_handler.setFormatter(formatter)
    console_handler._naturalmos_handler = True
    logger.addHandler(console_handler)

    log_file = None
    if path is not None:
        makepath(path)
        log_file = make_log_file(module, path=path)
        file_handler = RotatingFileHandler(log_file)
        file_handler.setLevel(log_file_level.upper())
        file_handler.setFormatter(formatter)
        file_handler._naturalmos_handler = True
        logger.addHandler(file_handler)

    return log_file


def make_log_file(module, path='./'):
    """Create the log file name based on the module name.

    The name of the ``log_file`` is a combination of the name of the
    module being logged and the current datetime.

    Parameters
    ----------
    module : str
        The name of the module being logged.

    path : str
        Where to write the log

    Returns
    -------
    log_file : str
        The full path to where the log file will be written to.
    """
    timestamp = datetime.datetime.now().strftime('%Y-%m-%d-%H-%M')
    filename = '{0}_{1}.log'.format(module, timestamp)
    return os.path.join(path, filename)


def log_info(func):
    """Decorator to log useful system information.

    Logs the user environment, the versions of the numerical packages
    and the real and CPU time spent in ``func``.

    Parameters
    ----------
    func : func
        The function to decorate.

    Returns
    -------
    wrapped : func
        The wrapped function.
    """
    logger = logging.getLogger('naturalmos.{}'.format(func.__module__.split('.')[-1]))

    @wraps(func)
    def wrapped(*a, **kw):
        logger.debug('User: {}'.format(getpass.getuser()))
        logger.debug('System: {}'.format(socket.gethostname()))
        logger.debug('Python Version: {}'.format(sys.version.replace('\n', '')))
        logger.debug('Python Executable Path: {}'.format(sys.executable))

        for module in TRACKED_MODULES:
            try:
                mod = importlib.import_module(module)
                logger.debug('{} Version: {}'.format(module, mod.__version__))
            except ImportError as err:
                logger.warning(err)

        t1_cpu = time.process_time()
        t1_time = time.time()
        result = func(*a, **kw)
        t2_cpu = time.process_time()
        t2_time = time.time()

        hours_cpu, remainder_cpu = divmod(t2_cpu - t1_cpu, 60 * 60)
        minutes_cpu, seconds_cpu = divmod(remainder_cpu, 60)
        hours_time, remainder_time = divmod(t2_time - t1_time, 60 * 60)
        minutes_time, seconds_time = divmod(remainder_time, 60)
        logger.info('{0} elapsed real time: {1:.0f}:{2:.0f}:{3:f}'.format(func.__name__, hours_time,
                                                                          minutes_time, seconds_time))
        logger.info('{0} elapsed CPU time: {1:.0f}:{2:.0f}:{3:f}'.format(func.__name__, hours_cpu,
                                                                         minutes_cpu, seconds_cpu))
        return result

    return wrapped


def log_fail(func):
    """Decorator to log crashes in the decorated code.

    The traceback is logged at CRITICAL level and the exception is
    raised again so that callers can map it to an exit code.

    Parameters
    ----------
    func : func
        The function to decorate.

    Returns
    -------
    wrapped : func
        The wrapped function.
    """
    logger = logging.getLogger('naturalmos.{}'.format(func.__module__.split('.')[-1]))

    @wraps(func)
    def wrapped(*a, **kw):
        try:
            result = func(*a, **kw)
        except Exception:
            logger.critical(traceback.format_exc())
            logger.critical('{} CRASHED'.format(func.__name__))
            raise
        logger.info('{} completed successfully'.format(func.__name__))
        return result

    return wrapped
