#! /usr/bin/env python

"""Exception classes raised by naturalmos.

The command line maps each family to an exit code: ``UsageError`` to 1,
``DataError`` to 2 and ``NumericError`` to 3.
"""


class NaturalMosError(Exception):
    """Base class of all naturalmos errors"""


class UsageError(NaturalMosError):
    """Bad command line flags or configuration values"""


class DataError(NaturalMosError, ValueError):
    """Input data that cannot be used"""


class UnsupportedFormatError(DataError):
    """Audio encoding other than 16-bit PCM"""


class TruncatedAudioError(DataError):
    """WAV file whose data chunk ends early"""


class ManifestError(DataError):
    """Malformed or inconsistent dataset manifest.

    Parameters
    ----------
    message : str
        Description of the problem

    row : int
        1-based data row number, if the problem is tied to a row
    """
    def __init__(self, message, row=None):
        if row is not None:
            message = 'row {}: {}'.format(row, message)
        super().__init__(message)
        self.row = row


class CheckpointError(DataError):
    """Checkpoint file with a bad version, digest or length"""


class NumericError(NaturalMosError, ArithmeticError):
    """Non-finite loss or gradient during training"""
