"""Common classes and routines for hcflab."""

import logging
import os
from collections.abc import Sequence
from datetime import date

import numpy as np

DATEFMT = '%Y-%m-%d %H:%M:%S'
FMT = "[{source}:{levelname}]\t{asctime}\t{name}:\t{message}"


class HcfError(RuntimeError):
    """Root of all failures raised while running a flow or a check."""
    exit_code = 1


class ConfigError(HcfError):
    """Raised when a run configuration cannot be parsed or validated."""
    exit_code = 2

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        if field is not None:
            where = field if line is None else "{0} (line {1})".format(field, line)
            message = "{0}: {1}".format(where, message)
        super().__init__(message)


class NumericalError(HcfError):
    """Raised when the discretized flow leaves the region where it makes sense."""
    exit_code = 3


class PositivityError(NumericalError):
    """The metric stopped being positive definite somewhere on the grid."""

    def __init__(self, message, point=None, eigenvalue=None, t=None):
        self.point = point
        self.eigenvalue = eigenvalue
        self.t = t
        super().__init__(message)


class SingularMetricError(PositivityError):
    """A metric handed to a curvature routine is not positive definite."""


class OverflowFlowError(NumericalError):
    """Non-finite values appeared in the evolving fields."""


class CheckFailure(HcfError):
    """At least one selected residual exceeded its tolerance."""
    exit_code = 4


class StorageError(HcfError):
    """Reading or writing an artifact failed."""
    exit_code = 5


class CheckpointError(StorageError):
    """A checkpoint is corrupt, foreign, or incompatible with the request."""


class GridError(ValueError):
    """Axis out of range, or fields living on different grids."""


class SignatureError(ValueError):
    """Illegal index operation for the slots of a tensor field."""


def values_to_sequence(values):
    """Convert values to a sequence of strings suitable for a CSV row.

    Floats keep their shortest round-tripping representation so that two
    identical runs produce byte-identical files.
    """
    if isinstance(values, (str, bytes)) or not isinstance(values, Sequence):
        values = [values]
    for value in values:
        if value is None:
            yield ''
        elif value is True:
            yield '1'
        elif value is False:
            yield '0'
        elif isinstance(value, (float, np.floating)):
            yield repr(float(value))
        elif isinstance(value, (int, np.integer)):
            yield str(int(value))
        else:
            yield str(value)


class _SourceFilter(logging.Filter):
    """Tag records with a short source label for the record layout."""

    def __init__(self, source):
        super().__init__()
        self._source = source

    def filter(self, record):
        if not hasattr(record, "source"):
            record.source = self._source
        return True


def setup_logging(name, directory=None, verbose=False, source="HCF"):
    """Print all hcflab logs to stderr, and INFO logs to
    `<directory>/log/<name>-<date>.log` when directory is given.

    Returns: the path of the log file or None.
    """
    root = logging.getLogger("hcflab")
    root.setLevel(logging.DEBUG)
    fmt = logging.Formatter(datefmt=DATEFMT, fmt=FMT, style='{')
    for handler in list(root.handlers):
        if getattr(handler, "_hcflab", False):
            root.removeHandler(handler)
            handler.close()

    sthandler = logging.StreamHandler()
    sthandler.setLevel(logging.DEBUG if verbose else logging.INFO)
    sthandler.setFormatter(fmt)
    sthandler.addFilter(_SourceFilter(source))
    sthandler._hcflab = True
    root.addHandler(sthandler)

    if directory is None:
        return None
    logdir = os.path.join(directory, "log")
    os.makedirs(logdir, exist_ok=True)
    logfile = os.path.join(
        logdir, "{name}-{date}{ext}".format(name=name, date=str(date.today()), ext='.log'))
    fhandler = logging.FileHandler(logfile, mode='a', encoding='utf-8')
    fhandler.setLevel(logging.INFO)
    fhandler.setFormatter(fmt)
    fhandler.addFilter(_SourceFilter(source))
    fhandler._hcflab = True
    root.addHandler(fhandler)
    return logfile


class LogMixin:
    """Object-level logging helpers; records are named `hcflab.<fullname>`."""
    _fullname = "run"

    @property
    def _logger(self):
        return logging.getLogger("hcflab").getChild(self._fullname)

    def _log_info(self, msg, *args):
        self._logger.info(msg, *args)

    def _log_debug(self, msg, *args):
        self._logger.debug(msg, *args)

    def _log_warning(self, msg, *args):
        self._logger.warning(msg, *args)

    def _log_error(self, msg, *args):
        self._logger.error(msg, *args)

    def _log_exception(self, msg, *args):
        self._logger.exception(msg, *args)
