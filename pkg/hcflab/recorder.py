"""Versioned CSV time series of monitor readings.

Each column is registered with the schema version that introduced it; a
reader of version N accepts every file of version <= N and fills the
columns it lacks with NaN.
"""

import csv
import os
import re

import numpy as np
import pandas as pd

from .common import LogMixin, StorageError, values_to_sequence

SCHEMA_VERSION = 2
MAGIC = "# hcflab-timeseries"
_HEADER = re.compile(r"^# hcflab-timeseries v(\d+)(?: config_hash=(\S*))?(?: seed=(\S*))?\s*$")

# name, signature, version introduced, group
TIMESERIES_COLUMNS = [
    ("step", "int", 1, ""),
    ("t", "float", 1, ""),
    ("dt", "float", 1, ""),
    ("K", "float", 1, "norms"),
    ("rm_sup", "float", 1, "norms"),
    ("t_sq_sup", "float", 1, "norms"),
    ("nabla_t_sup", "float", 1, "norms"),
    ("F_sup", "float", 1, "norms"),
    ("ricci_max", "float", 1, "conditions"),
    ("griffiths_max", "float", 1, "conditions"),
    ("pinch_margin", "float", 1, "conditions"),
    ("pinch_margin_eps0", "float", 1, "conditions"),
    ("phi_min", "float", 1, "heat"),
    ("smp_max_eig", "float", 1, "heat"),
    ("cs_margin", "float", 2, "conditions"),
    ("ricci_eps_margin", "float", 2, "conditions"),
    ("kahler_torsion", "float", 2, "norms"),
]


class Column:
    """One CSV column: a named reading pulled from a report by `func`."""
    __slots__ = ["_rec", "id", "name", "grp", "sig", "since", "_func", "_fullname"]

    def __init__(self, rec, id_, name, sig, func, since=1, grp=""):
        self._rec = rec
        self.id = id_
        self.name = name
        self.grp = grp
        self.sig = sig
        self.since = since
        self._func = func
        if grp:
            self._fullname = '.'.join((rec._fullname, grp, name))
        else:
            self._fullname = '.'.join((rec._fullname, name))

    def get_value(self, report):
        """Execute the associated func on `report`; failures give an empty cell."""
        try:
            return self._func(report)
        except Exception:
            self._rec._log_exception("Failed to read column %s.", self._fullname)
            return None


class Recorder(LogMixin):
    """Append-only CSV writer for a run's time series."""

    def __init__(self, path, config_hash="", seed=0, name="recorder"):
        self.path = path
        self.config_hash = config_hash
        self.seed = seed
        self._fullname = "run." + name
        self._groups = [""]
        self._columns = []
        self._file = None
        self._writer = None

    def add_group(self, name):
        self._groups.append(name)

    def add_column(self, name, sig, func, since=1, grp=""):
        """Register a column and add it to group `grp`. If the group does not
        exist, it will be created first.

        Returns: the created Column.
        """
        if self._file is not None:
            raise StorageError("columns cannot be added after the file is open")
        if grp not in self._groups:
            self._groups.append(grp)
        if since > SCHEMA_VERSION:
            raise ValueError("column {0} claims unknown schema version {1}".format(name, since))
        column = Column(self, len(self._columns), name, sig, func, since, grp)
        self._columns.append(column)
        return column

    @property
    def names(self):
        return [c.name for c in self._columns]

    def header_line(self):
        return "{0} v{1} config_hash={2} seed={3}".format(MAGIC, SCHEMA_VERSION, self.config_hash, self.seed)

    def open(self, truncate_from=None):
        """Open the file for appending, writing the header when new.

        With truncate_from, rows whose step is >= truncate_from are dropped
        first, so a resumed run rewrites them deterministically.
        """
        try:
            os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
            exists = os.path.exists(self.path) and os.path.getsize(self.path) > 0
            if exists and truncate_from is not None:
                self._truncate(truncate_from)
            elif exists:
                self._check_header()
            self._file = open(self.path, mode='a' if exists else 'w', buffering=1,
                              encoding='utf-8', newline='')
            self._writer = csv.writer(self._file, lineterminator='\n')
            if not exists:
                self._file.write(self.header_line() + "\n")
                self._writer.writerow(self.names)
        except OSError as err:
            raise StorageError("cannot open time series {0}: {1}".format(self.path, err))
        self._log_debug("Recording %d columns to %s", len(self._columns), self.path)
        return self

    def _check_header(self):
        with open(self.path, encoding='utf-8') as f:
            first = f.readline().rstrip("\n")
            names = f.readline().rstrip("\n").split(",")
        if first != self.header_line() or names != self.names:
            raise StorageError("{0} belongs to another run or schema".format(self.path))

    def _truncate(self, step):
        self._check_header()
        with open(self.path, encoding='utf-8', newline='') as f:
            lines = f.readlines()
        kept = lines[:2] + [line for line in lines[2:] if int(line.split(",", 1)[0]) < step]
        with open(self.path, 'w', encoding='utf-8', newline='') as f:
            f.writelines(kept)
        if len(kept) != len(lines):
            self._log_info("Dropped %d rows at or after step %d", len(lines) - len(kept), step)

    def write(self, report):
        """Evaluate every column on `report` and append one row."""
        if self._writer is None:
            raise StorageError("recorder is not open")
        values = [c.get_value(report) for c in self._columns]
        try:
            self._writer.writerow(list(values_to_sequence(values)))
        except OSError as err:
            raise StorageError("cannot write time series {0}: {1}".format(self.path, err))

    def close(self):
        if self._file:
            self._file.close()
            self._file = None
            self._writer = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def default_recorder(path, config_hash="", seed=0):
    """Recorder with the standard columns read as attributes of a report."""
    rec = Recorder(path, config_hash, seed)
    for name, sig, since, grp in TIMESERIES_COLUMNS:
        rec.add_column(name, sig, lambda report, name=name: getattr(report, name), since, grp)
    return rec


def read_header(path):
    """Parse the schema line of a time-series file.

    Returns: dict with version, config_hash and seed.
    """
    try:
        with open(path, encoding='utf-8') as f:
            first = f.readline().rstrip("\n")
    except OSError as err:
        raise StorageError("cannot read time series {0}: {1}".format(path, err))
    match = _HEADER.match(first)
    if not match:
        raise StorageError("{0} is not an hcflab time series".format(path))
    version = int(match.group(1))
    if version > SCHEMA_VERSION:
        raise StorageError("{0} has schema v{1}; this reader understands up to v{2}".format(
            path, version, SCHEMA_VERSION))
    seed = match.group(3)
    return {"version": version, "config_hash": match.group(2) or "", "seed": int(seed) if seed else None}


def read_timeseries(path):
    """Load a time series of any supported version.

    Returns: (header dict, pandas.DataFrame with every current column).
    """
    header = read_header(path)
    try:
        frame = pd.read_csv(path, skiprows=1)
    except (OSError, ValueError) as err:
        raise StorageError("cannot parse time series {0}: {1}".format(path, err))
    for name, _, since, _ in TIMESERIES_COLUMNS:
        if name not in frame.columns:
            if since <= header["version"]:
                raise StorageError("{0} lacks column {1} required by v{2}".format(path, name, header["version"]))
            frame[name] = np.nan
    return header, frame
