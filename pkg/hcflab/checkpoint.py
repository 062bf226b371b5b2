"""Checkpoint files: `HCFC` magic, a varint length, one serialized Checkpoint message."""

import io
import logging
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from google.protobuf import json_format
from google.protobuf.message import DecodeError

from . import varint, wire
from .common import CheckpointError
from .config import dump_config
from .grid import TorusGrid

logger = logging.getLogger(__name__)

MAGIC = b"HCFC"
VERSION = 2
_FLOAT = np.dtype('<f8')


def encode_array(a, message=None):
    """Fill an Array message from a real or complex ndarray."""
    message = wire.Array() if message is None else message
    a = np.asarray(a)
    message.shape.extend(int(s) for s in a.shape)
    message.real = np.ascontiguousarray(a.real, dtype=_FLOAT).tobytes()
    if np.iscomplexobj(a):
        message.imag = np.ascontiguousarray(a.imag, dtype=_FLOAT).tobytes()
    return message


def decode_array(message):
    shape = tuple(message.shape)
    count = int(np.prod(shape)) if shape else 1
    if len(message.real) != count * _FLOAT.itemsize or (message.imag and len(message.imag) != len(message.real)):
        raise CheckpointError("array payload does not match its shape {0}".format(shape))
    real = np.frombuffer(message.real, dtype=_FLOAT).reshape(shape)
    if not message.imag:
        return real.astype(float)
    out = np.empty(shape, dtype=complex)
    out.real = real
    out.imag = np.frombuffer(message.imag, dtype=_FLOAT).reshape(shape)
    return out


def _nan_if_none(value):
    return float('nan') if value is None else float(value)


def _none_if_nan(value):
    return None if np.isnan(value) else float(value)


@dataclass(eq=False)
class MonitorSnapshot:
    """Monitor state a resumed run needs to report like an uninterrupted one.

    `doubling` has one (t, K, F) row per observation up to and including
    the checkpointed step.
    """
    doubling: np.ndarray
    smp_assertion_mode: bool = False
    smp_violated_at: Optional[float] = None
    held_until: Optional[float] = None
    held_broken: bool = False
    torsion_max: float = 0.0
    dt_rule_respected: bool = True

    def to_message(self, message=None):
        message = wire.MonitorState() if message is None else message
        encode_array(np.asarray(self.doubling, dtype=float).reshape(-1, 3), message.doubling)
        message.smp_assertion_mode = self.smp_assertion_mode
        message.smp_violated_at = _nan_if_none(self.smp_violated_at)
        message.held_until = _nan_if_none(self.held_until)
        message.held_broken = self.held_broken
        message.torsion_max = self.torsion_max
        message.dt_rule_respected = self.dt_rule_respected
        return message

    @classmethod
    def from_message(cls, msg):
        doubling = decode_array(msg.doubling)
        if doubling.ndim != 2 or doubling.shape[1] != 3 or np.iscomplexobj(doubling):
            raise CheckpointError("doubling series of shape {0} is not a (rows, 3) real table".format(
                doubling.shape))
        return cls(doubling, msg.smp_assertion_mode, _none_if_nan(msg.smp_violated_at),
                   _none_if_nan(msg.held_until), msg.held_broken, msg.torsion_max, msg.dt_rule_respected)


@dataclass(eq=False)
class CheckpointData:
    """A saved flow state with the identity of the run that produced it."""
    name: str
    config_hash: str
    seed: int
    t: float
    step: int
    K0: float
    grid: TorusGrid
    metric: np.ndarray
    phi: Optional[np.ndarray] = None
    config_yaml: str = ""
    monitors: Optional[MonitorSnapshot] = None

    @classmethod
    def from_state(cls, state, config, config_hash, K0, monitors=None):
        """Copy a FlowState so the live state can move on while this is written."""
        phi = None if state.phi is None else np.array(state.phi, copy=True)
        return cls(config.name, config_hash, config.seed, state.t, state.step_count, K0,
                   state.grid, np.array(state.metric.data, copy=True), phi, dump_config(config), monitors)

    def to_message(self):
        msg = wire.Checkpoint(version=VERSION, config_hash=self.config_hash, seed=self.seed, name=self.name,
                              t=self.t, step=self.step, k0=self.K0, config_yaml=self.config_yaml)
        msg.grid.n = self.grid.n
        msg.grid.resolution = self.grid.resolution
        msg.grid.periods.extend(self.grid.periods)
        msg.grid.derivative_mode = self.grid.derivative_mode
        encode_array(self.metric, msg.metric)
        if self.phi is not None:
            encode_array(self.phi, msg.phi)
        if self.monitors is not None:
            self.monitors.to_message(msg.monitors)
        return msg

    @classmethod
    def from_message(cls, msg):
        if msg.version > VERSION:
            raise CheckpointError("checkpoint version {0} is newer than this reader ({1})".format(msg.version, VERSION))
        try:
            grid = TorusGrid(msg.grid.n, msg.grid.resolution, tuple(msg.grid.periods), msg.grid.derivative_mode)
        except ValueError as err:
            raise CheckpointError("checkpoint grid descriptor is invalid: {0}".format(err))
        metric = decode_array(msg.metric)
        if metric.shape != grid.shape + (grid.n, grid.n):
            raise CheckpointError("metric of shape {0} does not fit grid {1}".format(metric.shape, grid.shape))
        phi = decode_array(msg.phi) if msg.HasField("phi") else None
        if phi is not None and phi.shape != grid.shape:
            raise CheckpointError("heat field of shape {0} does not fit grid {1}".format(phi.shape, grid.shape))
        monitors = MonitorSnapshot.from_message(msg.monitors) if msg.HasField("monitors") else None
        return cls(msg.name, msg.config_hash, msg.seed, msg.t, msg.step, msg.k0, grid, metric, phi,
                   msg.config_yaml, monitors)


def save_checkpoint(path, data):
    """Write `data` to `path` through a temporary file.

    Returns: path.
    """
    payload = data.to_message().SerializeToString()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, 'wb') as f:
        f.write(MAGIC)
        f.write(varint.encode(len(payload)))
        f.write(payload)
    os.replace(tmp, path)
    return path


def _read_message(path):
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as err:
        raise CheckpointError("cannot read checkpoint {0}: {1}".format(path, err))
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError("{0} is not a checkpoint (bad magic)".format(path))
    stream = io.BytesIO(raw[len(MAGIC):])
    try:
        length = varint.decode(stream)
    except (EOFError, ValueError) as err:
        raise CheckpointError("{0} is truncated: {1}".format(path, err))
    payload = stream.read()
    if len(payload) != length:
        raise CheckpointError("{0} is corrupt: expected {1} payload bytes, found {2}".format(
            path, length, len(payload)))
    msg = wire.Checkpoint()
    try:
        msg.ParseFromString(payload)
    except DecodeError as err:
        raise CheckpointError("{0} is corrupt: {1}".format(path, err))
    return msg


def load_checkpoint(path):
    data = CheckpointData.from_message(_read_message(path))
    logger.info("Loaded checkpoint %s: step %d, t=%.6g", path, data.step, data.t)
    return data


def inspect_checkpoint(path):
    """Checkpoint header as a JSON-ready dict; array payloads are reduced to their shapes."""
    msg = _read_message(path)
    shapes = {"metric": list(msg.metric.shape)}
    if msg.HasField("phi"):
        shapes["phi"] = list(msg.phi.shape)
    if msg.HasField("monitors"):
        shapes["doubling"] = list(msg.monitors.doubling.shape)
        msg.monitors.ClearField("doubling")
    msg.ClearField("metric")
    msg.ClearField("phi")
    header = json_format.MessageToDict(msg, preserving_proto_field_name=True)
    header["arrays"] = shapes
    return header


def check_compatible(data, config, config_hash, force=False):
    """Refuse to resume `data` under a configuration describing another run."""
    gc = config.grid
    wanted = TorusGrid(gc.n, gc.resolution, gc.periods, gc.derivative_mode)
    if wanted != data.grid:
        raise CheckpointError("checkpoint grid (n={0}, resolution={1}, {2}) is incompatible with the "
                              "configured grid (n={3}, resolution={4}, {5})".format(
                                  data.grid.n, data.grid.resolution, data.grid.derivative_mode,
                                  wanted.n, wanted.resolution, wanted.derivative_mode))
    if data.config_hash != config_hash:
        if not force:
            raise CheckpointError("configuration hash {0} does not match checkpoint hash {1}; "
                                  "use --force to resume anyway".format(config_hash[:12], data.config_hash[:12]))
        logger.warning("Resuming despite configuration hash mismatch (%s != %s)",
                       config_hash[:12], data.config_hash[:12])


def latest_checkpoint(directory):
    """Newest checkpoint-*.hcfc under `directory`, or None."""
    try:
        names = sorted(f for f in os.listdir(directory) if f.startswith("checkpoint-") and f.endswith(".hcfc"))
    except FileNotFoundError:
        return None
    return os.path.join(directory, names[-1]) if names else None
