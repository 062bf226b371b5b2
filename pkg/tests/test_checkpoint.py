import io

import numpy as np
import pytest

from hcflab import varint
from hcflab.checkpoint import (MAGIC, CheckpointData, MonitorSnapshot, check_compatible, inspect_checkpoint,
                               latest_checkpoint, load_checkpoint, save_checkpoint)
from hcflab.common import CheckpointError, StorageError
from hcflab.config import config_hash, parse_config
from hcflab.flow import FlowState
from hcflab.grid import MetricField, TorusGrid
from hcflab.presets import build_preset


@pytest.fixture
def config():
    return parse_config("name: demo\nseed: 3\npreset: {name: conformal}\ngrid: {n: 1, resolution: 8}")


@pytest.fixture
def data(config):
    preset = build_preset("conformal", TorusGrid(1, 8), amplitude=0.1, seed=3)
    phi = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    state = FlowState(0.125, preset.metric, 12, phi)
    return CheckpointData.from_state(state, config, config_hash(config), 0.75)


def test_round_trip(tmp_path, data):
    path = save_checkpoint(str(tmp_path / "ck" / "checkpoint-000012.hcfc"), data)
    loaded = load_checkpoint(path)
    assert (loaded.name, loaded.seed, loaded.t, loaded.step, loaded.K0) == ("demo", 3, 0.125, 12, 0.75)
    assert loaded.config_hash == data.config_hash
    assert loaded.grid == data.grid
    assert np.array_equal(loaded.metric, data.metric)
    assert np.iscomplexobj(loaded.metric)
    assert np.array_equal(loaded.phi, data.phi)
    assert not np.iscomplexobj(loaded.phi)
    assert parse_config(loaded.config_yaml).name == "demo"
    state = FlowState.from_checkpoint(loaded)
    assert state.step_count == 12 and state.t == 0.125


def test_from_state_copies(config):
    metric = MetricField.flat(TorusGrid(1, 8))
    phi = np.ones((8, 8))
    snapshot = CheckpointData.from_state(FlowState(0.0, metric, 0, phi), config, "h", 1.0)
    phi[0, 0] = 5.0
    assert snapshot.phi[0, 0] == 1.0


def test_without_heat_field(tmp_path, config):
    metric = MetricField.flat(TorusGrid(1, 8))
    data = CheckpointData.from_state(FlowState(0.0, metric), config, "h", 1.0)
    loaded = load_checkpoint(save_checkpoint(str(tmp_path / "a.hcfc"), data))
    assert loaded.phi is None
    assert loaded.monitors is None


def test_monitor_state_survives(tmp_path, config):
    metric = MetricField.flat(TorusGrid(1, 8))
    rows = np.array([[0.0, 2.0, 4.0], [0.1, 1.9, 3.5]])
    monitors = MonitorSnapshot(rows, smp_assertion_mode=True, held_until=0.1, held_broken=True,
                               torsion_max=0.25, dt_rule_respected=False)
    data = CheckpointData.from_state(FlowState(0.1, metric, 1), config, "h", 2.0, monitors)
    path = save_checkpoint(str(tmp_path / "m.hcfc"), data)
    loaded = load_checkpoint(path).monitors
    np.testing.assert_array_equal(loaded.doubling, rows)
    assert loaded.smp_assertion_mode
    assert loaded.smp_violated_at is None
    assert loaded.held_until == 0.1
    assert loaded.held_broken
    assert loaded.torsion_max == 0.25
    assert not loaded.dt_rule_respected
    header = inspect_checkpoint(path)
    assert header["arrays"]["doubling"] == [2, 3]
    assert header["monitors"]["smp_assertion_mode"] is True


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.hcfc"
    path.write_bytes(b"NOPE" + varint.encode(0))
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(str(path))


def test_truncated_and_corrupt(tmp_path, data):
    path = save_checkpoint(str(tmp_path / "good.hcfc"), data)
    raw = open(path, 'rb').read()
    short = tmp_path / "short.hcfc"
    short.write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(str(short))
    header_only = tmp_path / "header.hcfc"
    header_only.write_bytes(MAGIC)
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(str(header_only))
    garbage = tmp_path / "garbage.hcfc"
    garbage.write_bytes(MAGIC + varint.encode(8) + b"\xff" * 8)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(garbage))


def test_missing_file_is_a_storage_error(tmp_path):
    with pytest.raises(StorageError) as info:
        load_checkpoint(str(tmp_path / "none.hcfc"))
    assert info.value.exit_code == 5


def test_inspect(tmp_path, data):
    path = save_checkpoint(str(tmp_path / "checkpoint-000012.hcfc"), data)
    header = inspect_checkpoint(path)
    assert header["name"] == "demo"
    assert header["step"] == "12"
    assert header["seed"] == "3"
    assert header["grid"]["resolution"] == 8
    assert header["arrays"] == {"metric": [8, 8, 1, 1], "phi": [8, 8]}
    assert "metric" not in header and "phi" not in header


def test_check_compatible(data, config):
    check_compatible(data, config, data.config_hash)
    other = parse_config("name: demo\nseed: 4\npreset: {name: conformal}\ngrid: {n: 1, resolution: 8}")
    with pytest.raises(CheckpointError, match="--force"):
        check_compatible(data, other, config_hash(other))
    check_compatible(data, other, config_hash(other), force=True)
    finer = parse_config("grid: {n: 1, resolution: 16}")
    with pytest.raises(CheckpointError, match="incompatible"):
        check_compatible(data, finer, data.config_hash, force=True)


def test_latest_checkpoint(tmp_path, data):
    assert latest_checkpoint(str(tmp_path / "nothing")) is None
    assert latest_checkpoint(str(tmp_path)) is None
    for step in (2, 10, 4):
        save_checkpoint(str(tmp_path / "checkpoint-{0:06d}.hcfc".format(step)), data)
    (tmp_path / "notes.txt").write_text("x")
    assert latest_checkpoint(str(tmp_path)).endswith("checkpoint-000010.hcfc")


@pytest.mark.parametrize("number,encoded", [(0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"), (300, b"\xac\x02")])
def test_varint(number, encoded):
    assert varint.encode(number) == encoded
    assert varint.decode(io.BytesIO(encoded + b"tail")) == number


def test_varint_errors():
    with pytest.raises(ValueError):
        varint.encode(-1)
    with pytest.raises(EOFError):
        varint.decode(io.BytesIO(b"\x80"))
    with pytest.raises(ValueError):
        varint.decode(io.BytesIO(b"\xff" * 10))
