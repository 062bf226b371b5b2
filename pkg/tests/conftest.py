import textwrap

import numpy as np
import pytest

from hcflab.grid import TorusGrid
from hcflab.presets import build_preset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def flat_grid():
    return TorusGrid(1, 16)


@pytest.fixture(scope="module")
def conformal_1d():
    """Dimension-one conformal metric, well resolved."""
    return build_preset("conformal", TorusGrid(1, 32), amplitude=0.1, max_mode=1, seed=3)


@pytest.fixture(scope="module")
def non_kahler_2d():
    return build_preset("non_kahler", TorusGrid(2, 16), amplitude=0.01, max_mode=1, seed=5)


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML run configuration under tmp_path; output goes to tmp_path/runs."""

    def write(body, name="run.yaml"):
        text = textwrap.dedent(body)
        text += "\noutput:\n  directory: {0}\n".format(tmp_path / "runs")
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return write
