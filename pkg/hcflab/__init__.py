"""The hcflab package."""

__version__ = '0.1.0'

from .common import (HcfError, ConfigError, NumericalError, PositivityError, SingularMetricError,
                     OverflowFlowError, CheckFailure, StorageError, CheckpointError, setup_logging)
from . import varint
from .grid import TorusGrid, TensorField, MetricField, Slot, partial_holo, partial_anti, convergence_probe
from .chern import ChernPackage, chern_package, covariant_derivative, laplacian
from .config import RunConfig, load_config, config_hash
from .flow import FlowState, step_hcf, run_flow
