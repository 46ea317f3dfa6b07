"""Interval reachability of nonlinear systems under neural network control."""
from pathlib import Path

try:
    from importlib.metadata import version, PackageNotFoundError
except ImportError:
    from importlib_metadata import version, PackageNotFoundError

DATA_PATH = Path(__file__).parent / "data"
CONFIG_PATH = Path(__file__).parent / "config"

try:
    __version__ = version(__name__)
except PackageNotFoundError:
    # package is not installed
    pass


from . import exceptions
from . import interval
from . import symbolic
from . import inclusion
from . import nn
from . import closed_loop
from . import reach
from . import safety
from . import simulate
from . import models
from . import __yaml_constructors
from . import io
from . import cli_utils
from .defaults import defaults
from .components import ReachComponent, component
from .components import get_all_components, get_model, get_models
from .exceptions import ReachError
from .interval import Interval, IntervalMatrix, IntervalVector
from .symbolic import ExprGraph, parse_expr
from .inclusion import (
    InclusionFn,
    estimate_convergence_order,
    intersect_ifn,
    jac_cornered_ifn,
    jac_mixed_cornered_ifn,
    natural_ifn,
)
from .nn import NeuralNetwork, load_network, nn_crown, nn_ibp
from .closed_loop import ClosedLoopIfn, LinearSystem
from .reach import ReachTube, integrate, partition_integrate
from .safety import SafetySpec, check_spec
from .models import get_benchmark, list_benchmarks
