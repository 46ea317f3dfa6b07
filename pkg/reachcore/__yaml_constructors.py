"""YAML tags for boxes and controller networks in run configuration files."""
from pathlib import Path

import yaml

from . import DATA_PATH
from .interval import IntervalVector
from .nn import load_network


def box_constructor(loader, node):
    """Construct an :class:`~.interval.IntervalVector` from ``[lo, hi]`` pairs."""
    pairs = loader.construct_sequence(node, deep=True)
    try:
        return IntervalVector.from_pairs(pairs)
    except (TypeError, ValueError):
        raise ValueError(
            f"A !box must be a list of [lo, hi] pairs with lo <= hi, got {pairs}. "
            "Please check your configuration file."
        )


yaml.add_constructor("!box", box_constructor, yaml.FullLoader)


def network_constructor(loader, node):
    """Load a weights file; relative paths are looked up in the package data."""
    datafile = Path(loader.construct_scalar(node))
    if not datafile.is_absolute() and not datafile.exists():
        datafile = DATA_PATH / datafile
    if not datafile.exists():
        raise ValueError(
            f"The network file {datafile} does not exist. "
            "Please check your configuration file."
        )
    return load_network(datafile)


yaml.add_constructor("!network", network_constructor, yaml.FullLoader)
