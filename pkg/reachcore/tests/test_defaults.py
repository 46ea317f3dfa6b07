from os.path import join
from warnings import catch_warnings

import pytest

from reachcore.config import CONFIG_PATH
from reachcore.defaults import PRESETS, defaults
from reachcore.inclusion import natural_ifn
from reachcore.interval import IntervalVector
from reachcore.reach import partition_integrate
from reachcore.symbolic import ExprGraph, var


def test_config_swap():
    defaults.set("full")
    config1 = defaults().copy()
    defaults.set("fast", refresh=True)
    assert config1 != defaults()
    assert defaults.name == "fast"


def test_direct_config_path():
    config = join(CONFIG_PATH, "fast.yaml")
    defaults.set(config, refresh=True)
    assert defaults("max_branches") == 256
    assert defaults()["table1_runs"] == 100


def test_presets_define_the_same_parameters():
    defaults.set("full", refresh=True)
    full = set(defaults())
    defaults.set("fast", refresh=True)
    assert full == set(defaults())
    assert set(PRESETS) == {"full", "fast"}


def test_null_config():
    defaults.set(None, refresh=True)
    assert defaults() == {}
    defaults.deactivate()
    assert not defaults.active


def test_missing_parameter():
    defaults.set("fast", refresh=True)
    with pytest.raises(KeyError):
        defaults("Tsys")


def test_bad_config_type():
    with pytest.raises(ValueError):
        defaults.set(3)


def test_multiple_param_specification():
    config = {0: {"max_branches": 100}, 1: {"max_branches": 200}}
    with catch_warnings(record=True) as w:
        defaults.set(config, refresh=True)
        # make sure that there's an error message
        assert w[0].message != ""
    assert defaults("max_branches") == 200
    defaults.deactivate()


def test_defaults_fill_unset_keywords():
    x = var("x")
    ifn = natural_ifn(ExprGraph([-x], ["x"]))
    box = IntervalVector([0.0], [1.0])
    defaults.set({"t_final": 0.5, "dt": 0.1}, refresh=True)
    assert len(partition_integrate(ifn, box)) == 6
    # explicit keywords win
    assert len(partition_integrate(ifn, box, t_final=0.2)) == 3
    defaults.deactivate()
    assert len(partition_integrate(ifn, box)) == 101


def test_apply():
    defaults.set({"dt": 0.1, "repeat": 3}, refresh=True)
    assert defaults.apply({"dt": 1.0, "scheme": "rk4"}, scheme="euler") == {
        "dt": 0.1,
        "scheme": "euler",
    }
    defaults.deactivate()
    assert defaults.apply({"dt": 1.0}, scheme="euler") == {"scheme": "euler"}
