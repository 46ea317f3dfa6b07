"""Module for testing the YAML tags of run configuration files."""

import numpy as np
import pytest
import yaml

import reachcore  # noqa: F401  registers the tags
from reachcore.interval import IntervalVector
from reachcore.nn import NeuralNetwork


def test_box_constructor(tmp_path):
    tfile = tmp_path / "test_box.yaml"
    with open(tfile, "w") as f:
        f.write(
            """
            x0: !box [[2.5, 3.0], [-0.25, 0.25]]
            w: !box
                - [0, 0.1]
            """
        )
    with open(tfile, "r") as f:
        mydict = yaml.load(f.read(), Loader=yaml.FullLoader)
    assert mydict["x0"] == IntervalVector([2.5, -0.25], [3.0, 0.25])
    assert isinstance(mydict["w"], IntervalVector)
    assert np.allclose(mydict["w"].hi, [0.1])


@pytest.mark.parametrize("text", ["!box [[1, 0]]", "!box [[0, 1, 2]]", "!box [a, b]"])
def test_bad_box(text):
    with pytest.raises(ValueError) as err:
        yaml.load(f"x0: {text}", Loader=yaml.FullLoader)
    assert "Please check your configuration file" in str(err.value)


def test_network_constructor():
    mydict = yaml.load("nn: !network double_integrator.json", Loader=yaml.FullLoader)
    assert isinstance(mydict["nn"], NeuralNetwork)
    assert mydict["nn"].input_dim == 2


def test_network_constructor_absolute_path(tmp_path):
    path = tmp_path / "net.json"
    path.write_text('{"layers": [{"W": [[1, 2]], "b": [0]}]}')
    mydict = yaml.load(f"nn: !network {path}", Loader=yaml.FullLoader)
    assert np.allclose(mydict["nn"]([1.0, 1.0]), [3.0])


def test_missing_network():
    with pytest.raises(ValueError) as err:
        yaml.load("nn: !network no_such_net.json", Loader=yaml.FullLoader)
    assert "does not exist" in str(err.value)
