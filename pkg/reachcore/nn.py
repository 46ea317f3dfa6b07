"""Feedforward networks and bounds on their outputs over input boxes.

Two bound generators are provided: :func:`nn_ibp` pushes intervals through
the layers in numpy, and :func:`nn_crown` asks auto_LiRPA for CROWN bounds,
affine lower and upper bounds valid on the whole input box.
"""
from __future__ import annotations

import json
import logging
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from os import PathLike
from typing import Dict, Optional, Sequence, Union

import numpy as np
import torch
from auto_LiRPA import BoundedModule, BoundedTensor
from auto_LiRPA.perturbations import PerturbationLpNorm
from cached_property import threaded_cached_property
from scipy.special import expit

from .exceptions import (
    DimChainError,
    DimensionMismatch,
    OutsideLocalization,
    SchemaError,
    UnsupportedActivation,
)
from .inclusion import InclusionFn
from .interval import IntervalVector, elem_bounds, linear_map_bounds

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")

_FORWARD = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": expit,
    "identity": lambda z: z,
}


@dataclass(frozen=True)
class Layer:
    """``act(W @ x + b)``."""

    W: np.ndarray
    b: np.ndarray
    act: str = "identity"

    @property
    def shape(self):
        return self.W.shape


class NeuralNetwork:
    """A feedforward network; the last layer must be affine.

    Parameters
    ----------
    layers
        Layers applied in order.
    metadata
        Free-form information carried along, e.g. stored reference pairs.
    """

    def __init__(self, layers: Sequence[Layer], metadata: Optional[dict] = None):
        if not layers:
            raise SchemaError("A network needs at least one layer.")
        layers = [
            Layer(
                np.atleast_2d(np.asarray(layer.W, dtype=float)),
                np.asarray(layer.b, dtype=float).reshape(-1),
                layer.act,
            )
            for layer in layers
        ]
        for k, layer in enumerate(layers):
            if layer.act not in ACTIVATIONS:
                raise UnsupportedActivation(
                    f"Layer {k} uses '{layer.act}'; supported: "
                    f"{', '.join(ACTIVATIONS)}."
                )
            if layer.b.size != layer.W.shape[0]:
                raise DimChainError(
                    f"Layer {k} has {layer.W.shape[0]} rows but {layer.b.size} biases."
                )
            if k and layer.W.shape[1] != layers[k - 1].W.shape[0]:
                raise DimChainError(
                    f"Layer {k} expects {layer.W.shape[1]} inputs but layer {k - 1} "
                    f"produces {layers[k - 1].W.shape[0]}."
                )
        if layers[-1].act != "identity":
            raise SchemaError("The last layer must use the identity activation.")
        self.layers = tuple(layers)
        self.metadata = dict(metadata or {})
        if any(layer.act == "sigmoid" for layer in layers):
            # slopes of the logistic function already lie in [0, 1/4]
            self.metadata.setdefault("sigmoid", "logistic, co-domain (0, 1)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    @property
    def is_linear(self) -> bool:
        return all(layer.act == "identity" for layer in self.layers)

    @threaded_cached_property
    def bounded(self) -> _BoundedNetwork:
        return _BoundedNetwork(self)

    def __call__(self, x) -> np.ndarray:
        """Forward pass on points of shape ``(..., input_dim)``."""
        a = np.asarray(x, dtype=float)
        if a.shape[-1] != self.input_dim:
            raise DimensionMismatch(
                f"Network expects {self.input_dim} inputs, got shape {a.shape}."
            )
        for layer in self.layers:
            a = _FORWARD[layer.act](a @ layer.W.T + layer.b)
        return a

    def with_input_map(self, F, g=None) -> NeuralNetwork:
        """The network ``x -> N(F x + g)`` with the map folded into layer 0."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        g = np.zeros(F.shape[0]) if g is None else np.asarray(g, dtype=float)
        if F.shape[0] != self.input_dim:
            raise DimChainError(
                f"Input map produces {F.shape[0]} features, network takes "
                f"{self.input_dim}."
            )
        first = self.layers[0]
        folded = Layer(first.W @ F, first.W @ g + first.b, first.act)
        meta = dict(self.metadata)
        meta.pop("reference", None)
        meta["input_map"] = {"F": F.tolist(), "g": g.tolist()}
        return NeuralNetwork((folded,) + self.layers[1:], meta)

    def to_doc(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {"W": layer.W.tolist(), "b": layer.b.tolist(), "act": layer.act}
                for layer in self.layers
            ],
        }

    def __repr__(self):
        dims = [self.input_dim] + [layer.W.shape[0] for layer in self.layers]
        acts = [layer.act for layer in self.layers]
        return f"NeuralNetwork({'x'.join(map(str, dims))}, {acts})"


def load_network(doc: Union[dict, str, PathLike]) -> NeuralNetwork:
    """Build a network from a weights document or the path to one."""
    if not isinstance(doc, dict):
        with open(doc, "r") as fl:
            doc = json.load(fl)
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise SchemaError("A weights document needs a nonempty 'layers' list.")
    parsed = []
    for k, entry in enumerate(layers):
        if not isinstance(entry, dict) or not {"W", "b"} <= set(entry):
            raise SchemaError(f"Layer {k} must be an object with 'W' and 'b'.")
        try:
            W = np.array(entry["W"], dtype=float)
            b = np.array(entry["b"], dtype=float)
        except (TypeError, ValueError):
            raise SchemaError(f"Layer {k} has non-numeric weights.")
        if W.ndim != 2 or b.ndim != 1:
            raise SchemaError(
                f"Layer {k}: 'W' must be a matrix and 'b' a vector, got "
                f"{W.ndim}-D and {b.ndim}-D."
            )
        parsed.append(Layer(W, b, entry.get("act", "identity")))
    if "input_dim" in doc and doc["input_dim"] != parsed[0].W.shape[1]:
        raise DimChainError(
            f"'input_dim' is {doc['input_dim']} but layer 0 takes "
            f"{parsed[0].W.shape[1]} inputs."
        )
    metadata = {k: v for k, v in doc.items() if k not in ("layers", "input_dim")}
    return NeuralNetwork(parsed, metadata)


# ---------------------------------------------------------------------------
# interval bound propagation
# ---------------------------------------------------------------------------
def _act_bounds(act, lo, hi):
    if act == "identity":
        return lo, hi
    return elem_bounds(act, lo, hi)


def ibp_bounds(net: NeuralNetwork, lo, hi):
    """Output bounds for boxes of shape ``(..., input_dim)``."""
    for layer in net.layers:
        lo, hi = linear_map_bounds(layer.W, lo, hi)
        lo, hi = _act_bounds(layer.act, lo + layer.b, hi + layer.b)
    return lo, hi


def nn_ibp(net: NeuralNetwork, box: IntervalVector) -> IntervalVector:
    if box.dim != net.input_dim:
        raise DimensionMismatch(
            f"Network expects {net.input_dim} inputs, box has dimension {box.dim}."
        )
    return IntervalVector(*ibp_bounds(net, box.lo, box.hi))


# ---------------------------------------------------------------------------
# linear relaxation bounds
# ---------------------------------------------------------------------------
_TORCH_ACT = {"relu": torch.nn.ReLU, "tanh": torch.nn.Tanh, "sigmoid": torch.nn.Sigmoid}

_LIRPA_METHOD = {"crown": "CROWN", "ibp": "CROWN-IBP"}

# torch works in single precision; offsets are widened by this many ulps per layer
_ROUNDING_ULPS = 16


def to_torch(net: NeuralNetwork) -> torch.nn.Sequential:
    """The network as a float32 ``torch.nn.Sequential``."""
    modules = []
    for layer in net.layers:
        linear = torch.nn.Linear(layer.W.shape[1], layer.W.shape[0])
        with torch.no_grad():
            linear.weight.copy_(torch.as_tensor(layer.W, dtype=torch.float32))
            linear.bias.copy_(torch.as_tensor(layer.b, dtype=torch.float32))
        modules.append(linear)
        if layer.act != "identity":
            modules.append(_TORCH_ACT[layer.act]())
    return torch.nn.Sequential(*modules).eval()


class _BoundedNetwork:
    """An auto_LiRPA module for one network; calls are serialized."""

    def __init__(self, net: NeuralNetwork):
        self.module = BoundedModule(
            to_torch(net),
            torch.zeros(1, net.input_dim),
            bound_opts={"relu": "adaptive"},
            device="cpu",
        )
        self.lock = threading.Lock()
        self.needed = defaultdict(set)
        self.needed[self.module.output_name[0]].add(self.module.input_name[0])

    def affine(self, lo, hi, method: str):
        x_L = torch.as_tensor(_round_out(lo, -np.inf)).unsqueeze(0)
        x_U = torch.as_tensor(_round_out(hi, np.inf)).unsqueeze(0)
        ptb = PerturbationLpNorm(norm=np.inf, x_L=x_L, x_U=x_U)
        x = BoundedTensor((x_L + x_U) / 2, ptb)
        with self.lock, torch.no_grad():
            _, _, A_dict = self.module.compute_bounds(
                x=(x,), method=method, return_A=True, needed_A_dict=self.needed
            )
        A = A_dict[self.module.output_name[0]][self.module.input_name[0]]
        return tuple(
            A[key][0].detach().cpu().numpy().astype(float)
            for key in ("lA", "lbias", "uA", "ubias")
        )


def _round_out(x, direction) -> np.ndarray:
    """``x`` in float32, rounded away from the box."""
    x = np.asarray(x, dtype=float)
    x32 = x.astype(np.float32)
    inward = x32 < x if direction > 0 else x32 > x
    return np.where(inward, np.nextafter(x32, np.float32(direction)), x32)


@dataclass(frozen=True)
class AffineBounds:
    """``Clo x + dlo <= N(x) <= Cup x + dup`` for every ``x`` in ``domain``."""

    Clo: np.ndarray
    Cup: np.ndarray
    dlo: np.ndarray
    dup: np.ndarray
    domain: IntervalVector
    info: Dict = field(default_factory=dict, compare=False)

    def bounds(self, lo, hi):
        """Affine bounds evaluated over sub-boxes of shape ``(..., n)``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        dom = self.domain
        if not (np.all(lo >= dom.lo) and np.all(hi <= dom.hi)):
            raise OutsideLocalization(
                f"Box is not inside the domain the bounds were built on, {dom!r}."
            )
        Clo_p, Clo_n = np.maximum(self.Clo, 0), np.minimum(self.Clo, 0)
        Cup_p, Cup_n = np.maximum(self.Cup, 0), np.minimum(self.Cup, 0)
        lower = lo @ Clo_p.T + hi @ Clo_n.T + self.dlo
        upper = hi @ Cup_p.T + lo @ Cup_n.T + self.dup
        return lower, upper

    def concretize(self) -> IntervalVector:
        return IntervalVector(*self.bounds(self.domain.lo, self.domain.hi))


def nn_crown(
    net: NeuralNetwork, box: IntervalVector, preact: str = "crown"
) -> AffineBounds:
    """Backward linear-relaxation (CROWN) bounds of the network over ``box``.

    Parameters
    ----------
    net
        The network.
    box
        Input box the bounds must hold on.
    preact
        ``"crown"`` bounds every hidden pre-activation with its own backward
        pass; ``"ibp"`` uses interval propagation for them, which is faster
        and looser.
    """
    if box.dim != net.input_dim:
        raise DimensionMismatch(
            f"Network expects {net.input_dim} inputs, box has dimension {box.dim}."
        )
    if preact not in _LIRPA_METHOD:
        raise ValueError(
            f"Pre-activation mode must be 'crown' or 'ibp', not {preact!r}."
        )
    lo, hi = box.lo, box.hi
    Clo, dlo, Cup, dup = net.bounded.affine(lo, hi, _LIRPA_METHOD[preact])

    mag = np.maximum(np.abs(lo), np.abs(hi))
    eps = _ROUNDING_ULPS * len(net.layers) * np.finfo(np.float32).eps
    dlo = dlo - eps * (np.abs(Clo) @ mag + np.abs(dlo) + 1.0)
    dup = dup + eps * (np.abs(Cup) @ mag + np.abs(dup) + 1.0)

    result = AffineBounds(Clo, Cup, dlo, dup, box, {"preact": preact})
    if logger.isEnabledFor(logging.DEBUG):
        out_lo, out_hi = result.bounds(lo, hi)
        ibp_lo, ibp_hi = ibp_bounds(net, lo, hi)
        looser = (out_lo < ibp_lo - 1e-12) | (out_hi > ibp_hi + 1e-12)
        if np.any(looser):
            logger.debug(f"CROWN looser than IBP on outputs {np.flatnonzero(looser)}.")
    return result


def affine_to_ifn(ab: AffineBounds) -> InclusionFn:
    """The inclusion function of the affine bounds, valid on ``ab.domain``."""
    return InclusionFn(
        ab.bounds,
        ab.domain.dim,
        ab.Clo.shape[0],
        localization=ab.domain,
        monotone=True,
        name="crown",
    )


def ibp_ifn(net: NeuralNetwork) -> InclusionFn:
    return InclusionFn(
        lambda lo, hi: ibp_bounds(net, lo, hi),
        net.input_dim,
        net.output_dim,
        thin=True,
        monotone=True,
        name="ibp",
    )
