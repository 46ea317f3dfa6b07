"""Built-in benchmark systems with their controllers and specifications.

Each benchmark is a model of the ``Benchmark`` component, so it can be
looked up by name or alias::

    get_benchmark("double-integrator")
    get_benchmark("platoon", n_vehicles=4)

The controllers are small hand-constructed networks stored in
``reachcore/data``; each weights file carries reference input/output pairs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from . import DATA_PATH
from .closed_loop import ClosedLoopIfn, LinearSystem
from .components import component, get_model
from .interval import IntervalVector
from .nn import NeuralNetwork, load_network
from .reach import RedundantRefinement
from .safety import AvoidRegion, Circle, SafetySpec, StateConstraint
from .symbolic import (
    ExprGraph,
    arctan,
    cos,
    parse_expr,
    sin,
    sqrt,
    tan,
    tanh,
    var,
)

logger = logging.getLogger(__name__)

# ACC
ACC_MU = 0.0001
ACC_LEAD_ACCEL = -2.0
ACC_V_SET = 30.0
ACC_T_GAP = 1.4
ACC_D_DEFAULT = 10.0

# Clohessy-Wiltshire docking
DOCKING_MEAN_MOTION = 0.001027
DOCKING_MASS = 12.0

# platoon
PLATOON_U_LIM = 5.0
PLATOON_KP = 5.0
PLATOON_KV = 5.0
PLATOON_SPACING = 0.5
PLATOON_DELTA = 1e-9
PLATOON_W = 0.001
PLATOON_OBSTACLE = ((4.0, 4.0), 2.25)


@dataclass(frozen=True)
class BenchmarkDef:
    """A closed-loop benchmark and the settings it is run with by default."""

    name: str
    system: Union[ExprGraph, LinearSystem]
    net: Optional[NeuralNetwork]
    x0: IntervalVector
    w: Optional[IntervalVector] = None
    dt: float = 0.01
    t_final: float = 1.0
    scheme: str = "euler"
    zoh: Optional[float] = None
    spec: SafetySpec = field(default_factory=SafetySpec)
    method: str = "con"
    open_loop: str = "natural"
    corners: int = 1
    mixed: Union[bool, str] = False
    refine: Optional[RedundantRefinement] = None
    plot_axes: Tuple[int, int] = (0, 1)

    def __post_init__(self):
        n, p, q = self.system.dims
        if self.x0.dim != n:
            raise ValueError(
                f"{self.name}: initial box has dimension {self.x0.dim}, system {n}."
            )
        if self.w is not None and self.w.dim != q:
            raise ValueError(
                f"{self.name}: disturbance box has dimension {self.w.dim}, system {q}."
            )
        if self.net is not None and (self.net.input_dim, self.net.output_dim) != (n, p):
            raise ValueError(
                f"{self.name}: controller maps {self.net.input_dim}->"
                f"{self.net.output_dim}, system needs {n}->{p}."
            )

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.system.dims

    def closed_loop(self, **overrides) -> ClosedLoopIfn:
        """The configured closed loop; keywords override the benchmark defaults."""
        kwargs = dict(
            method=self.method,
            open_loop=self.open_loop,
            corners=self.corners,
            mixed=self.mixed,
        )
        kwargs.update(overrides)
        return ClosedLoopIfn(self.system, self.net, **kwargs)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------
def load_fixture(name: str) -> NeuralNetwork:
    """Load ``reachcore/data/<name>.json``."""
    return load_network(DATA_PATH / f"{name}.json")


def reference_error(net: NeuralNetwork) -> float:
    """Largest deviation of the forward pass from the stored reference pairs."""
    pairs = net.metadata.get("reference", [])
    if not pairs:
        return 0.0
    x = np.array([pair["x"] for pair in pairs], dtype=float)
    y = np.array([pair["y"] for pair in pairs], dtype=float)
    return float(np.max(np.abs(net(x) - y)))


def _box(*pairs) -> IntervalVector:
    return IntervalVector.from_pairs(pairs)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------
def bicycle_graph() -> ExprGraph:
    """Kinematic bicycle with equal axle distances of 1."""
    phi, v = var("phi"), var("v")
    beta = arctan(tan(var("delta")) / 2)
    f = [v * cos(phi + beta), v * sin(phi + beta), v * sin(beta), var("a")]
    return ExprGraph(f, ("px", "py", "phi", "v"), ("a", "delta"))


def build_bicycle() -> BenchmarkDef:
    heading = -2 * math.pi / 3
    x0 = _box(
        [7.95, 8.05], [6.95, 7.05], [heading - 0.01, heading + 0.01], [1.99, 2.01]
    )
    spec = SafetySpec(
        avoid=[AvoidRegion(Circle((4.0, 4.0), 2.0), name="obstacle")],
    )
    return BenchmarkDef(
        "bicycle",
        bicycle_graph(),
        load_fixture("bicycle"),
        x0,
        dt=0.125,
        t_final=2.5,
        scheme="euler",
        spec=spec,
    )


def build_double_integrator() -> BenchmarkDef:
    system = LinearSystem.from_matrices([[1, 1], [0, 1]], [[0.5], [1]])
    return BenchmarkDef(
        "double_integrator",
        system,
        load_fixture("double_integrator"),
        _box([2.5, 3.0], [-0.25, 0.25]),
        dt=1.0,
        t_final=5.0,
        scheme="discrete",
    )


def acc_graph() -> ExprGraph:
    """Leader and ego vehicles with drag and first-order acceleration lag."""
    states = ("x_lead", "v_lead", "g_lead", "x_ego", "v_ego", "g_ego")
    _, vl, gl, _, ve, ge = (var(s) for s in states)
    f = [
        vl,
        gl,
        -2 * gl + 2 * ACC_LEAD_ACCEL - ACC_MU * vl ** 2,
        ve,
        ge,
        -2 * ge + 2 * var("a_ego") - ACC_MU * ve ** 2,
    ]
    return ExprGraph(f, states, ("a_ego",))


def acc_features() -> Tuple[np.ndarray, np.ndarray]:
    """``[D_rel, v_rel, g_rel, v_set, T_gap] = F x + g``."""
    F = np.zeros((5, 6))
    F[0, [0, 3]] = 1, -1
    F[1, [1, 4]] = 1, -1
    F[2, [2, 5]] = 1, -1
    g = np.array([0, 0, 0, ACC_V_SET, ACC_T_GAP])
    return F, g


def build_acc() -> BenchmarkDef:
    graph = acc_graph()
    separation = ExprGraph(
        [
            var("x_lead")
            - var("x_ego")
            - ACC_D_DEFAULT
            - ACC_T_GAP * var("v_ego")
        ],
        graph.states,
    )
    spec = SafetySpec(
        constraints=[StateConstraint(separation, (0.0, 5.0), name="separation")]
    )
    x0 = _box([90, 110], [32, 32.2], [0, 0], [10, 11], [30, 30.2], [0, 0])
    return BenchmarkDef(
        "acc",
        graph,
        load_fixture("acc").with_input_map(*acc_features()),
        x0,
        dt=0.01,
        t_final=5.0,
        zoh=0.1,
        spec=spec,
        plot_axes=(3, 4),
    )


def docking_graph() -> ExprGraph:
    """Clohessy-Wiltshire relative motion in the orbital plane."""
    n, m = DOCKING_MEAN_MOTION, DOCKING_MASS
    sx, sy, vx, vy = (var(s) for s in ("sx", "sy", "vx", "vy"))
    f = [
        vx,
        vy,
        2 * n * vy + 3 * n ** 2 * sx + var("Fx") / m,
        -2 * n * vx + var("Fy") / m,
    ]
    return ExprGraph(f, ("sx", "sy", "vx", "vy"), ("Fx", "Fy"))


DOCKING_INITIAL_SETS = (
    ((87, 89), (87, 89)),
    ((-89, -87), (87, 89)),
    ((-89, -87), (-89, -87)),
    ((87, 89), (-89, -87)),
)


def build_docking(initial_set: int = 0) -> BenchmarkDef:
    if not 0 <= initial_set < len(DOCKING_INITIAL_SETS):
        raise ValueError(
            f"Docking has initial sets 0..{len(DOCKING_INITIAL_SETS) - 1}, "
            f"got {initial_set}."
        )
    graph = docking_graph()
    n = DOCKING_MEAN_MOTION
    sx, sy, vx, vy = (var(s) for s in graph.states)
    speed_limit = ExprGraph(
        [0.2 + 2 * n * sqrt(sx ** 2 + sy ** 2) - sqrt(vx ** 2 + vy ** 2)],
        graph.states,
    )
    spec = SafetySpec(
        constraints=[StateConstraint(speed_limit, (0.0, 40.0), name="speed limit")]
    )
    px, py = DOCKING_INITIAL_SETS[initial_set]
    x0 = _box(px, py, [-0.01, 0.01], [-0.01, 0.01])
    return BenchmarkDef(
        "docking",
        graph,
        load_fixture("docking"),
        x0,
        dt=0.1,
        t_final=40.0,
        zoh=1.0,
        spec=spec,
    )


def tora_graph() -> ExprGraph:
    """TORA with the redundant states ``y1 = x1 + x2`` and ``y2 = x1 - x2``."""
    x1, x2, x3, x4 = (var(f"x{k}") for k in range(1, 5))
    coupling = 0.1 * sin(x3)
    f = [
        x2,
        -x1 + coupling,
        x4,
        var("u"),
        x2 - x1 + coupling,
        x2 + x1 - coupling,
    ]
    return ExprGraph(f, ("x1", "x2", "x3", "x4", "y1", "y2"), ("u",))


TORA_REDUNDANT = np.array([[1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0]])


def build_tora() -> BenchmarkDef:
    x = _box([-0.77, -0.75], [-0.45, -0.43], [0.51, 0.54], [-0.3, -0.28])
    y1 = (x.lo[0] + x.lo[1], x.hi[0] + x.hi[1])
    y2 = (x.lo[0] - x.hi[1], x.hi[0] - x.lo[1])
    x0 = IntervalVector.concat(x, _box(y1, y2))
    select = np.hstack([np.eye(4), np.zeros((4, 2))])
    target = IntervalVector(
        [-0.1, -0.9] + [-np.inf] * 4, [0.2, -0.6] + [np.inf] * 4
    )
    return BenchmarkDef(
        "tora",
        tora_graph(),
        load_fixture("tora").with_input_map(select),
        x0,
        dt=0.005,
        t_final=5.0,
        zoh=0.5,
        spec=SafetySpec(target=target, target_time=5.0),
        method="intersect",
        corners=4,
        mixed=True,
        refine=RedundantRefinement(TORA_REDUNDANT),
    )


def _vehicle_names(j: int) -> Tuple[str, ...]:
    return tuple(f"{s}{j}" for s in ("px", "py", "vx", "vy"))


def platoon_graph(n_vehicles: int) -> ExprGraph:
    """Double-integrator vehicles with saturated inputs.

    The leader's input comes from the controller; follower ``j`` tracks
    vehicle ``j - 1`` with a PD law keeping a gap of ``PLATOON_SPACING``
    behind it along its direction of travel.
    """
    if n_vehicles < 1:
        raise ValueError(f"A platoon needs at least one vehicle, got {n_vehicles}.")
    states, f = [], []
    for j in range(1, n_vehicles + 1):
        px, py, vx, vy = (var(s) for s in _vehicle_names(j))
        if j == 1:
            ux, uy = var("ux1"), var("uy1")
        else:
            ahead = (var(s) for s in _vehicle_names(j - 1))
            ux, uy = follower_control(*ahead, px, py, vx, vy)
        lim = PLATOON_U_LIM
        f += [
            vx,
            vy,
            lim * tanh(ux / lim) + var(f"wx{j}"),
            lim * tanh(uy / lim) + var(f"wy{j}"),
        ]
        states += _vehicle_names(j)
    disturbances = [f"w{a}{j}" for j in range(1, n_vehicles + 1) for a in ("x", "y")]
    return ExprGraph(f, states, ("ux1", "uy1"), disturbances)


def follower_control(lpx, lpy, lvx, lvy, px, py, vx, vy):
    """PD tracking of the point ``PLATOON_SPACING`` behind the vehicle ahead."""
    speed = sqrt(lvx ** 2 + lvy ** 2 + PLATOON_DELTA ** 2)
    r = PLATOON_SPACING
    ux = PLATOON_KP * (lpx - px - r * lvx / speed) + PLATOON_KV * (lvx - vx)
    uy = PLATOON_KP * (lpy - py - r * lvy / speed) + PLATOON_KV * (lvy - vy)
    return ux, uy


def platoon_initial_box(n_vehicles: int) -> IntervalVector:
    boxes = []
    for j in range(n_vehicles):
        dx = PLATOON_SPACING * j * math.cos(math.pi / 3)
        dy = PLATOON_SPACING * j * math.sin(math.pi / 3)
        boxes.append(
            _box(
                [7.225 + dx, 7.275 + dx],
                [5.725 + dy, 5.775 + dy],
                [-0.5, -0.5],
                [-5, -5],
            )
        )
    return IntervalVector.concat(*boxes)


def build_platoon(n_vehicles: int = 1) -> BenchmarkDef:
    graph = platoon_graph(n_vehicles)
    select = np.zeros((4, 4 * n_vehicles))
    select[:, :4] = np.eye(4)
    net = load_fixture("platoon_leader")
    if n_vehicles > 1:
        net = net.with_input_map(select)
    q = 2 * n_vehicles
    center, radius = PLATOON_OBSTACLE
    # every vehicle must clear the obstacle in its own position plane
    avoid = [
        AvoidRegion(
            Circle(center, radius, axes=(4 * j, 4 * j + 1)), name=f"obstacle_{j + 1}"
        )
        for j in range(n_vehicles)
    ]
    return BenchmarkDef(
        f"platoon_{n_vehicles}",
        graph,
        net,
        platoon_initial_box(n_vehicles),
        w=IntervalVector(np.full(q, -PLATOON_W), np.full(q, PLATOON_W)),
        dt=0.0125,
        t_final=1.5,
        spec=SafetySpec(avoid=avoid),
    )


def build_custom(doc: dict, net: Optional[NeuralNetwork] = None) -> BenchmarkDef:
    """A benchmark from a system document.

    Besides the expression grammar (``states``, ``inputs``, ``disturbances``,
    ``f``) the document may give ``x0`` and ``w`` as lists of ``[lo, hi]``
    pairs and ``dt``, ``t_final``, ``scheme`` and ``zoh``.
    """
    graph = parse_expr(doc)
    n = graph.n
    x0 = doc.get("x0")
    if x0 is None:
        x0 = IntervalVector(np.zeros(n))
    else:
        x0 = IntervalVector.from_pairs(x0)
    w = doc.get("w")
    return BenchmarkDef(
        doc.get("name", "custom"),
        graph,
        net,
        x0,
        w=IntervalVector.from_pairs(w) if w is not None else None,
        dt=float(doc.get("dt", 0.01)),
        t_final=float(doc.get("t_final", 1.0)),
        scheme=doc.get("scheme", "euler"),
        zoh=doc.get("zoh"),
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------
@component
class Benchmark:
    """A closed-loop reachability benchmark."""


class Bicycle(Benchmark):
    """Obstacle avoidance with a kinematic bicycle."""

    _alias = ("bicycle-obstacle",)

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        return build_bicycle()


class DoubleIntegrator(Benchmark):
    """Discrete-time double integrator."""

    _alias = ("double-integrator", "double_integrator", "di")

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        return build_double_integrator()


class ACC(Benchmark):
    """Adaptive cruise control behind a braking leader."""

    _alias = ("adaptive-cruise-control",)

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        return build_acc()


class Docking(Benchmark):
    """Spacecraft docking with a velocity constraint."""

    _alias = ("spacecraft-docking",)

    def __init__(self, initial_set: int = 0):
        super().__init__(initial_set=initial_set)

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        (initial_set,) = self._extract_kwarg_values(**kwargs)
        return build_docking(initial_set)


class TORA(Benchmark):
    """Translational oscillations by a rotational actuator."""

    _alias = ("translational-oscillator",)

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        return build_tora()


class Platoon(Benchmark):
    """Leader-follower vehicle platoon."""

    _alias = ("vehicle-platoon",)

    def __init__(self, n_vehicles: int = 1):
        super().__init__(n_vehicles=n_vehicles)

    def __call__(self, **kwargs) -> BenchmarkDef:
        self._check_kwargs(**kwargs)
        (n_vehicles,) = self._extract_kwarg_values(**kwargs)
        return build_platoon(int(n_vehicles))


def get_benchmark(name: str, **kwargs) -> BenchmarkDef:
    """Build a benchmark by name or alias; keywords go to the builder."""
    logger.info(f"Building benchmark '{name}'...")
    return get_model(name, "benchmark")()(**kwargs)


def list_benchmarks() -> List[str]:
    return sorted(Benchmark.get_models())
