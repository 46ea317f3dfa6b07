import numpy as np
import pytest

from reachcore.closed_loop import (
    ClosedLoopIfn,
    LinearSystem,
    act_ifn,
    con_ifn,
    linear_act_ifn,
    linear_con_ifn,
)
from reachcore.exceptions import (
    DimensionMismatch,
    EmptyResult,
    NonDifferentiableOp,
    OutsideLocalization,
)
from reachcore.inclusion import Corner, natural_ifn
from reachcore.interval import IntervalVector
from reachcore.nn import Layer, NeuralNetwork, ibp_ifn, nn_crown
from reachcore.symbolic import ExprGraph, abs_, jacobian_bounds, linear_graph, sin, var

A = np.array([[-2.0, 1.0], [1.0, -2.0]])
B = np.array([[0.0], [1.0]])
K = np.array([[-3.0, -3.0]])
BOX = IntervalVector([-1, -1], [1, 1])


@pytest.fixture(scope="module")
def feedback():
    return NeuralNetwork([Layer(K, [0.0])])


@pytest.fixture(scope="module")
def pendulum():
    th, om, u, w = var("th"), var("om"), var("u"), var("w")
    return ExprGraph([om, -sin(th) - 0.1 * om + u + w], ("th", "om"), ("u",), ("w",))


@pytest.fixture(scope="module")
def controller():
    rng = np.random.default_rng(3)
    return NeuralNetwork(
        [
            Layer(rng.normal(size=(6, 2)), rng.normal(size=6), "tanh"),
            Layer(rng.normal(size=(4, 6)), rng.normal(size=4), "relu"),
            Layer(0.3 * rng.normal(size=(1, 4)), [0.0]),
        ]
    )


def test_linear_interaction_cancels_feedback(feedback):
    ab = nn_crown(feedback, BOX)
    act = linear_act_ifn(A, B, None, ab, BOX)
    con = linear_con_ifn(A, B, None, ab, BOX)
    assert np.allclose(act.lo, [-3, -7]) and np.allclose(act.hi, [3, 7])
    assert np.allclose(con.lo, [-3, -9]) and np.allclose(con.hi, [3, 9])


def test_linear_shapes_checked(feedback):
    ab = nn_crown(feedback, BOX)
    with pytest.raises(DimensionMismatch):
        linear_act_ifn(A, B, np.ones((2, 1)), ab, BOX, IntervalVector([0, 0], [1, 1]))
    with pytest.raises(OutsideLocalization):
        linear_act_ifn(A, B, None, ab, IntervalVector([0, 0], [2, 1]))


@pytest.mark.parametrize(
    "method, expected",
    [("con", [9, 3]), ("act", [7, 3]), ("intersect", [7, 3])],
)
def test_configured_linear_closed_loop(feedback, method, expected):
    cl = ClosedLoopIfn(LinearSystem.from_matrices(A, B), feedback, method=method)
    out = cl(BOX)
    assert np.allclose(out.hi, [3, expected[0]])
    assert np.allclose(out.lo, -out.hi)
    assert cl.linear


@pytest.mark.parametrize("method, expected", [("con", 9), ("act", 7)])
def test_graph_matches_linear_formulas(feedback, method, expected):
    cl = ClosedLoopIfn(linear_graph(A, B), feedback, method=method)
    out = cl(BOX)
    assert np.allclose(out.lo, [-3, -expected], atol=1e-4)
    assert np.allclose(out.hi, [3, expected], atol=1e-4)


def _closed_loop_samples(g, net, x_box, w_box, count=2000, seed=0):
    rng = np.random.default_rng(seed)
    x = x_box.sample(rng, count)
    w = w_box.sample(rng, count)
    z = np.concatenate([x, net(x), w], axis=-1)
    return g.eval_point(z)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"method": "con"},
        {"method": "con", "open_loop": "cornered", "corners": 2},
        {"method": "con", "open_loop": "mixed"},
        {"method": "act"},
        {"method": "act", "corners": 4, "mixed": True},
        {"method": "act", "mixed": "x", "bound_source": "ibp"},
        {"method": "intersect", "corners": 2},
        {"method": "con", "bound_source": "ibp", "preact": "ibp"},
    ],
)
def test_closed_loop_bounds_contain_samples(pendulum, controller, kwargs):
    cl = ClosedLoopIfn(pendulum, controller, **kwargs)
    x_box = IntervalVector([0.2, -0.3], [0.5, 0.1])
    w_box = IntervalVector([-0.05], [0.05])
    out = cl(x_box, w_box)
    y = _closed_loop_samples(pendulum, controller, x_box, w_box)
    assert np.all(out.contains(y, tol=1e-9))


def test_sub_boxes_share_controller_bounds(pendulum, controller):
    cl = ClosedLoopIfn(pendulum, controller, method="act")
    loc = IntervalVector([0.2, -0.3], [0.5, 0.1])
    cb = cl.controller_bounds(loc)
    lo = np.array([[0.2, -0.3], [0.3, 0.0]])
    hi = np.array([[0.3, -0.2], [0.5, 0.1]])
    out_lo, out_hi = cl.bounds(lo, hi, [0.0], [0.0], cb)
    assert out_lo.shape == (2, 2)
    single = cl(IntervalVector(lo[1], hi[1]), loc=loc)
    assert np.allclose(out_lo[1], single.lo) and np.allclose(out_hi[1], single.hi)
    with pytest.raises(OutsideLocalization):
        cl(IntervalVector([0.1, 0.0], [0.3, 0.1]), loc=loc)


def test_single_box_operations(pendulum, controller):
    x_box = IntervalVector([0.2, -0.3], [0.5, 0.1])
    w_box = IntervalVector([-0.05], [0.05])
    y = _closed_loop_samples(pendulum, controller, x_box, w_box, seed=1)

    con = con_ifn(natural_ifn(pendulum), ibp_ifn(controller), x_box, w_box, x_box)
    assert np.all(con.contains(y, tol=1e-9))

    ab = nn_crown(controller, x_box)
    u_box = ab.concretize()
    jb = jacobian_bounds(pendulum, x_box, u_box, w_box)
    corners = [Corner.lo(4), Corner.hi(4)]
    act = act_ifn(pendulum, jb, ab, corners, x_box, w_box, u_box)
    assert np.all(act.contains(y, tol=1e-9))
    assert act.issubset(act_ifn(pendulum, jb, ab, None, x_box, w_box, u_box))

    with pytest.raises(OutsideLocalization):
        con_ifn(
            natural_ifn(pendulum),
            ibp_ifn(controller),
            IntervalVector([0.0, 0.0], [1.0, 1.0]),
            w_box,
            x_box,
        )


def test_actuator_limits(pendulum, controller):
    box = IntervalVector([0.2, -0.3], [0.5, 0.1])
    free = ClosedLoopIfn(pendulum, controller).controller_bounds(box).u_box
    mid = free.midpoint
    limits = IntervalVector(mid - 1e-3, mid + 1e-3)
    cl = ClosedLoopIfn(pendulum, controller, actuator_limits=limits)
    clipped = IntervalVector(
        np.maximum(free.lo, limits.lo), np.minimum(free.hi, limits.hi)
    )
    assert cl.controller_bounds(box).u_box == clipped
    assert clipped.issubset(limits)


def test_disjoint_actuator_limits(pendulum, controller):
    box = IntervalVector([0.2, -0.3], [0.5, 0.1])
    free = ClosedLoopIfn(pendulum, controller).controller_bounds(box).u_box
    above = IntervalVector(free.hi + 1.0, free.hi + 2.0)
    cl = ClosedLoopIfn(pendulum, controller, actuator_limits=above)
    with pytest.raises(EmptyResult) as err:
        cl.controller_bounds(box)
    assert "disjoint" in str(err.value)


def test_held_controller_bounds(pendulum, controller):
    cl = ClosedLoopIfn(pendulum, controller, method="act")
    box = IntervalVector([0.2, -0.3], [0.5, 0.1])
    held = cl.controller_bounds(box, hold=True)
    assert held.u_box == cl.controller_bounds(box).u_box
    assert np.all(held.affine.Clo == 0)
    assert np.all(np.isinf(held.domain.hi))
    # valid far away from the box it was computed on
    cl.bounds([5.0, 5.0], [6.0, 6.0], [0.0], [0.0], held)


@pytest.mark.parametrize(
    "kwargs, error",
    [
        ({"method": "both"}, ValueError),
        ({"bound_source": "lp"}, ValueError),
        ({"mixed": "xz"}, ValueError),
        ({"open_loop": "taylor"}, ValueError),
    ],
)
def test_bad_settings(pendulum, controller, kwargs, error):
    with pytest.raises(error):
        ClosedLoopIfn(pendulum, controller, **kwargs)


def test_dimension_checks(pendulum, feedback):
    with pytest.raises(DimensionMismatch):
        ClosedLoopIfn(pendulum, None)
    wide = NeuralNetwork([Layer(np.ones((2, 2)), [0.0, 0.0])])
    with pytest.raises(DimensionMismatch):
        ClosedLoopIfn(pendulum, wide)


def test_non_differentiable_plant():
    x, u = var("x"), var("u")
    g = ExprGraph([abs_(x) + u], ("x",), ("u",))
    net = NeuralNetwork([Layer([[-1.0]], [0.0])])
    ClosedLoopIfn(g, net, method="con")
    with pytest.raises(NonDifferentiableOp):
        ClosedLoopIfn(g, net, method="act")


def test_repr_is_stable(pendulum, controller):
    cl = ClosedLoopIfn(pendulum, controller, method="act", corners=2, mixed="xu")
    assert repr(cl) == "ClosedLoopIfn(method=act, source=crown, corners=2, mixed=xu)"


def test_linear_system_evaluation():
    s = LinearSystem.from_matrices(A, B)
    assert s.dims == (2, 1, 0)
    assert np.allclose(s([1.0, 0.0], [2.0]), [-2, 3])
    with pytest.raises(DimensionMismatch):
        LinearSystem.from_matrices(np.ones((2, 3)))
