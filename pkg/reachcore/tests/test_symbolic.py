import numpy as np
import pytest
import sympy as sp

from reachcore.exceptions import (
    ArityError,
    DimensionMismatch,
    ExpressionError,
    NonDifferentiableOp,
    ParseError,
    UnknownOp,
)
from reachcore.interval import IntervalVector
from reachcore.symbolic import (
    ExprGraph,
    abs_,
    cos,
    integer_power,
    jacobian_bounds,
    linear_graph,
    parse_expr,
    relu,
    sin,
    sqrt,
    symbolic_jacobian,
    var,
)


@pytest.fixture(scope="function")
def example():
    x1, x2 = var("x1"), var("x2")
    return ExprGraph([(x1 + x2) ** 2, x1 + x2 + 2 * x1 * x2], ("x1", "x2"))


@pytest.fixture(scope="function")
def pendulum_doc():
    gravity = ["mul", ["const", -9.81], ["sin", ["var", "th"]]]
    return {
        "states": ["th", "om"],
        "inputs": ["u"],
        "disturbances": ["w"],
        "f": [
            ["var", "om"],
            [
                "add",
                ["sub", gravity, ["var", "om"]],
                ["add", ["var", "u"], ["var", "w"]],
            ],
        ],
    }


def test_natural_evaluation_of_example(example):
    lo, hi = example.eval_bounds([-0.1, -0.1], [0.1, 0.1])
    assert np.allclose(lo, [0, -0.22])
    assert np.allclose(hi, [0.04, 0.22])


def test_dims(pendulum_doc):
    g = parse_expr(pendulum_doc)
    assert g.dims == (2, 1, 1)
    assert g.nvars == 4
    assert g.nout == 2
    assert g.variables == ("th", "om", "u", "w")


def test_eval_interval_checks_dimensions(pendulum_doc):
    g = parse_expr(pendulum_doc)
    x = IntervalVector([0, 0], [0.1, 0.1])
    with pytest.raises(DimensionMismatch) as err:
        g.eval_interval(x)
    assert "u" in str(err.value)
    out = g.eval_interval(x, IntervalVector([0], [1]), IntervalVector([0], [0]))
    assert out.dim == 2


def test_bounds_contain_samples(pendulum_doc):
    g = parse_expr(pendulum_doc)
    lo, hi = np.array([-1, -1, -1, -0.1]), np.array([1, 1, 1, 0.1])
    out_lo, out_hi = g.eval_bounds(lo, hi)
    rng = np.random.default_rng(1)
    z = rng.uniform(lo, hi, size=(500, 4))
    y = g.eval_point(z)
    assert np.all(y >= out_lo - 1e-12) and np.all(y <= out_hi + 1e-12)


def test_batched_call(example):
    x = np.random.default_rng(0).uniform(-1, 1, size=(7, 2))
    out = example(x)
    assert out.shape == (7, 2)
    assert np.allclose(out[:, 0], (x[:, 0] + x[:, 1]) ** 2)


def test_batched_bounds(example):
    lo = np.array([[-0.1, -0.1], [0.0, 0.0]])
    hi = lo + 0.2
    out_lo, out_hi = example.eval_bounds(lo, hi)
    assert out_lo.shape == (2, 2)
    single = example.eval_bounds(lo[1], hi[1])
    assert np.allclose(out_lo[1], single[0])


def test_wrong_box_shape(example):
    with pytest.raises(DimensionMismatch):
        example.eval_bounds([0, 0, 0], [1, 1, 1])


def test_shared_subexpressions_are_bounded_once():
    x, y = var("x"), var("y")
    g = ExprGraph([sin(x + y) * x, sin(x + y) * y], ["x", "y"])
    assert g.shared_subexpressions == 1
    # x, y, x + y, sin, and one product per output
    assert len(g) == 6


def test_plain_sympy_symbols_are_accepted():
    x = sp.Symbol("x")
    g = ExprGraph([sp.cos(x) * 2], ["x"])
    assert np.allclose(g.eval_point([0.0]), [2.0])
    assert np.allclose(g.jacobian_point([np.pi / 2]), [[-2.0]])


def test_duplicate_variable_names():
    with pytest.raises(ExpressionError):
        ExprGraph([var("x")], ["x"], ["x"])


def test_undeclared_variable():
    with pytest.raises(ParseError) as err:
        ExprGraph([var("y")], ["x"])
    assert "'y'" in str(err.value)


@pytest.mark.parametrize(
    "node, error, where",
    [
        (["cosh", ["var", "x"]], UnknownOp, "f[0]"),
        (["sin", ["var", "x"], ["var", "x"]], ArityError, "f[0]"),
        (["add", ["var", "x"], ["pow", ["var", "x"], 0.5]], ParseError, "f[0]/2/2"),
        (["add", ["var", "x"], ["var", "z"]], ParseError, "f[0]/2"),
        (["const", "one"], ArityError, "f[0]"),
        ("x", ParseError, "f[0]"),
    ],
)
def test_parse_errors_name_the_node(node, error, where):
    with pytest.raises(error) as err:
        parse_expr({"states": ["x"], "f": [node]})
    assert str(err.value).startswith(where)


def test_parse_checks_declared_counts():
    with pytest.raises(ParseError) as err:
        parse_expr({"n": 2, "states": ["x"], "f": [["var", "x"]]})
    assert "'n' is 2" in str(err.value)


def test_parse_requires_outputs():
    with pytest.raises(ParseError):
        parse_expr({"states": ["x"]})
    with pytest.raises(ParseError):
        parse_expr("sin(x)")


def test_parse_bare_node():
    g = parse_expr(["mul", ["var", "a"], ["pow", ["var", "b"], 3]])
    assert g.states == ("a", "b")
    assert np.allclose(g.eval_point([2.0, 3.0]), [54.0])


def test_integer_power():
    x = var("x")
    g = ExprGraph([x ** 3, x ** -1, x ** 0, integer_power(x, 4.0)], ["x"])
    assert np.allclose(g.eval_point([2.0]), [8, 0.5, 1, 16])
    with pytest.raises(ExpressionError):
        integer_power(x, 0.5)


def test_even_power_uses_square_range():
    x = var("x")
    g = ExprGraph([x ** 2], ["x"])
    lo, hi = g.eval_bounds([-1.0], [2.0])
    assert np.allclose([lo, hi], [[0], [4]])


def test_symbolic_jacobian_point():
    x, y = var("x"), var("y")
    g = ExprGraph([x * y + sin(x), cos(y) / x], ["x", "y"])
    J = g.jacobian_point([1.0, 2.0])
    expected = [[2 + np.cos(1), 1], [-np.cos(2), -np.sin(2)]]
    assert np.allclose(J, expected)


def test_jacobian_bounds_contain_point_jacobians(pendulum_doc):
    g = parse_expr(pendulum_doc)
    x = IntervalVector([-1, -1], [1, 1])
    u = IntervalVector([-1], [1])
    w = IntervalVector([0], [0.1])
    jb = jacobian_bounds(g, x, u, w)
    assert jb.Jx.shape == (2, 2)
    assert jb.Ju.shape == (2, 1)
    assert jb.Jw.shape == (2, 1)
    rng = np.random.default_rng(2)
    box = IntervalVector.concat(x, u, w)
    for z in box.sample(rng, 50):
        J = g.jacobian_point(z)
        assert jb.Jx.contains(J[:, :2])
        assert jb.Ju.contains(J[:, 2:3])


def test_symbolic_jacobian_splits_groups(pendulum_doc):
    g = parse_expr(pendulum_doc)
    gx, gu, gw = symbolic_jacobian(g)
    assert (gx.nout, gu.nout, gw.nout) == (4, 2, 2)
    assert np.allclose(gu.eval_point([0.3, 0.2, 0.0, 0.0]), [0, 1])


@pytest.mark.parametrize("op", [abs_, relu])
def test_non_differentiable_ops(op):
    g = ExprGraph([op(var("x"))], ["x"])
    with pytest.raises(NonDifferentiableOp):
        g.jacobian_graph


def test_column_graphs(example):
    cols = example.column_graphs
    assert len(cols) == 2
    z = np.array([0.3, -0.2])
    J = example.jacobian_point(z)
    assert np.allclose(cols[1].eval_point(z), J[:, 1])


def test_document_round_trip_evaluates_the_same(pendulum_doc):
    g = parse_expr(pendulum_doc)
    h = parse_expr(g.to_doc())
    z = np.array([0.4, -0.3, 0.2, 0.05])
    assert np.allclose(g.eval_point(z), h.eval_point(z))


def test_linear_graph():
    g = linear_graph([[1, 2], [3, 4]], B=[[1], [0]], c=[0, 1])
    assert g.dims == (2, 1, 0)
    assert np.allclose(g([1.0, 1.0], [2.0]), [5, 8])


def test_half_integer_powers_from_differentiation():
    x, y = var("x"), var("y")
    g = ExprGraph([sp.sqrt(x ** 2 + y ** 2) * x], ["x", "y"])
    lo, hi = np.array([1.0, 0.5]), np.array([2.0, 1.5])
    jb = jacobian_bounds(g, IntervalVector(lo, hi))
    rng = np.random.default_rng(3)
    for z in rng.uniform(lo, hi, size=(200, 2)):
        assert jb.Jx.contains(g.jacobian_point(z))


def test_sigmoid_derivative():
    x = var("x")
    g = parse_expr({"states": ["x"], "f": [["sigmoid", ["var", "x"]]]})
    J = g.jacobian_point([0.0])
    assert np.allclose(J, [[0.25]])
    lo, hi = g.eval_bounds([-1.0], [1.0])
    assert np.allclose([lo, hi], [[1 / (1 + np.e)], [1 / (1 + np.exp(-1))]])
    assert x in g.symbols


def test_division_by_constant_zero():
    g = parse_expr(
        {"states": ["x"], "f": [["div", ["var", "x"], ["const", 0]]]}
    )
    with pytest.raises(ExpressionError):
        g.eval_bounds([0.0], [1.0])


def test_document_form_of_square_roots():
    g = ExprGraph([sqrt(var("x")), 1 / sqrt(var("x"))], ["x"])
    doc = g.to_doc()
    assert doc["f"][0] == ["sqrt", ["var", "x"]]
    assert doc["f"][1] == ["pow", ["sqrt", ["var", "x"]], -1]
    assert np.allclose(parse_expr(doc).eval_point([4.0]), [2.0, 0.5])
