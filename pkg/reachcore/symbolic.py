"""Vector fields ``f(x, u, w)`` held as sympy expressions.

Expressions are built either from sympy operators on the symbols returned by
:func:`var`::

    px, v = var("px"), var("v")
    f = ExprGraph([v * cos(phi)], states=["px", "phi", "v"])

or from the JSON grammar read by :func:`parse_expr`. Jacobians come from
``sympy.Matrix.jacobian``, point evaluation from ``sympy.lambdify`` and the
interval evaluator walks the common-subexpression-eliminated trees, so each
shared subexpression is bounded once.
"""
from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from cached_property import threaded_cached_property
from scipy.special import expit

from .exceptions import (
    ArityError,
    DimensionMismatch,
    ExpressionError,
    NonDifferentiableOp,
    ParseError,
    UnknownOp,
)
from .interval import (
    ELEMENTARY,
    IntervalMatrix,
    IntervalVector,
    add_bounds,
    div_bounds,
    elem_bounds,
    inflate,
    mul_bounds,
    pow_bounds,
)

BINARY = ("add", "sub", "mul", "div")

Expr = sp.Expr


class sigmoid(sp.Function):
    """The logistic function ``1 / (1 + exp(-z))``."""

    def fdiff(self, argindex=1):
        s = sigmoid(self.args[0])
        return s * (1 - s)


class relu(sp.Function):
    """``max(z, 0)``."""

    def fdiff(self, argindex=1):
        raise NonDifferentiableOp("'relu' has no derivative at zero.")


# sympy function class -> elementary function of the interval module
_FUNCTIONS = {
    sp.sin: "sin",
    sp.cos: "cos",
    sp.tan: "tan",
    sp.atan: "arctan",
    sp.tanh: "tanh",
    sp.exp: "exp",
    sp.log: "log",
    sp.Abs: "abs",
    sigmoid: "sigmoid",
    relu: "relu",
}

_LAMBDIFY_MODULES = [
    {"sigmoid": expit, "relu": lambda z: np.maximum(z, 0.0)},
    "numpy",
]


def var(name: str) -> sp.Symbol:
    return sp.Symbol(str(name), real=True)


def _number(x) -> sp.Expr:
    x = float(x)
    return sp.Integer(int(x)) if x.is_integer() else sp.Float(x)


def const(x: float) -> sp.Expr:
    return _number(x)


def _as_expr(x) -> sp.Expr:
    if isinstance(x, sp.Basic):
        return x
    if isinstance(x, numbers.Real) and not isinstance(x, bool):
        return _number(x)
    raise TypeError(f"Cannot use {type(x).__name__} in an expression.")


def sq(e):
    return _as_expr(e) ** 2


def sqrt(e):
    return sp.sqrt(_as_expr(e))


def exp(e):
    return sp.exp(_as_expr(e))


def log(e):
    return sp.log(_as_expr(e))


def sin(e):
    return sp.sin(_as_expr(e))


def cos(e):
    return sp.cos(_as_expr(e))


def tan(e):
    return sp.tan(_as_expr(e))


def arctan(e):
    return sp.atan(_as_expr(e))


def tanh(e):
    return sp.tanh(_as_expr(e))


def abs_(e):
    return sp.Abs(_as_expr(e))


_UNARY = {
    "sq": sq,
    "sqrt": sqrt,
    "exp": exp,
    "log": log,
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "arctan": arctan,
    "tanh": tanh,
    "sigmoid": lambda e: sigmoid(_as_expr(e)),
    "abs": abs_,
    "relu": lambda e: relu(_as_expr(e)),
}


def integer_power(e, k) -> sp.Expr:
    """``e ** k`` for an integer exponent."""
    if isinstance(k, float) and k.is_integer():
        k = int(k)
    if not isinstance(k, numbers.Integral) or isinstance(k, bool):
        raise ExpressionError(f"Only integer exponents are supported, got {k!r}.")
    return _as_expr(e) ** int(k)


# ---------------------------------------------------------------------------
# interval programs
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class _Step:
    op: str
    args: Tuple[int, ...] = ()
    value: object = None


class _Program:
    """Topologically ordered steps computing every output of a graph.

    Built from ``sympy.cse`` so that a repeated subexpression becomes a single
    step whose bounds are reused.
    """

    def __init__(self, exprs: Sequence[sp.Expr], symbols: Sequence[sp.Symbol]):
        self.steps: List[_Step] = []
        self._index: Dict[sp.Basic, int] = {}
        for k, s in enumerate(symbols):
            self._index[s] = self._push(_Step("var", value=k))
        replacements, reduced = sp.cse(
            list(exprs), symbols=sp.numbered_symbols("t", cls=sp.Dummy)
        )
        for temp, sub in replacements:
            self._index[temp] = self._compile(sub)
        self.roots = tuple(self._compile(e) for e in reduced)
        self.shared = len(replacements)

    def _push(self, step: _Step) -> int:
        self.steps.append(step)
        return len(self.steps) - 1

    def _constant(self, x: float) -> int:
        key = sp.Float(x)
        if key not in self._index:
            self._index[key] = self._push(_Step("const", value=float(x)))
        return self._index[key]

    def _compile(self, e: sp.Basic) -> int:
        if e in self._index:
            return self._index[e]
        if e.is_Number or e.is_NumberSymbol:
            if not e.is_finite:
                raise ExpressionError(f"Expression contains the non-finite {e}.")
            return self._constant(float(e))
        if e.is_Symbol:
            raise ParseError(f"Expression uses undeclared variable '{e}'.")
        if e.is_Add or e.is_Mul:
            args = tuple(self._compile(a) for a in e.args)
            step = _Step("add" if e.is_Add else "mul", args)
        elif e.is_Pow:
            step = self._power(e)
        elif e.func in _FUNCTIONS and len(e.args) == 1:
            step = _Step(_FUNCTIONS[e.func], (self._compile(e.args[0]),))
        elif isinstance(e, (sp.sign, sp.Heaviside, sp.Derivative)):
            raise NonDifferentiableOp(f"'{e.func.__name__}' has no interval rule.")
        else:
            raise UnknownOp(f"No interval rule for '{e.func.__name__}'.")
        self._index[e] = self._push(step)
        return self._index[e]

    def _power(self, e: sp.Pow) -> _Step:
        base, k = e.args
        if base == sp.E:
            return _Step("exp", (self._compile(k),))
        b = self._compile(base)
        if k.is_Rational and k.q == 2:
            if k.p == 1:
                return _Step("sqrt", (b,))
            b = self._push(_Step("sqrt", (b,)))
            k = sp.Integer(k.p)
        if not k.is_Integer:
            raise ExpressionError(f"Unsupported exponent {k} in {e}.")
        k = int(k)
        if k >= 0:
            return _Step("pow", (b,), k)
        powered = self._push(_Step("pow", (b,), -k)) if k != -1 else b
        return _Step("div", (self._constant(1.0), powered))

    def bounds(self, lo, hi):
        vlo, vhi = [], []
        for step in self.steps:
            op, args = step.op, step.args
            if op == "var":
                a, b = lo[..., step.value], hi[..., step.value]
            elif op == "const":
                a = b = step.value
            elif op in ("add", "mul"):
                combine = add_bounds if op == "add" else mul_bounds
                a, b = vlo[args[0]], vhi[args[0]]
                for i in args[1:]:
                    a, b = combine(a, b, vlo[i], vhi[i])
            elif op == "div":
                (i, j) = args
                a, b = div_bounds(vlo[i], vhi[i], vlo[j], vhi[j])
            elif op == "pow":
                a, b = pow_bounds(vlo[args[0]], vhi[args[0]], step.value)
            else:
                a, b = elem_bounds(op, vlo[args[0]], vhi[args[0]])
            vlo.append(a)
            vhi.append(b)
        return [vlo[r] for r in self.roots], [vhi[r] for r in self.roots]


@dataclass(frozen=True)
class JacobianBounds:
    """Interval bounds on the partial derivatives of ``f`` over a box."""

    Jx: IntervalMatrix
    Ju: IntervalMatrix
    Jw: IntervalMatrix
    domain: Tuple[IntervalVector, IntervalVector, IntervalVector]


def _stack(values, batch) -> np.ndarray:
    if not values:
        return np.zeros(batch + (0,))
    return np.stack(
        [np.broadcast_to(np.asarray(v, dtype=float), batch) for v in values], -1
    )


class ExprGraph:
    """A vector field ``f(x, u, w)`` over named state, input and disturbance
    variables.

    Parameters
    ----------
    outputs
        One sympy expression per output component. Plain numbers are accepted.
    states, inputs, disturbances
        Variable names in the order they appear in ``x``, ``u`` and ``w``.
    """

    def __init__(
        self,
        outputs: Sequence[Union[sp.Expr, float]],
        states: Sequence[str],
        inputs: Sequence[str] = (),
        disturbances: Sequence[str] = (),
    ):
        self.states = tuple(states)
        self.inputs = tuple(inputs)
        self.disturbances = tuple(disturbances)
        names = self.variables
        if len(set(names)) != len(names):
            raise ExpressionError(f"Variable names must be unique, got {names}.")
        self.symbols = tuple(var(name) for name in names)
        exprs = []
        for e in outputs:
            e = _as_expr(e)
            free = e.free_symbols
            unknown = sorted(s.name for s in free if s.name not in names)
            if unknown:
                raise ParseError(
                    f"Expression uses undeclared variable '{unknown[0]}'."
                )
            # symbols built without real=True would not match ours
            exprs.append(e.xreplace({s: var(s.name) for s in free}))
        self.exprs = tuple(exprs)

    # --- dimensions -------------------------------------------------------
    @property
    def variables(self) -> Tuple[str, ...]:
        return self.states + self.inputs + self.disturbances

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def p(self) -> int:
        return len(self.inputs)

    @property
    def q(self) -> int:
        return len(self.disturbances)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.n, self.p, self.q

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def nout(self) -> int:
        return len(self.exprs)

    def __len__(self):
        """Number of steps of the interval program."""
        return len(self._program.steps)

    @threaded_cached_property
    def _program(self) -> _Program:
        return _Program(self.exprs, self.symbols)

    @threaded_cached_property
    def _lambdified(self):
        return sp.lambdify(
            self.symbols, list(self.exprs), modules=_LAMBDIFY_MODULES, cse=True
        )

    @property
    def shared_subexpressions(self) -> int:
        return self._program.shared

    def _derived(self, exprs) -> ExprGraph:
        return ExprGraph(exprs, self.states, self.inputs, self.disturbances)

    def _join(self, x, u, w) -> IntervalVector:
        for name, box, size in (("x", x, self.n), ("u", u, self.p), ("w", w, self.q)):
            got = 0 if box is None else box.dim
            if got != size:
                raise DimensionMismatch(
                    f"Box for {name} has dimension {got}, system expects {size}."
                )
        return IntervalVector.concat(x, u, w)

    # --- evaluation -------------------------------------------------------
    def eval_bounds(self, lo, hi, inflation: float = 0.0):
        """Natural interval evaluation over boxes of the joint variable vector.

        Parameters
        ----------
        lo, hi
            Arrays of shape ``(..., nvars)``.
        inflation
            Relative widening of each output, see :func:`~.interval.inflate`.

        Returns
        -------
        lo, hi
            Arrays of shape ``(..., nout)``.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape[-1:] != (self.nvars,):
            raise DimensionMismatch(
                f"Expected boxes with {self.nvars} variables, got shape {lo.shape}."
            )
        out_lo, out_hi = self._program.bounds(lo, hi)
        batch = lo.shape[:-1]
        return inflate(_stack(out_lo, batch), _stack(out_hi, batch), inflation)

    def eval_point(self, z) -> np.ndarray:
        """Evaluate at points of shape ``(..., nvars)``."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1:] != (self.nvars,):
            raise DimensionMismatch(
                f"Expected points with {self.nvars} variables, got shape {z.shape}."
            )
        values = self._lambdified(*np.moveaxis(z, -1, 0))
        return _stack(values, z.shape[:-1])

    def __call__(self, x, u=(), w=()) -> np.ndarray:
        parts = [np.asarray(a, dtype=float) for a in (x, u, w)]
        z = np.concatenate([np.atleast_1d(a) for a in parts if np.size(a)], axis=-1)
        return self.eval_point(z)

    def eval_interval(
        self,
        x: IntervalVector,
        u: Optional[IntervalVector] = None,
        w: Optional[IntervalVector] = None,
    ) -> IntervalVector:
        """Natural inclusion of the outputs over ``x``, ``u`` and ``w``."""
        box = self._join(x, u, w)
        return IntervalVector(*self.eval_bounds(box.lo, box.hi))

    # --- differentiation --------------------------------------------------
    @threaded_cached_property
    def jacobian(self) -> sp.Matrix:
        """The symbolic Jacobian, ``(nout, nvars)``."""
        if not self.exprs:
            return sp.zeros(0, self.nvars)
        J = sp.Matrix(self.exprs).jacobian(self.symbols)
        if J.has(sp.sign, sp.Heaviside, sp.Derivative):
            raise NonDifferentiableOp(
                "The vector field uses a function with no derivative at zero."
            )
        return J

    @threaded_cached_property
    def jacobian_graph(self) -> ExprGraph:
        """All partials, flattened row-major as ``(nout, nvars)``."""
        return self._derived(list(self.jacobian))

    @threaded_cached_property
    def column_graphs(self) -> List[ExprGraph]:
        """For each variable ``k``, the graph of the column ``df/dz_k``."""
        J = self.jacobian
        return [self._derived(list(J[:, k])) for k in range(self.nvars)]

    def jacobian_bounds_arrays(self, lo, hi):
        """Bounds of shape ``(..., nout, nvars)`` over boxes ``(..., nvars)``."""
        jlo, jhi = self.jacobian_graph.eval_bounds(lo, hi)
        shape = jlo.shape[:-1] + (self.nout, self.nvars)
        return jlo.reshape(shape), jhi.reshape(shape)

    def jacobian_point(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        jac = self.jacobian_graph.eval_point(z)
        return jac.reshape(z.shape[:-1] + (self.nout, self.nvars))

    # --- serialization ----------------------------------------------------
    def to_doc(self) -> dict:
        """A system document in the JSON expression grammar."""
        return {
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "states": list(self.states),
            "inputs": list(self.inputs),
            "disturbances": list(self.disturbances),
            "f": [_to_node(e) for e in self.exprs],
        }

    def __repr__(self):
        return (
            f"ExprGraph(n={self.n}, p={self.p}, q={self.q}, "
            f"outputs={self.nout}, nodes={len(self)})"
        )


def _fold(op, nodes):
    out = nodes[0]
    for node in nodes[1:]:
        out = [op, out, node]
    return out


def _to_node(e: sp.Basic) -> list:
    if e.is_Symbol:
        return ["var", e.name]
    if e.is_Number or e.is_NumberSymbol:
        x = float(e)
        return ["const", int(x) if x.is_integer() else x]
    if e.is_Add:
        return _fold("add", [_to_node(a) for a in e.args])
    if e.is_Mul:
        return _fold("mul", [_to_node(a) for a in e.args])
    if e.is_Pow:
        base, k = e.args
        if base == sp.E:
            return ["exp", _to_node(k)]
        node = _to_node(base)
        if k.is_Rational and k.q == 2:
            node, k = ["sqrt", node], sp.Integer(k.p)
        if not k.is_Integer:
            raise UnknownOp(f"Exponent {k} has no document form.")
        if k == 1:
            return node
        return ["pow", node, int(k)]
    if e.func in _FUNCTIONS:
        return [_FUNCTIONS[e.func], _to_node(e.args[0])]
    raise UnknownOp(f"'{e.func.__name__}' has no document form.")


# ---------------------------------------------------------------------------
# module-level API
# ---------------------------------------------------------------------------
def linear_graph(A, B=None, D=None, c=None, prefix=("x", "u", "w")) -> ExprGraph:
    """The graph of ``A x + B u + D w + c``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    D = np.zeros((n, 0)) if D is None else np.asarray(D, dtype=float).reshape(n, -1)
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    groups = []
    columns = []
    for name, M in zip(prefix, (A, B, D)):
        names = [f"{name}{k + 1}" for k in range(M.shape[1])]
        groups.append(names)
        columns.append(sp.Matrix([var(s) for s in names]))
    f = sp.Matrix([_number(ci) for ci in c])
    for M, z in zip((A, B, D), columns):
        if M.shape[1]:
            f += sp.Matrix(M.shape[0], M.shape[1], [_number(m) for m in M.flat]) * z
    return ExprGraph(list(f), *groups)


def _node_to_expr(node, path: str, declared: Optional[set]) -> sp.Expr:
    if not isinstance(node, list) or not node or not isinstance(node[0], str):
        raise ParseError(f"{path}: a node must be a list starting with an op name.")
    op, args = node[0], node[1:]
    if op == "var":
        if len(args) != 1 or not isinstance(args[0], str):
            raise ArityError(f"{path}: 'var' takes exactly one name.")
        if declared is not None and args[0] not in declared:
            raise ParseError(f"{path}: undeclared variable '{args[0]}'.")
        return var(args[0])
    if op == "const":
        if (
            len(args) != 1
            or not isinstance(args[0], numbers.Real)
            or isinstance(args[0], bool)
        ):
            raise ArityError(f"{path}: 'const' takes exactly one number.")
        return const(args[0])
    if op == "pow":
        if len(args) != 2:
            raise ArityError(f"{path}: 'pow' takes a base and an integer exponent.")
        k = args[1]
        if isinstance(k, list) and len(k) == 2 and k[0] == "const":
            k = k[1]
        if not isinstance(k, numbers.Real) or isinstance(k, bool):
            raise ParseError(f"{path}/2: exponent must be an integer.")
        if not float(k).is_integer():
            raise ParseError(f"{path}/2: exponent must be an integer, got {k}.")
        return integer_power(_node_to_expr(args[0], f"{path}/1", declared), int(k))
    if op in BINARY:
        arity = 2
    elif op in ELEMENTARY:
        arity = 1
    else:
        raise UnknownOp(f"{path}: unknown op '{op}'.")
    if len(args) != arity:
        raise ArityError(f"{path}: '{op}' takes {arity} argument(s), got {len(args)}.")
    children = [
        _node_to_expr(a, f"{path}/{k + 1}", declared) for k, a in enumerate(args)
    ]
    if op == "add":
        return children[0] + children[1]
    if op == "sub":
        return children[0] - children[1]
    if op == "mul":
        return children[0] * children[1]
    if op == "div":
        return children[0] / children[1]
    return _UNARY[op](children[0])


def _collect_vars(node, found: List[str]):
    if isinstance(node, list) and node:
        if node[0] == "var" and len(node) == 2 and isinstance(node[1], str):
            if node[1] not in found:
                found.append(node[1])
        else:
            for child in node[1:]:
                _collect_vars(child, found)


def parse_expr(spec) -> ExprGraph:
    """Build a graph from a system document or a single expression node.

    A bare node becomes a one-output graph whose states are its variables in
    order of first appearance.
    """
    if isinstance(spec, list):
        names: List[str] = []
        _collect_vars(spec, names)
        return ExprGraph([_node_to_expr(spec, "f[0]", None)], names)
    if not isinstance(spec, dict):
        raise ParseError("An expression document must be a list or a dict.")

    groups = []
    for key, dim in (("states", "n"), ("inputs", "p"), ("disturbances", "q")):
        names = spec.get(key, [])
        if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
            raise ParseError(f"'{key}' must be a list of names.")
        if dim in spec and spec[dim] != len(names):
            raise ParseError(
                f"'{dim}' is {spec[dim]} but {len(names)} {key} are declared."
            )
        groups.append(names)
    if "f" not in spec or not isinstance(spec["f"], list):
        raise ParseError("A system document needs a list of outputs under 'f'.")
    declared = set(sum(groups, []))
    outputs = [
        _node_to_expr(node, f"f[{j}]", declared) for j, node in enumerate(spec["f"])
    ]
    return ExprGraph(outputs, *groups)


def eval_interval(
    g: ExprGraph,
    x: IntervalVector,
    u: Optional[IntervalVector] = None,
    w: Optional[IntervalVector] = None,
) -> IntervalVector:
    return g.eval_interval(x, u, w)


def symbolic_jacobian(g: ExprGraph) -> Tuple[ExprGraph, ExprGraph, ExprGraph]:
    """Partial-derivative graphs in x, u and w, each flattened row-major."""
    n, p, _ = g.dims
    J = g.jacobian
    groups = (slice(0, n), slice(n, n + p), slice(n + p, g.nvars))
    return tuple(g._derived(list(J[:, cols])) for cols in groups)


def jacobian_bounds(
    g: ExprGraph,
    x: IntervalVector,
    u: Optional[IntervalVector] = None,
    w: Optional[IntervalVector] = None,
) -> JacobianBounds:
    """Natural inclusion of the symbolic Jacobian over the box."""
    box = g._join(x, u, w)
    jlo, jhi = g.jacobian_bounds_arrays(box.lo, box.hi)
    n, p, _ = g.dims
    split = [slice(0, n), slice(n, n + p), slice(n + p, g.nvars)]
    Jx, Ju, Jw = (IntervalMatrix(jlo[:, s], jhi[:, s]) for s in split)
    empty = IntervalVector(np.zeros(0))
    return JacobianBounds(Jx, Ju, Jw, (x, u or empty, w or empty))
