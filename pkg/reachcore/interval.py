"""Interval arithmetic kernel.

Scalar :class:`Interval` values, box-shaped :class:`IntervalVector` and
:class:`IntervalMatrix` containers, and the array-level bound functions that
every other module calls. The array functions take ``lo``/``hi`` arrays of any
matching shape, so a batch of boxes is evaluated in one pass.

Ranges are exact for every elementary operation: they follow piecewise
monotonicity and the location of critical points. No outward rounding is
applied; :func:`inflate` widens bounds by a relative factor when that is
needed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .exceptions import (
    DimensionMismatch,
    DivisionByZeroInterval,
    DomainError,
    InvalidInterval,
    NonSquare,
    TanSingularity,
)

ELEMENTARY = (
    "sq",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "tan",
    "arctan",
    "tanh",
    "sigmoid",
    "abs",
    "relu",
)

ArrayPair = Tuple[np.ndarray, np.ndarray]


class _Empty:
    """The result of intersecting disjoint intervals."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self):
        return False

    def __repr__(self):
        return "EMPTY"


#: Sentinel returned by intersection helpers when the result is empty.
EMPTY = _Empty()


def _check_order(lo, hi):
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
        raise InvalidInterval("Interval endpoints must not be NaN.")
    if np.any(lo > hi):
        bad = np.argwhere(np.atleast_1d(lo > hi))[0]
        raise InvalidInterval(
            f"Lower bound exceeds upper bound at index {tuple(bad)}: "
            f"{np.atleast_1d(lo)[tuple(bad)]} > {np.atleast_1d(hi)[tuple(bad)]}."
        )


@dataclass(frozen=True)
class Interval:
    """A closed real interval ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        _check_order(self.lo, self.hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def issubset(self, other: Interval, tol: float = 0.0) -> bool:
        return other.lo - tol <= self.lo and self.hi <= other.hi + tol

    def __add__(self, other):
        return iv_add(self, _as_interval(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _as_interval(other))

    def __rsub__(self, other):
        return iv_sub(_as_interval(other), self)

    def __mul__(self, other):
        return iv_mul(self, _as_interval(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, _as_interval(other))

    def __rtruediv__(self, other):
        return iv_div(_as_interval(other), self)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __repr__(self):
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


def _as_interval(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(x)


# ---------------------------------------------------------------------------
# array-level bounds
# ---------------------------------------------------------------------------
def add_bounds(alo, ahi, blo, bhi) -> ArrayPair:
    return alo + blo, ahi + bhi


def sub_bounds(alo, ahi, blo, bhi) -> ArrayPair:
    return alo - bhi, ahi - blo


def mul_bounds(alo, ahi, blo, bhi) -> ArrayPair:
    """Exact range of the product over ``[alo, ahi] x [blo, bhi]``."""
    products = (alo * blo, alo * bhi, ahi * blo, ahi * bhi)
    return np.minimum.reduce(products), np.maximum.reduce(products)


def div_bounds(alo, ahi, blo, bhi) -> ArrayPair:
    """Exact range of the quotient; the denominator must exclude zero."""
    if np.any((blo <= 0) & (bhi >= 0)):
        raise DivisionByZeroInterval(
            "Cannot divide by an interval that contains zero."
        )
    return mul_bounds(alo, ahi, 1.0 / bhi, 1.0 / blo)


def pow_bounds(lo, hi, k: int) -> ArrayPair:
    """Exact range of ``x ** k`` for a nonnegative integer ``k``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if k == 0:
        return np.ones_like(lo), np.ones_like(hi)
    if k % 2:
        return lo ** k, hi ** k
    return _even_bounds(lo, hi, lambda z: z ** k)


def _contains_periodic(lo, hi, offset, period):
    """Whether ``offset + k * period`` lies in ``[lo, hi]`` for some integer k."""
    k = np.ceil((lo - offset) / period)
    return (hi - lo >= period) | (offset + k * period <= hi)


def _even_bounds(lo, hi, fn):
    flo, fhi = fn(lo), fn(hi)
    straddles = (lo < 0) & (hi > 0)
    out_lo = np.where(straddles, 0.0, np.minimum(flo, fhi))
    return out_lo, np.maximum(flo, fhi)


def _periodic_bounds(fn, argmax, argmin):
    def bounds(lo, hi):
        flo, fhi = fn(lo), fn(hi)
        has_max = _contains_periodic(lo, hi, argmax, 2 * np.pi)
        has_min = _contains_periodic(lo, hi, argmin, 2 * np.pi)
        out_lo = np.where(has_min, -1.0, np.minimum(flo, fhi))
        out_hi = np.where(has_max, 1.0, np.maximum(flo, fhi))
        return out_lo, out_hi

    return bounds


def _monotone(fn):
    def bounds(lo, hi):
        return fn(lo), fn(hi)

    return bounds


def _sqrt_bounds(lo, hi):
    if np.any(lo < 0):
        raise DomainError("sqrt requires a nonnegative argument interval.")
    return np.sqrt(lo), np.sqrt(hi)


def _log_bounds(lo, hi):
    if np.any(lo <= 0):
        raise DomainError("log requires a strictly positive argument interval.")
    return np.log(lo), np.log(hi)


def _tan_bounds(lo, hi):
    if np.any(_contains_periodic(lo, hi, np.pi / 2, np.pi)):
        raise TanSingularity("The argument interval of tan contains a pole.")
    return np.tan(lo), np.tan(hi)


_ELEM_BOUNDS = {
    "sq": lambda lo, hi: _even_bounds(lo, hi, np.square),
    "abs": lambda lo, hi: _even_bounds(lo, hi, np.abs),
    "sqrt": _sqrt_bounds,
    "log": _log_bounds,
    "exp": _monotone(np.exp),
    "arctan": _monotone(np.arctan),
    "tanh": _monotone(np.tanh),
    "sigmoid": _monotone(expit),
    "relu": _monotone(lambda x: np.maximum(x, 0.0)),
    "sin": _periodic_bounds(np.sin, np.pi / 2, -np.pi / 2),
    "cos": _periodic_bounds(np.cos, 0.0, np.pi),
    "tan": _tan_bounds,
}

#: Pointwise versions of the elementary functions.
ELEM_POINT = {
    "sq": np.square,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "log": np.log,
    "exp": np.exp,
    "arctan": np.arctan,
    "tanh": np.tanh,
    "sigmoid": expit,
    "relu": lambda x: np.maximum(x, 0.0),
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
}


def elem_bounds(fn_name: str, lo, hi) -> ArrayPair:
    """Exact range of an elementary function over each ``[lo, hi]``."""
    try:
        fn = _ELEM_BOUNDS[fn_name]
    except KeyError:
        raise ValueError(f"Unknown elementary function '{fn_name}'.")
    return fn(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))


def inflate(lo, hi, eps: float) -> ArrayPair:
    """Scale each width by ``1 + eps`` about its midpoint."""
    if eps == 0:
        return lo, hi
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo) * (1 + eps)
    return mid - rad, mid + rad


def intersect_bounds(alo, ahi, blo, bhi):
    """Componentwise intersection, or :data:`EMPTY` if any component is empty."""
    lo, hi = np.maximum(alo, blo), np.minimum(ahi, bhi)
    if np.any(lo > hi):
        return EMPTY
    return lo, hi


# ---------------------------------------------------------------------------
# scalar operations
# ---------------------------------------------------------------------------
def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(*add_bounds(a.lo, a.hi, b.lo, b.hi))


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(*sub_bounds(a.lo, a.hi, b.lo, b.hi))


def iv_mul(a: Interval, b: Interval) -> Interval:
    return Interval(*mul_bounds(a.lo, a.hi, b.lo, b.hi))


def iv_div(a: Interval, b: Interval) -> Interval:
    return Interval(*div_bounds(a.lo, a.hi, b.lo, b.hi))


def iv_elem(fn_name: str, a: Interval) -> Interval:
    lo, hi = elem_bounds(fn_name, a.lo, a.hi)
    return Interval(lo, hi)


# ---------------------------------------------------------------------------
# vectors and matrices
# ---------------------------------------------------------------------------
class IntervalVector:
    """A box: one closed interval per coordinate.

    Parameters
    ----------
    lo, hi
        Lower and upper corners. If ``hi`` is omitted the box is degenerate.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionMismatch(
                f"Lower corner has {lo.size} entries but upper has {hi.size}."
            )
        _check_order(lo, hi)
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> IntervalVector:
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    @classmethod
    def degenerate(cls, point) -> IntervalVector:
        return cls(point)

    @classmethod
    def concat(cls, *boxes: IntervalVector) -> IntervalVector:
        boxes = [b for b in boxes if b is not None]
        if not boxes:
            return cls(np.zeros(0))
        return cls(
            np.concatenate([b.lo for b in boxes]), np.concatenate([b.hi for b in boxes])
        )

    @property
    def dim(self) -> int:
        return self.lo.size

    def __len__(self):
        return self.dim

    def __getitem__(self, key) -> Union[Interval, IntervalVector]:
        if isinstance(key, (int, np.integer)):
            return Interval(self.lo[key], self.hi[key])
        return IntervalVector(self.lo[key], self.hi[key])

    def __iter__(self):
        return (Interval(lo, hi) for lo, hi in zip(self.lo, self.hi))

    @property
    def elems(self) -> List[Interval]:
        return list(self)

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def width(self) -> float:
        return float(self.widths.max()) if self.dim else 0.0

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, point, tol: float = 0.0):
        """Whether ``point`` (or each row of a point array) lies in the box."""
        point = np.asarray(point, dtype=float)
        inside = (point >= self.lo - tol) & (point <= self.hi + tol)
        return np.all(inside, axis=-1)

    def issubset(self, other: IntervalVector, tol: float = 0.0) -> bool:
        return bool(
            np.all(other.lo - tol <= self.lo) and np.all(self.hi <= other.hi + tol)
        )

    def intersect(self, other: IntervalVector):
        """The intersection box, or :data:`EMPTY`."""
        result = intersect_bounds(self.lo, self.hi, other.lo, other.hi)
        return result if result is EMPTY else IntervalVector(*result)

    def hull(self, other: IntervalVector) -> IntervalVector:
        return IntervalVector(
            np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi)
        )

    def split(self, axis: int) -> Tuple[IntervalVector, IntervalVector]:
        mid = self.midpoint[axis]
        left_hi, right_lo = self.hi.copy(), self.lo.copy()
        left_hi[axis] = mid
        right_lo[axis] = mid
        return IntervalVector(self.lo, left_hi), IntervalVector(right_lo, self.hi)

    def partition(self, k: int) -> List[IntervalVector]:
        """Split every coordinate into ``k`` equal pieces (``k ** dim`` boxes)."""
        edges = [np.linspace(lo, hi, k + 1) for lo, hi in zip(self.lo, self.hi)]
        boxes = []
        for index in itertools.product(range(k), repeat=self.dim):
            lo = [edges[i][j] for i, j in enumerate(index)]
            hi = [edges[i][j + 1] for i, j in enumerate(index)]
            boxes.append(IntervalVector(lo, hi))
        return boxes

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples of shape ``(size, dim)``."""
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))

    def area(self, i: int = 0, j: int = 1) -> float:
        return float(self.widths[i] * self.widths[j])

    def tolist(self) -> List[List[float]]:
        return [[float(lo), float(hi)] for lo, hi in zip(self.lo, self.hi)]

    def __eq__(self, other):
        if not isinstance(other, IntervalVector):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __repr__(self):
        return " x ".join(repr(iv) for iv in self)


class IntervalMatrix:
    """A matrix whose entries are closed intervals."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise DimensionMismatch(
                f"Expected two matrices of equal shape, got {lo.shape} and {hi.shape}."
            )
        _check_order(lo, hi)
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_matrix(cls, A) -> IntervalMatrix:
        return cls(A)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.lo.shape

    @property
    def rows(self) -> int:
        return self.lo.shape[0]

    @property
    def cols(self) -> int:
        return self.lo.shape[1]

    def __getitem__(self, key) -> Interval:
        return Interval(self.lo[key], self.hi[key])

    def contains(self, A, tol: float = 0.0) -> bool:
        A = np.asarray(A, dtype=float)
        return bool(np.all(A >= self.lo - tol) and np.all(A <= self.hi + tol))

    def __repr__(self):
        return f"IntervalMatrix(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def mat_pos_neg_split(A) -> Tuple[np.ndarray, np.ndarray]:
    """Split ``A`` into its nonnegative and nonpositive parts."""
    A = np.asarray(A, dtype=float)
    return np.maximum(A, 0.0), np.minimum(A, 0.0)


def mat_metzler_split(A) -> Tuple[np.ndarray, np.ndarray]:
    """Split a square ``A`` into its Metzler and non-Metzler parts."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquare(f"Metzler split needs a square matrix, got shape {A.shape}.")
    keep = (A >= 0) | np.eye(A.shape[0], dtype=bool)
    Am = np.where(keep, A, 0.0)
    return Am, A - Am


def linear_map_bounds(A, lo, hi) -> ArrayPair:
    """Exact range of ``z -> A z`` over each box in a batch of shape (..., n)."""
    Ap, An = mat_pos_neg_split(A)
    return lo @ Ap.T + hi @ An.T, lo @ An.T + hi @ Ap.T


def interval_linear_map(A, v: IntervalVector) -> IntervalVector:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != v.dim:
        raise DimensionMismatch(
            f"Matrix with {A.shape[1]} columns cannot act on a box of dim {v.dim}."
        )
    return IntervalVector(*linear_map_bounds(A, v.lo, v.hi))
