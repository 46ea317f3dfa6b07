import numpy as np
import pytest

from reachcore.exceptions import (
    DimensionMismatch,
    DivisionByZeroInterval,
    DomainError,
    InvalidInterval,
    NonSquare,
    TanSingularity,
)
from reachcore.interval import (
    EMPTY,
    ELEM_POINT,
    ELEMENTARY,
    Interval,
    IntervalMatrix,
    IntervalVector,
    elem_bounds,
    inflate,
    interval_linear_map,
    linear_map_bounds,
    mat_metzler_split,
    mat_pos_neg_split,
)


@pytest.fixture(scope="function")
def box():
    return IntervalVector([-1.0, 0.0], [1.0, 2.0])


def test_interval_rejects_reversed_endpoints():
    with pytest.raises(InvalidInterval) as err:
        Interval(1, 0)
    assert "exceeds" in str(err.value)


def test_interval_rejects_nan():
    with pytest.raises(InvalidInterval):
        Interval(np.nan, 1)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((0, 1), (-1, 2), (-1, 2)),
        ((-2, -1), (-3, 4), (-8, 6)),
        ((1, 2), (3, 4), (3, 8)),
    ],
)
def test_interval_product(a, b, expected):
    assert Interval(*a) * Interval(*b) == Interval(*expected)


def test_interval_arithmetic_with_scalars():
    a = Interval(1, 2)
    assert a + 1 == Interval(2, 3)
    assert 1 - a == Interval(-1, 0)
    assert -a == Interval(-2, -1)
    assert 2 / a == Interval(1, 2)


def test_division_by_interval_containing_zero():
    with pytest.raises(DivisionByZeroInterval):
        Interval(1, 2) / Interval(-1, 1)


@pytest.mark.parametrize(
    "fn, lo, hi, expected",
    [
        ("sq", -1, 2, (0, 4)),
        ("abs", -3, 1, (0, 3)),
        ("sin", 0, np.pi, (0, 1)),
        ("cos", -1, 1, (np.cos(1), 1)),
        ("sin", 0, 2 * np.pi, (-1, 1)),
        ("exp", 0, 1, (1, np.e)),
        ("relu", -1, 2, (0, 2)),
        ("tanh", -1, 1, (np.tanh(-1), np.tanh(1))),
    ],
)
def test_elementary_ranges(fn, lo, hi, expected):
    out_lo, out_hi = elem_bounds(fn, lo, hi)
    assert np.allclose([out_lo, out_hi], expected, atol=1e-12)


@pytest.mark.parametrize("fn", ELEMENTARY)
def test_elementary_bounds_contain_samples(fn):
    lo, hi = (0.1, 1.2) if fn in ("sqrt", "log", "tan") else (-2.0, 1.5)
    out_lo, out_hi = elem_bounds(fn, lo, hi)
    x = np.linspace(lo, hi, 1001)
    y = ELEM_POINT[fn](x)
    assert np.all(y >= out_lo - 1e-12)
    assert np.all(y <= out_hi + 1e-12)
    # ranges are exact, so the sampled extremes come close
    assert np.isclose(y.min(), out_lo, atol=1e-5)
    assert np.isclose(y.max(), out_hi, atol=1e-5)


@pytest.mark.parametrize(
    "fn, lo, hi, error",
    [
        ("sqrt", -1, 1, DomainError),
        ("log", 0, 1, DomainError),
        ("tan", 1, 2, TanSingularity),
    ],
)
def test_elementary_domain_errors(fn, lo, hi, error):
    with pytest.raises(error):
        elem_bounds(fn, lo, hi)


def test_unknown_elementary():
    with pytest.raises(ValueError) as err:
        elem_bounds("cosh", 0, 1)
    assert "cosh" in str(err.value)


def test_elem_bounds_are_batched():
    lo = np.array([[0.0, -1.0], [1.0, 2.0]])
    hi = lo + 0.5
    out_lo, out_hi = elem_bounds("sq", lo, hi)
    assert out_lo.shape == (2, 2)
    assert np.allclose(out_hi, np.maximum(lo ** 2, hi ** 2))


def test_inflate():
    lo, hi = inflate(np.array([0.0]), np.array([2.0]), 0.5)
    assert np.allclose([lo, hi], [-0.5, 2.5])


def test_box_properties(box):
    assert box.dim == 2
    assert np.allclose(box.widths, [2, 2])
    assert box.width == 2
    assert np.allclose(box.midpoint, [0, 1])
    assert box.area() == 4
    assert box[1] == Interval(0, 2)
    assert box.tolist() == [[-1.0, 1.0], [0.0, 2.0]]


def test_box_from_pairs(box):
    assert IntervalVector.from_pairs([[-1, 1], [0, 2]]) == box


def test_box_mismatched_corners():
    with pytest.raises(DimensionMismatch):
        IntervalVector([0, 0], [1])


def test_box_contains(box):
    points = np.array([[0, 1], [2, 1], [1, 2]])
    assert box.contains(points).tolist() == [True, False, True]
    assert box.contains([1.05, 0], tol=0.1)


def test_box_issubset(box):
    inner = IntervalVector([-0.5, 0.5], [0.5, 1.5])
    assert inner.issubset(box)
    assert not box.issubset(inner)


def test_box_intersect_and_hull(box):
    other = IntervalVector([0, 1], [3, 3])
    assert box.intersect(other) == IntervalVector([0, 1], [1, 2])
    assert box.hull(other) == IntervalVector([-1, 0], [3, 3])
    assert box.intersect(IntervalVector([5, 5], [6, 6])) is EMPTY
    assert not EMPTY


def test_box_split(box):
    left, right = box.split(1)
    assert left == IntervalVector([-1, 0], [1, 1])
    assert right == IntervalVector([-1, 1], [1, 2])


def test_box_partition_covers(box):
    pieces = box.partition(3)
    assert len(pieces) == 9
    hull = pieces[0]
    for piece in pieces[1:]:
        hull = hull.hull(piece)
    assert hull == box
    assert np.isclose(sum(p.area() for p in pieces), box.area())


def test_box_samples_inside(box):
    rng = np.random.default_rng(0)
    samples = box.sample(rng, 50)
    assert samples.shape == (50, 2)
    assert np.all(box.contains(samples))


def test_box_concat():
    a = IntervalVector([0], [1])
    b = IntervalVector([2, 3], [4, 5])
    assert IntervalVector.concat(a, None, b) == IntervalVector([0, 2, 3], [1, 4, 5])
    assert IntervalVector.concat().dim == 0


def test_box_is_read_only(box):
    with pytest.raises(ValueError):
        box.lo[0] = 5


def test_interval_matrix():
    M = IntervalMatrix([[0, 1], [2, 3]], [[1, 1], [2, 4]])
    assert M.shape == (2, 2)
    assert M[1, 1] == Interval(3, 4)
    assert M.contains([[0.5, 1], [2, 3.5]])
    assert IntervalMatrix.from_matrix(np.eye(2)).contains(np.eye(2))
    with pytest.raises(DimensionMismatch):
        IntervalMatrix([1, 2])


def test_pos_neg_split():
    A = np.array([[1.0, -2.0], [-3.0, 4.0]])
    Ap, An = mat_pos_neg_split(A)
    assert np.allclose(Ap + An, A)
    assert np.all(Ap >= 0) and np.all(An <= 0)


def test_metzler_split():
    A = np.array([[-2.0, -1.0], [3.0, -1.0]])
    Am, Ar = mat_metzler_split(A)
    assert np.allclose(Am, [[-2, 0], [3, -1]])
    assert np.allclose(Ar, [[0, -1], [0, 0]])
    with pytest.raises(NonSquare):
        mat_metzler_split(np.ones((2, 3)))


def test_linear_map_bounds_exact():
    lo, hi = linear_map_bounds(np.array([[1.0, -1.0]]), np.zeros(2), np.ones(2))
    assert np.allclose([lo, hi], [[-1], [1]])


def test_interval_linear_map_dimension_check(box):
    with pytest.raises(DimensionMismatch):
        interval_linear_map(np.eye(3), box)
    assert interval_linear_map(2 * np.eye(2), box) == IntervalVector([-2, 0], [2, 4])
