"""Inclusion functions: maps from boxes to boxes that bound a function's image.

All constructors return :class:`InclusionFn` objects working on boxes of the
joint variable vector ``(x, u, w)``. They are immutable and can be shared by
concurrent workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .exceptions import (
    DecompositionPropertyViolation,
    DimensionMismatch,
    DimensionTooLarge,
    EmptyResult,
    OutsideLocalization,
)
from .interval import EMPTY, IntervalVector, intersect_bounds
from .symbolic import ExprGraph

BoundsFn = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


class InclusionFn:
    """A box-in, box-out bound on a function.

    Parameters
    ----------
    bounds
        Callable taking ``lo, hi`` arrays of shape ``(..., nvars)`` and
        returning output bounds of shape ``(..., nout)``.
    nvars, nout
        Input and output dimensions.
    localization
        Optional box outside of which the bounds are not guaranteed.
    thin, monotone
        Tags describing the inclusion function.
    name
        Label used in reports.
    """

    def __init__(
        self,
        bounds: BoundsFn,
        nvars: int,
        nout: int,
        localization: Optional[IntervalVector] = None,
        thin: bool = False,
        monotone: bool = False,
        name: str = "",
    ):
        self._bounds = bounds
        self.nvars = nvars
        self.nout = nout
        self.localization = localization
        self.thin = thin
        self.monotone = monotone
        self.name = name

    def bounds(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape[-1:] != (self.nvars,):
            raise DimensionMismatch(
                f"{self.name or 'Inclusion'} expects {self.nvars} variables, "
                f"got shape {lo.shape}."
            )
        loc = self.localization
        if loc is not None and not (np.all(lo >= loc.lo) and np.all(hi <= loc.hi)):
            raise OutsideLocalization(
                f"Input box is not contained in the localization {loc!r}."
            )
        return self._bounds(lo, hi)

    def __call__(
        self,
        x: IntervalVector,
        u: Optional[IntervalVector] = None,
        w: Optional[IntervalVector] = None,
    ) -> IntervalVector:
        box = IntervalVector.concat(x, u, w)
        return IntervalVector(*self.bounds(box.lo, box.hi))

    def localized(self, domain: IntervalVector) -> InclusionFn:
        return InclusionFn(
            self._bounds,
            self.nvars,
            self.nout,
            localization=domain,
            thin=self.thin,
            monotone=self.monotone,
            name=self.name,
        )

    def __repr__(self):
        return f"InclusionFn({self.name or 'anonymous'}: {self.nvars} -> {self.nout})"


@dataclass(frozen=True)
class Corner:
    """Which endpoint (``True`` for the upper one) anchors each variable."""

    upper: Tuple[bool, ...]

    @classmethod
    def lo(cls, dim: int) -> Corner:
        return cls((False,) * dim)

    @classmethod
    def hi(cls, dim: int) -> Corner:
        return cls((True,) * dim)

    @classmethod
    def from_groups(cls, dims: Sequence[int], upper: Sequence[bool]) -> Corner:
        """One lo/hi choice per variable group, e.g. ``(n, p, q)``."""
        return cls(tuple(u for size, u in zip(dims, upper) for _ in range(size)))

    def __len__(self):
        return len(self.upper)

    def point(self, lo, hi) -> np.ndarray:
        if lo.shape[-1] != len(self):
            raise DimensionMismatch(
                f"Corner selects {len(self)} coordinates, box has {lo.shape[-1]}."
            )
        return np.where(self.upper, hi, lo)


def corner_preset(dims: Sequence[int], count: int) -> List[Corner]:
    """The 1-, 2- or 4-corner sets.

    Four corners pair lo/hi choices of the first two nonempty variable
    groups; a single group is split into its leading and trailing halves.
    """
    dims = [d for d in dims]
    total = sum(dims)
    if count == 1:
        return [Corner.lo(total)]
    if count == 2:
        return [Corner.lo(total), Corner.hi(total)]
    if count != 4:
        raise ValueError(f"Corner presets have 1, 2 or 4 corners, not {count}.")
    groups = [d for d in dims if d]
    if len(groups) == 1:
        first = groups[0] // 2 or 1
        dims, groups = [first, total - first], [first, total - first]
    first, second = [i for i, d in enumerate(dims) if d][:2]
    corners = []
    for a in (False, True):
        for b in (False, True):
            choice = [False] * len(dims)
            choice[first], choice[second] = a, b
            corners.append(Corner.from_groups(dims, choice))
    return corners


def _as_corner_list(corner, nvars) -> List[Corner]:
    if corner is None:
        return [Corner.lo(nvars)]
    corners = [corner] if isinstance(corner, Corner) else list(corner)
    for c in corners:
        if len(c) != nvars:
            raise DimensionMismatch(
                f"Corner selects {len(c)} coordinates, graph has {nvars} variables."
            )
    return corners


def _intersect_all(results):
    lo, hi = results[0]
    for other_lo, other_hi in results[1:]:
        lo, hi = np.maximum(lo, other_lo), np.minimum(hi, other_hi)
    if np.any(lo > hi):
        raise EmptyResult("Intersecting sound bounds produced an empty box.")
    return lo, hi


def cornered_from_jacobian(gc, c, lo, hi, Jlo, Jhi, upper):
    """Expand around corner ``c`` given column-wise Jacobian bounds.

    ``Jlo``/``Jhi`` have shape ``(..., nout, nvars)``; ``upper`` marks the
    columns anchored at the upper endpoint.
    """
    JL = np.where(upper, Jhi, Jlo)
    JU = np.where(upper, Jlo, Jhi)
    dlo = (lo - c)[..., None, :]
    dhi = (hi - c)[..., None, :]
    lower = gc + np.sum(np.maximum(JL, 0) * dlo + np.minimum(JL, 0) * dhi, axis=-1)
    upper_b = gc + np.sum(np.maximum(JU, 0) * dhi + np.minimum(JU, 0) * dlo, axis=-1)
    return lower, upper_b


def mixed_boxes(lo, hi, c, ordering) -> Tuple[np.ndarray, np.ndarray]:
    """For each variable, the box where later variables sit at the corner.

    Returns arrays of shape ``(nvars, ..., nvars)`` indexed by variable.
    """
    m = lo.shape[-1]
    blo = np.broadcast_to(lo, (m,) + lo.shape).copy()
    bhi = np.broadcast_to(hi, (m,) + hi.shape).copy()
    for r, k in enumerate(ordering):
        later = list(ordering[r + 1 :])
        blo[k][..., later] = c[..., later]
        bhi[k][..., later] = c[..., later]
    return blo, bhi


def mixed_jacobian_bounds(g: ExprGraph, lo, hi, c, ordering, columns=None):
    """Column-wise Jacobian bounds for the mixed expansion.

    ``columns`` restricts which variables use the narrowed boxes; the other
    columns are bounded over the full box.
    """
    m = g.nvars
    columns = range(m) if columns is None else columns
    blo, bhi = mixed_boxes(lo, hi, c, ordering)
    Jlo, Jhi = g.jacobian_bounds_arrays(lo, hi)
    Jlo, Jhi = Jlo.copy(), Jhi.copy()
    for k in columns:
        col_lo, col_hi = g.column_graphs[k].eval_bounds(blo[k], bhi[k])
        Jlo[..., :, k], Jhi[..., :, k] = col_lo, col_hi
    return Jlo, Jhi


def natural_ifn(g: ExprGraph) -> InclusionFn:
    """Interval evaluation of the graph."""
    return InclusionFn(
        g.eval_bounds, g.nvars, g.nout, thin=True, monotone=True, name="natural"
    )


def jac_cornered_ifn(
    g: ExprGraph, corner: Union[Corner, Sequence[Corner], None] = None
) -> InclusionFn:
    """First-order expansion around a box corner with interval Jacobians.

    With a list of corners the expansions are intersected.
    """
    corners = _as_corner_list(corner, g.nvars)
    g.jacobian_graph  # raises NonDifferentiableOp up front

    def bounds(lo, hi):
        Jlo, Jhi = g.jacobian_bounds_arrays(lo, hi)
        results = []
        for cn in corners:
            c = cn.point(lo, hi)
            results.append(
                cornered_from_jacobian(g.eval_point(c), c, lo, hi, Jlo, Jhi, cn.upper)
            )
        return _intersect_all(results)

    return InclusionFn(bounds, g.nvars, g.nout, thin=True, name="cornered")


def jac_mixed_cornered_ifn(
    g: ExprGraph,
    corner: Union[Corner, Sequence[Corner], None] = None,
    ordering: Union[Sequence[int], Sequence[Sequence[int]], None] = None,
) -> InclusionFn:
    """Cornered expansion whose Jacobian column ``k`` is bounded over the box
    with every variable after ``k`` (in ``ordering``) held at the corner.

    A list of corners and/or a list of orderings are intersected.
    """
    corners = _as_corner_list(corner, g.nvars)
    if ordering is None:
        orderings = [tuple(range(g.nvars))]
    elif len(ordering) and isinstance(ordering[0], (list, tuple)):
        orderings = [tuple(o) for o in ordering]
    else:
        orderings = [tuple(ordering)]
    for o in orderings:
        if sorted(o) != list(range(g.nvars)):
            raise ValueError(f"Ordering {o} is not a permutation of the variables.")
    g.column_graphs

    def bounds(lo, hi):
        results = []
        for cn in corners:
            c = cn.point(lo, hi)
            gc = g.eval_point(c)
            for o in orderings:
                Jlo, Jhi = mixed_jacobian_bounds(g, lo, hi, c, o)
                results.append(
                    cornered_from_jacobian(gc, c, lo, hi, Jlo, Jhi, cn.upper)
                )
        return _intersect_all(results)

    return InclusionFn(bounds, g.nvars, g.nout, thin=True, name="mixed-cornered")


def intersect_ifn(a: InclusionFn, b: InclusionFn) -> InclusionFn:
    """Componentwise intersection of two inclusion functions."""
    if (a.nvars, a.nout) != (b.nvars, b.nout):
        raise DimensionMismatch(
            f"Cannot intersect {a.nvars}->{a.nout} with {b.nvars}->{b.nout}."
        )
    loc = a.localization
    if b.localization is not None:
        loc = b.localization if loc is None else loc.intersect(b.localization)
        if loc is EMPTY:
            raise OutsideLocalization("The two localizations do not overlap.")

    def bounds(lo, hi):
        result = intersect_bounds(*a.bounds(lo, hi), *b.bounds(lo, hi))
        if result is EMPTY:
            raise EmptyResult(
                f"{a.name or 'first'} and {b.name or 'second'} inclusions disagree; "
                "one of them is unsound on this box."
            )
        return result

    return InclusionFn(
        bounds,
        a.nvars,
        a.nout,
        localization=loc,
        thin=a.thin or b.thin,
        monotone=a.monotone and b.monotone,
        name=f"{a.name}&{b.name}",
    )


def decomposition_ifn(
    d: Callable[[np.ndarray, np.ndarray], np.ndarray],
    dim: int,
    g: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    domain: Optional[IntervalVector] = None,
    trials: int = 256,
    seed: int = 0,
    tol: float = 1e-9,
) -> InclusionFn:
    """Inclusion function ``[d(x, x_hat), d(x_hat, x)]`` from a decomposition.

    The decomposition is checked on ``trials`` seeded random samples: it must
    increase in its first argument, decrease in its second and, when ``g`` is
    given, agree with ``g`` on the diagonal.
    """
    domain = domain or IntervalVector(-np.ones(dim), np.ones(dim))
    rng = np.random.default_rng(seed)

    def fail(what, x, y):
        raise DecompositionPropertyViolation(
            f"Decomposition function {what} at x={x.tolist()}, y={y.tolist()}."
        )

    for _ in range(trials):
        x, x2, y = (domain.sample(rng, 1)[0] for _ in range(3))
        lo, hi = np.minimum(x, x2), np.maximum(x, x2)
        if g is not None and not np.allclose(d(x, x), g(x), rtol=tol, atol=tol):
            fail("does not reproduce g on the diagonal", x, x)
        if np.any(np.asarray(d(lo, y)) > np.asarray(d(hi, y)) + tol):
            fail("is not increasing in its first argument", lo, y)
        if np.any(np.asarray(d(y, hi)) > np.asarray(d(y, lo)) + tol):
            fail("is not decreasing in its second argument", y, lo)

    nout = np.asarray(d(domain.lo, domain.lo)).size

    def bounds(lo, hi):
        if lo.ndim == 1:
            return np.asarray(d(lo, hi), float), np.asarray(d(hi, lo), float)
        flat_lo, flat_hi = lo.reshape(-1, dim), hi.reshape(-1, dim)
        out_lo = np.array([d(a, b) for a, b in zip(flat_lo, flat_hi)], dtype=float)
        out_hi = np.array([d(b, a) for a, b in zip(flat_lo, flat_hi)], dtype=float)
        shape = lo.shape[:-1] + (nout,)
        return out_lo.reshape(shape), out_hi.reshape(shape)

    return InclusionFn(
        bounds, dim, nout, thin=True, monotone=True, name="decomposition"
    )


def brute_force_minimal(
    g: ExprGraph, box: IntervalVector, grid_density: int
) -> IntervalVector:
    """Grid estimate of the exact range; an inner approximation for testing."""
    if g.nvars > 4:
        raise DimensionTooLarge(
            f"The grid oracle handles at most 4 variables, got {g.nvars}."
        )
    if box.dim != g.nvars:
        raise DimensionMismatch(
            f"Box has dimension {box.dim}, graph has {g.nvars} variables."
        )
    axes = [np.linspace(lo, hi, grid_density) for lo, hi in zip(box.lo, box.hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, g.nvars)
    values = g.eval_point(grid)
    return IntervalVector(values.min(axis=0), values.max(axis=0))


def estimate_convergence_order(
    ifn: InclusionFn,
    g: ExprGraph,
    center,
    widths: Sequence[float],
    grid_density: Optional[int] = None,
) -> float:
    """Slope of log(excess width) against log(box width).

    The excess is the inclusion's output width minus the width of the grid
    range estimate. Points whose excess is below 1e-12 count as exact and are
    dropped; NaN is returned when fewer than two points remain.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    density = grid_density or max(11, int(2e5 ** (1 / g.nvars)))
    log_w, log_excess = [], []
    for width in widths:
        box = IntervalVector(center - width / 2, center + width / 2)
        lo, hi = ifn.bounds(box.lo, box.hi)
        oracle = brute_force_minimal(g, box, density)
        excess = float(np.max((hi - lo) - oracle.widths))
        if excess > 1e-12:
            log_w.append(math.log(width))
            log_excess.append(math.log(excess))
    if len(log_w) < 2:
        return float("nan")
    return float(stats.linregress(log_w, log_excess).slope)


# ---------------------------------------------------------------------------
# midpoint forms, used only for the inclusion-function comparison report
# ---------------------------------------------------------------------------
def _centered_bounds(g: ExprGraph, lo, hi, mixed: bool):
    m = 0.5 * (lo + hi)
    if mixed:
        Jlo, Jhi = mixed_jacobian_bounds(g, lo, hi, m, tuple(range(g.nvars)))
    else:
        Jlo, Jhi = g.jacobian_bounds_arrays(lo, hi)
    rad = (0.5 * (hi - lo))[..., None, :]
    spread = np.sum(np.maximum(np.abs(Jlo), np.abs(Jhi)) * rad, axis=-1)
    gm = g.eval_point(m)
    return gm - spread, gm + spread


def _centered_ifn(g: ExprGraph, mixed: bool = False) -> InclusionFn:
    return InclusionFn(
        lambda lo, hi: _centered_bounds(g, lo, hi, mixed),
        g.nvars,
        g.nout,
        thin=True,
        name="mixed-centered" if mixed else "centered",
    )
