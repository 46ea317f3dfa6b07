"""Closed-loop inclusion functions for ``f(x, N(x), w)``.

Two constructions are offered. The interconnection-based one (``con``)
substitutes bounds on the controller output into an open-loop inclusion
function. The interaction-based one (``act``) combines interval Jacobians of
the plant with the affine network bounds, so that first-order coupling
between state and control cancels. ``intersect`` evaluates both and keeps the
tighter bound per component.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .exceptions import DimensionMismatch, EmptyResult, OutsideLocalization
from .inclusion import (
    Corner,
    InclusionFn,
    _intersect_all,
    corner_preset,
    jac_cornered_ifn,
    jac_mixed_cornered_ifn,
    mixed_jacobian_bounds,
    natural_ifn,
)
from .interval import IntervalVector, mat_pos_neg_split
from .nn import AffineBounds, NeuralNetwork, ibp_bounds, nn_crown
from .symbolic import ExprGraph, JacobianBounds

METHODS = ("con", "act", "intersect")
_MIXED_GROUPS = {False: "", None: "", True: "xuw"}


@dataclass(frozen=True)
class LinearSystem:
    """``A x + B u + D w``, either a vector field or a one-step map."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    @classmethod
    def from_matrices(cls, A, B=None, D=None) -> LinearSystem:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
        D = np.zeros((n, 0)) if D is None else np.asarray(D, dtype=float).reshape(n, -1)
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got shape {A.shape}.")
        return cls(A, B, D)

    @property
    def dims(self):
        return self.A.shape[0], self.B.shape[1], self.D.shape[1]

    def __call__(self, x, u=(), w=()):
        out = np.asarray(x, dtype=float) @ self.A.T
        if self.B.shape[1]:
            out = out + np.asarray(u, dtype=float) @ self.B.T
        if self.D.shape[1]:
            out = out + np.asarray(w, dtype=float) @ self.D.T
        return out


# ---------------------------------------------------------------------------
# array-level formulas
# ---------------------------------------------------------------------------
def _affine_split(B, ab: AffineBounds):
    """Lower and upper closed-loop gains ``B+ Clo + B- Cup`` and ``B+ Cup + B- Clo``."""
    Bp, Bn = mat_pos_neg_split(B)
    return Bp @ ab.Clo + Bn @ ab.Cup, Bp @ ab.Cup + Bn @ ab.Clo


def _linear_bounds(A, B, D, ab, xlo, xhi, wlo, whi, interaction):
    Bp, Bn = mat_pos_neg_split(B)
    Ml, Mu = _affine_split(B, ab)
    Dp, Dn = mat_pos_neg_split(D)
    lower = Bp @ ab.dlo + Bn @ ab.dup + wlo @ Dp.T + whi @ Dn.T
    upper = Bp @ ab.dup + Bn @ ab.dlo + whi @ Dp.T + wlo @ Dn.T
    if interaction:
        terms_lo, terms_up = [A + Ml], [A + Mu]
    else:
        terms_lo, terms_up = [A, Ml], [A, Mu]
    for H in terms_lo:
        Hp, Hn = mat_pos_neg_split(H)
        lower = lower + xlo @ Hp.T + xhi @ Hn.T
    for H in terms_up:
        Hp, Hn = mat_pos_neg_split(H)
        upper = upper + xhi @ Hp.T + xlo @ Hn.T
    return lower, upper


def act_bounds(
    g: ExprGraph,
    Jlo,
    Jhi,
    ab: AffineBounds,
    corner: Corner,
    xlo,
    xhi,
    ulo,
    uhi,
    wlo,
    whi,
):
    """Interaction-based bounds around one corner.

    ``Jlo``/``Jhi`` have shape ``(..., n, n + p + q)`` and must bound the
    Jacobian on the box spanned by the state, control and disturbance boxes;
    the corner is taken of that joint box.
    """
    n, p, _ = g.dims
    lo = np.concatenate([xlo, ulo, wlo], axis=-1)
    hi = np.concatenate([xhi, uhi, whi], axis=-1)
    c = corner.point(lo, hi)
    fc = g.eval_point(c)
    up = np.asarray(corner.upper)
    JL = np.where(up, Jhi, Jlo)
    JU = np.where(up, Jlo, Jhi)
    sx, su, sw = slice(0, n), slice(n, n + p), slice(n + p, None)
    cx, cu, cw = c[..., sx], c[..., su], c[..., sw]

    def side(J, C_pos, C_neg, d_pos, d_neg):
        Jx, Ju, Jw = J[..., sx], J[..., su], J[..., sw]
        Jup, Jun = np.maximum(Ju, 0), np.minimum(Ju, 0)
        H = Jx + Jup @ C_pos + Jun @ C_neg
        const = (
            fc
            - np.einsum("...ij,...j->...i", Jx, cx)
            - np.einsum("...ij,...j->...i", Ju, cu)
            - np.einsum("...ij,...j->...i", Jw, cw)
            + Jup @ d_pos
            + Jun @ d_neg
        )
        return H, Jw, const

    H, Jw, const = side(JL, ab.Clo, ab.Cup, ab.dlo, ab.dup)
    lower = (
        const
        + np.einsum("...ij,...j->...i", np.maximum(H, 0), xlo)
        + np.einsum("...ij,...j->...i", np.minimum(H, 0), xhi)
        + np.einsum("...ij,...j->...i", np.maximum(Jw, 0), wlo)
        + np.einsum("...ij,...j->...i", np.minimum(Jw, 0), whi)
    )
    H, Jw, const = side(JU, ab.Cup, ab.Clo, ab.dup, ab.dlo)
    upper = (
        const
        + np.einsum("...ij,...j->...i", np.maximum(H, 0), xhi)
        + np.einsum("...ij,...j->...i", np.minimum(H, 0), xlo)
        + np.einsum("...ij,...j->...i", np.maximum(Jw, 0), whi)
        + np.einsum("...ij,...j->...i", np.minimum(Jw, 0), wlo)
    )
    return lower, upper


# ---------------------------------------------------------------------------
# public single-box operations
# ---------------------------------------------------------------------------
def _check_inside(box: IntervalVector, loc: IntervalVector):
    if not box.issubset(loc):
        raise OutsideLocalization(f"Box {box!r} is not inside localization {loc!r}.")


def con_ifn(
    open: InclusionFn,
    nn: InclusionFn,
    x_box: IntervalVector,
    w_box: Optional[IntervalVector],
    loc: IntervalVector,
) -> IntervalVector:
    """Substitute controller bounds on ``x_box`` into the open-loop inclusion."""
    _check_inside(x_box, loc)
    u_box = nn(x_box)
    return open(x_box, u_box, w_box)


def act_ifn(
    g: ExprGraph,
    jb: JacobianBounds,
    ab: AffineBounds,
    corner: Union[Corner, Sequence[Corner], None],
    x_box: IntervalVector,
    w_box: Optional[IntervalVector],
    u_box: IntervalVector,
) -> IntervalVector:
    """Interaction-based bound; several corners are intersected."""
    _check_inside(x_box, ab.domain)
    n, p, q = g.dims
    w_box = w_box if w_box is not None else IntervalVector(np.zeros(q))
    Jlo = np.concatenate([jb.Jx.lo, jb.Ju.lo, jb.Jw.lo], axis=1)
    Jhi = np.concatenate([jb.Jx.hi, jb.Ju.hi, jb.Jw.hi], axis=1)
    if corner is None:
        corners = [Corner.lo(n + p + q)]
    else:
        corners = [corner] if isinstance(corner, Corner) else list(corner)
    args = (x_box.lo, x_box.hi, u_box.lo, u_box.hi, w_box.lo, w_box.hi)
    results = [act_bounds(g, Jlo, Jhi, ab, c, *args) for c in corners]
    return IntervalVector(*_intersect_all(results))


def _linear_ifn(A, B, D, ab, x_box, w_box, interaction):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    D = np.zeros((n, 0)) if D is None else np.asarray(D, dtype=float).reshape(n, -1)
    if x_box.dim != n or ab.Clo.shape != (B.shape[1], n):
        raise DimensionMismatch(
            f"Incompatible shapes: A {A.shape}, B {B.shape}, C {ab.Clo.shape}, "
            f"state box of dimension {x_box.dim}."
        )
    w_box = w_box if w_box is not None else IntervalVector(np.zeros(D.shape[1]))
    if w_box.dim != D.shape[1]:
        raise DimensionMismatch(
            f"Disturbance box has dimension {w_box.dim}, D has {D.shape[1]} columns."
        )
    _check_inside(x_box, ab.domain)
    return IntervalVector(
        *_linear_bounds(
            A, B, D, ab, x_box.lo, x_box.hi, w_box.lo, w_box.hi, interaction
        )
    )


def linear_con_ifn(A, B, D, ab, x_box, w_box=None) -> IntervalVector:
    """Interconnection-based bound for ``A x + B N(x) + D w``."""
    return _linear_ifn(A, B, D, ab, x_box, w_box, interaction=False)


def linear_act_ifn(A, B, D, ab, x_box, w_box=None) -> IntervalVector:
    """Interaction-based bound for ``A x + B N(x) + D w``."""
    return _linear_ifn(A, B, D, ab, x_box, w_box, interaction=True)


# ---------------------------------------------------------------------------
# configured closed loop
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ControllerBounds:
    """Controller bounds computed once per localization box.

    Attributes
    ----------
    affine
        Affine bounds valid on ``domain`` (constant ones for interval
        sources and for held controls).
    u_box
        Box containing every controller output over ``domain``.
    net
        Network used for interval propagation on sub-boxes, if any.
    """

    affine: AffineBounds
    u_box: IntervalVector
    net: Optional[NeuralNetwork] = None

    @property
    def domain(self) -> IntervalVector:
        return self.affine.domain

    def u_bounds(self, lo, hi):
        """Controller output bounds over sub-boxes of the domain."""
        if self.net is not None:
            ulo, uhi = ibp_bounds(self.net, lo, hi)
        else:
            ulo, uhi = self.affine.bounds(lo, hi)
        return np.maximum(ulo, self.u_box.lo), np.minimum(uhi, self.u_box.hi)


def _constant_affine(u_box: IntervalVector, domain: IntervalVector) -> AffineBounds:
    p, n = u_box.dim, domain.dim
    zeros = np.zeros((p, n))
    return AffineBounds(zeros, zeros, u_box.lo.copy(), u_box.hi.copy(), domain)


class ClosedLoopIfn:
    """A configured closed-loop inclusion function.

    Parameters
    ----------
    system
        Open-loop dynamics as an :class:`ExprGraph` or :class:`LinearSystem`.
    net
        Controller; ``None`` for systems without feedback inputs.
    method
        ``"con"``, ``"act"`` or ``"intersect"``.
    open_loop
        Open-loop inclusion used by ``con``: ``"natural"``, ``"cornered"``,
        ``"mixed"`` or a ready :class:`InclusionFn` over ``(x, u, w)``.
    bound_source
        ``"crown"`` or ``"ibp"`` for the controller bounds.
    corners
        Corner count (1, 2 or 4) or explicit corners for ``act``.
    mixed
        Variable groups whose Jacobian columns use the mixed expansion in
        ``act``: any of ``"x"``, ``"xu"``, ``"xuw"``; ``True`` means all.
    actuator_limits
        Box known to contain every controller output; intersected with the
        computed control bounds.
    preact
        Pre-activation mode passed to :func:`~.nn.nn_crown`.
    """

    def __init__(
        self,
        system: Union[ExprGraph, LinearSystem],
        net: Optional[NeuralNetwork] = None,
        method: str = "con",
        open_loop: Union[str, InclusionFn] = "natural",
        bound_source: str = "crown",
        corners: Union[int, Sequence[Corner]] = 1,
        mixed: Union[bool, str] = False,
        actuator_limits: Optional[IntervalVector] = None,
        preact: str = "crown",
    ):
        if method not in METHODS:
            raise ValueError(f"Method must be one of {METHODS}, not {method!r}.")
        if bound_source not in ("crown", "ibp"):
            raise ValueError(
                f"Bound source must be 'crown' or 'ibp', not {bound_source!r}."
            )
        self.system = system
        self.net = net
        self.method = method
        self.bound_source = bound_source
        self.preact = preact
        self.actuator_limits = actuator_limits
        self.linear = isinstance(system, LinearSystem)
        n, p, q = system.dims
        self.n, self.p, self.q = n, p, q
        if net is not None and (net.input_dim, net.output_dim) != (n, p):
            raise DimensionMismatch(
                f"Controller maps {net.input_dim}->{net.output_dim}, system needs "
                f"{n}->{p}."
            )
        if net is None and p:
            raise DimensionMismatch(f"System has {p} inputs but no controller.")

        self.mixed = _MIXED_GROUPS.get(mixed, mixed) or ""
        if set(self.mixed) - set("xuw"):
            raise ValueError(f"Mixed groups must be drawn from 'xuw', not {mixed!r}.")
        if isinstance(corners, int):
            self.corners = corner_preset((n, p, q), corners)
        else:
            self.corners = list(corners)

        self.open_ifn = None
        if not self.linear:
            self.open_ifn = self._open_loop(open_loop)
            if method != "con":
                # fail early on non-differentiable plants
                system.jacobian_graph
                if self.mixed:
                    system.column_graphs

    def _open_loop(self, open_loop) -> InclusionFn:
        if isinstance(open_loop, InclusionFn):
            return open_loop
        if open_loop == "natural":
            return natural_ifn(self.system)
        if open_loop == "cornered":
            return jac_cornered_ifn(self.system, self.corners)
        if open_loop == "mixed":
            return jac_mixed_cornered_ifn(self.system, self.corners)
        raise ValueError(f"Unknown open-loop inclusion {open_loop!r}.")

    @property
    def dims(self):
        return self.n, self.p, self.q

    def __repr__(self):
        return (
            f"ClosedLoopIfn(method={self.method}, source={self.bound_source}, "
            f"corners={len(self.corners)}, mixed={self.mixed or False})"
        )

    # --- controller bounds ------------------------------------------------
    def controller_bounds(
        self, box: IntervalVector, hold: bool = False
    ) -> Optional[ControllerBounds]:
        """Controller bounds localized on ``box``.

        With ``hold`` the control is treated as a constant drawn from the
        box of outputs, valid for every state reached during the hold.
        """
        if self.net is None:
            return None
        if self.bound_source == "crown":
            ab = nn_crown(self.net, box, preact=self.preact)
            u_box = ab.concretize()
        else:
            u_box = IntervalVector(*ibp_bounds(self.net, box.lo, box.hi))
            ab = _constant_affine(u_box, box)
        if self.actuator_limits is not None:
            lo = np.maximum(u_box.lo, self.actuator_limits.lo)
            hi = np.minimum(u_box.hi, self.actuator_limits.hi)
            if np.any(lo > hi):
                raise EmptyResult(
                    f"Actuator limits {self.actuator_limits!r} are disjoint from the "
                    f"controller output bounds {u_box!r}."
                )
            u_box = IntervalVector(lo, hi)
        if hold:
            inf = np.full(self.n, np.inf)
            everywhere = IntervalVector(-inf, inf)
            return ControllerBounds(_constant_affine(u_box, everywhere), u_box)
        net = self.net if self.bound_source == "ibp" else None
        return ControllerBounds(ab, u_box, net)

    # --- evaluation -------------------------------------------------------
    def bounds(self, xlo, xhi, wlo, whi, cb: Optional[ControllerBounds]):
        """Closed-loop bounds over a batch of state boxes ``(..., n)``.

        ``cb`` must have been computed on a box containing every state box.
        """
        xlo = np.asarray(xlo, dtype=float)
        xhi = np.asarray(xhi, dtype=float)
        batch = xlo.shape[:-1]
        wlo = np.broadcast_to(np.asarray(wlo, dtype=float), batch + (self.q,))
        whi = np.broadcast_to(np.asarray(whi, dtype=float), batch + (self.q,))
        results = []
        if self.method in ("con", "intersect"):
            results.append(self._con(xlo, xhi, wlo, whi, cb))
        if self.method in ("act", "intersect"):
            results.append(self._act(xlo, xhi, wlo, whi, cb))
        return _intersect_all(results)

    def __call__(
        self,
        x_box: IntervalVector,
        w_box: Optional[IntervalVector] = None,
        loc: Optional[IntervalVector] = None,
    ) -> IntervalVector:
        loc = loc or x_box
        _check_inside(x_box, loc)
        w_box = w_box if w_box is not None else IntervalVector(np.zeros(self.q))
        cb = self.controller_bounds(loc)
        return IntervalVector(*self.bounds(x_box.lo, x_box.hi, w_box.lo, w_box.hi, cb))

    def _affine(self, cb):
        if cb is None:
            empty = IntervalVector(np.zeros(0))
            return _constant_affine(empty, IntervalVector(np.zeros(self.n)))
        return cb.affine

    def _con(self, xlo, xhi, wlo, whi, cb):
        if self.linear:
            s = self.system
            ab = self._affine(cb)
            return _linear_bounds(s.A, s.B, s.D, ab, xlo, xhi, wlo, whi, False)
        if cb is None:
            ulo = uhi = np.zeros(xlo.shape[:-1] + (0,))
        else:
            ulo, uhi = cb.u_bounds(xlo, xhi)
        lo = np.concatenate([xlo, ulo, wlo], axis=-1)
        hi = np.concatenate([xhi, uhi, whi], axis=-1)
        return self.open_ifn.bounds(lo, hi)

    def _act(self, xlo, xhi, wlo, whi, cb):
        ab = self._affine(cb)
        if self.linear:
            s = self.system
            return _linear_bounds(s.A, s.B, s.D, ab, xlo, xhi, wlo, whi, True)
        g = self.system
        batch = xlo.shape[:-1]
        if cb is None:
            ulo = uhi = np.zeros(batch + (0,))
        else:
            ulo = np.broadcast_to(cb.u_box.lo, batch + (self.p,))
            uhi = np.broadcast_to(cb.u_box.hi, batch + (self.p,))
        lo = np.concatenate([xlo, ulo, wlo], axis=-1)
        hi = np.concatenate([xhi, uhi, whi], axis=-1)
        Jlo, Jhi = g.jacobian_bounds_arrays(lo, hi)
        columns = self._mixed_columns()
        results = []
        for corner in self.corners:
            if columns:
                c = corner.point(lo, hi)
                cJlo, cJhi = mixed_jacobian_bounds(
                    g, lo, hi, c, tuple(range(g.nvars)), columns
                )
            else:
                cJlo, cJhi = Jlo, Jhi
            results.append(
                act_bounds(g, cJlo, cJhi, ab, corner, xlo, xhi, ulo, uhi, wlo, whi)
            )
        return _intersect_all(results)

    def _mixed_columns(self) -> List[int]:
        n, p, q = self.dims
        spans = {"x": range(0, n), "u": range(n, n + p), "w": range(n + p, n + p + q)}
        return [k for group in self.mixed for k in spans[group]]
