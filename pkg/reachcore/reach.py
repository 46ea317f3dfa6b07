"""Embedding systems, reach tubes and partitioned integration.

A box ``[lo, hi]`` is propagated by integrating the embedding system: the
rate of ``lo[i]`` is the lower bound of the closed-loop inclusion evaluated
on the face of the box where coordinate ``i`` is pinned to ``lo[i]``, and
symmetrically for ``hi[i]``. The integrated trajectory is reported as the
over-approximation of the reachable set; no extra bloating is added for the
discretization error of the fixed-step scheme.
"""
from __future__ import annotations

import logging
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from cached_property import cached_property

from .closed_loop import ClosedLoopIfn, ControllerBounds
from .defaults import _defaults
from .exceptions import (
    BranchExplosion,
    DimensionMismatch,
    FaceOrderViolation,
    InconsistentConstraint,
    IntegrationError,
    NonDifferentiableOp,
    OrderViolation,
)
from .inclusion import InclusionFn
from .interval import IntervalVector

logger = logging.getLogger(__name__)

SCHEMES = ("euler", "rk4", "discrete")
System = Union[ClosedLoopIfn, InclusionFn]

# lo may overshoot hi by rounding on degenerate boxes
_ORDER_TOL = 1e-12


@dataclass(frozen=True)
class EmbeddingState:
    """A box ``[lo, hi]`` at time ``t``."""

    lo: np.ndarray
    hi: np.ndarray
    t: float = 0.0

    @classmethod
    def from_box(cls, box: IntervalVector, t: float = 0.0) -> EmbeddingState:
        return cls(np.array(box.lo), np.array(box.hi), float(t))

    @property
    def box(self) -> IntervalVector:
        return IntervalVector(self.lo, self.hi)

    @property
    def valid(self) -> bool:
        return bool(np.all(self.lo <= self.hi))

    @property
    def dim(self) -> int:
        return self.lo.size


@dataclass
class Branch:
    """One integrated piece of a partitioned initial set."""

    id: int
    samples: List[EmbeddingState]
    path: Tuple[int, ...] = ()
    check_width: float = 0.0
    retried: bool = False
    # controller bounds in force until the next hold instant
    held: Optional[ControllerBounds] = None

    @property
    def state(self) -> EmbeddingState:
        return self.samples[-1]

    def children(self) -> Tuple[Branch, Branch]:
        """Bisect the current box along its widest coordinate."""
        s = self.state
        axis = int(np.argmax(s.hi - s.lo))
        halves = s.box.split(axis)
        return tuple(
            Branch(
                self.id,
                self.samples[:-1] + [EmbeddingState.from_box(half, s.t)],
                self.path + (side,),
                check_width=half.width,
                retried=self.retried,
                held=self.held,
            )
            for side, half in enumerate(halves)
        )


class ReachTube:
    """Per-step boxes of every branch; their union bounds the reachable set.

    Parameters
    ----------
    branches
        Integrated branches, all sharing the same time grid.
    fingerprint
        The configuration that produced the tube.
    stats
        Runtime statistics (wall-clock seconds, controller refreshes, ...).
    """

    def __init__(
        self,
        branches: Sequence[Branch],
        fingerprint: Optional[dict] = None,
        stats: Optional[dict] = None,
    ):
        if not branches:
            raise IntegrationError("A reach tube needs at least one branch.")
        times = [s.t for s in branches[0].samples]
        for branch in branches[1:]:
            other = [s.t for s in branch.samples]
            if len(other) != len(times) or not np.allclose(other, times):
                raise IntegrationError(
                    f"Branch {branch.id} does not share the time grid of branch "
                    f"{branches[0].id}."
                )
        self.branches = list(branches)
        self.fingerprint = dict(fingerprint or {})
        self.stats = dict(stats or {})

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return (
            f"ReachTube({len(self.branches)} branches, {len(self)} samples, "
            f"t_final={self.times[-1]})"
        )

    @cached_property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.branches[0].samples])

    @property
    def dim(self) -> int:
        return self.branches[0].state.dim

    @cached_property
    def union_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Arrays ``(lo, hi)`` of shape ``(len(tube), dim)``."""
        lo = np.array([[s.lo for s in b.samples] for b in self.branches])
        hi = np.array([[s.hi for s in b.samples] for b in self.branches])
        return lo.min(axis=0), hi.max(axis=0)

    def union_at(self, index: int) -> IntervalVector:
        lo, hi = self.union_bounds
        return IntervalVector(lo[index], hi[index])

    @property
    def final_box(self) -> IntervalVector:
        return self.union_at(-1)

    @property
    def widths(self) -> np.ndarray:
        lo, hi = self.union_bounds
        return hi - lo

    def area(self, i: int = 0, j: int = 1) -> float:
        """Area of the final union box projected on coordinates ``i, j``."""
        return self.final_box.area(i, j)

    def index_at(self, t: float, tol: float = 1e-9) -> Optional[int]:
        """Index of the stored time ``t``, or ``None``."""
        k = int(np.argmin(np.abs(self.times - t)))
        return k if abs(self.times[k] - t) <= tol * max(1.0, abs(t)) else None

    def covers(self, t: float, tol: float = 1e-9) -> bool:
        return self.times[0] - tol <= t <= self.times[-1] + tol * max(1.0, abs(t))

    def contains(self, index: int, points, tol: float = 0.0):
        """Whether ``points`` lie in the union of the branch boxes at ``index``."""
        points = np.asarray(points, dtype=float)
        inside = np.zeros(points.shape[:-1], dtype=bool)
        for branch in self.branches:
            inside |= branch.samples[index].box.contains(points, tol)
        return inside

    def issubset(self, other: ReachTube, tol: float = 0.0) -> np.ndarray:
        """Per-step containment of the union boxes in those of ``other``."""
        if len(self) != len(other):
            raise IntegrationError("Tubes have different numbers of samples.")
        lo, hi = self.union_bounds
        olo, ohi = other.union_bounds
        return np.all((lo >= olo - tol) & (hi <= ohi + tol), axis=-1)

    def records(self) -> Iterator[dict]:
        """One ``{"branch", "t", "lo", "hi"}`` record per branch and step."""
        for branch in self.branches:
            for s in branch.samples:
                yield {
                    "branch": branch.id,
                    "t": float(s.t),
                    "lo": [float(v) for v in s.lo],
                    "hi": [float(v) for v in s.hi],
                }


# ---------------------------------------------------------------------------
# embedding right-hand side
# ---------------------------------------------------------------------------
def _system_dims(cl: System) -> Tuple[int, int]:
    if isinstance(cl, ClosedLoopIfn):
        return cl.n, cl.q
    return cl.nout, cl.nvars - cl.nout


def _map_bounds(cl: System, lo, hi, wlo, whi, cb):
    if isinstance(cl, ClosedLoopIfn):
        return cl.bounds(lo, hi, wlo, whi, cb)
    batch = lo.shape[:-1]
    q = cl.nvars - cl.nout
    wlo = np.broadcast_to(wlo, batch + (q,))
    whi = np.broadcast_to(whi, batch + (q,))
    return cl.bounds(
        np.concatenate([lo, wlo], axis=-1), np.concatenate([hi, whi], axis=-1)
    )


def face_boxes(lo, hi) -> Tuple[np.ndarray, np.ndarray]:
    """The ``2n`` faces of ``[lo, hi]``: lower faces first, then upper faces."""
    n = lo.size
    idx = np.arange(n)
    flo = np.tile(lo, (2 * n, 1))
    fhi = np.tile(hi, (2 * n, 1))
    fhi[idx, idx] = lo
    flo[n + idx, idx] = hi
    if np.any(flo > fhi):
        raise FaceOrderViolation(f"Face substitution of {lo} / {hi} is not ordered.")
    return flo, fhi


def _embed(cl: System, lo, hi, wlo, whi, cb):
    n = lo.size
    flo, fhi = face_boxes(lo, hi)
    out_lo, out_hi = _map_bounds(cl, flo, fhi, wlo, whi, cb)
    idx = np.arange(n)
    return out_lo[idx, idx], out_hi[n + idx, idx]


def _controller(cl: System, lo, hi, cb: Optional[ControllerBounds] = None):
    if not isinstance(cl, ClosedLoopIfn) or cl.net is None:
        return None
    if cb is not None and np.all(lo >= cb.domain.lo) and np.all(hi <= cb.domain.hi):
        return cb
    return cl.controller_bounds(IntervalVector(lo, hi))


def _zero_disturbance(cl: System, w_box):
    if w_box is None:
        return IntervalVector(np.zeros(_system_dims(cl)[1]))
    return w_box


def embed_rhs(
    cl: System,
    s: EmbeddingState,
    w_box: Optional[IntervalVector] = None,
    cb: Optional[ControllerBounds] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Rates ``(dlo, dhi)`` of the embedding system at ``s``.

    Controller bounds are computed once on ``[s.lo, s.hi]`` (unless ``cb``
    already covers it) and reused for all faces.
    """
    if not s.valid:
        raise FaceOrderViolation(f"State at t={s.t} has lo > hi.")
    n, q = _system_dims(cl)
    if s.dim != n:
        raise DimensionMismatch(f"State has dimension {s.dim}, system has {n}.")
    w_box = _zero_disturbance(cl, w_box)
    cb = _controller(cl, s.lo, s.hi, cb)
    return _embed(cl, s.lo, s.hi, w_box.lo, w_box.hi, cb)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------
def _steps(duration: float, dt: float, what: str) -> int:
    k = int(round(duration / dt))
    if k < 1 or abs(k * dt - duration) > 1e-9 * max(1.0, duration):
        raise IntegrationError(f"The step {dt} must divide the {what} {duration}.")
    return k


def _schedule(t_final, dt, scheme, zoh) -> Tuple[int, Optional[int]]:
    if scheme not in SCHEMES:
        raise IntegrationError(f"Scheme must be one of {SCHEMES}, not {scheme!r}.")
    if dt <= 0 or t_final <= 0:
        raise IntegrationError(
            f"Step and horizon must be positive, got dt={dt}, t_final={t_final}."
        )
    n_steps = _steps(t_final, dt, "horizon")
    hold = _steps(zoh, dt, "hold period") if zoh else None
    return n_steps, hold


def _check_order(lo, hi, step, t):
    """Merge rounding-level crossings; raise on real ones."""
    gap = lo - hi
    if np.any(np.isnan(gap)):
        raise OrderViolation(f"Bounds became NaN at step {step} (t={t:g}).", step=step)
    tiny = (gap > 0) & (gap <= _ORDER_TOL * (1.0 + np.abs(hi)))
    if np.any(gap > 0) and not np.all(tiny[gap > 0]):
        raise OrderViolation(
            f"Lower bound exceeds upper bound at step {step} (t={t:g}); use a "
            "smaller step or partition the initial set.",
            step=step,
        )
    if np.any(tiny):
        mid = 0.5 * (lo + hi)
        lo, hi = np.where(tiny, mid, lo), np.where(tiny, mid, hi)
    return lo, hi


class _Integrator:
    """Fixed-step stepping of one closed loop; keeps a refresh counter."""

    def __init__(self, cl: System, w_box, dt, scheme, hold, refine=None):
        self.cl = cl
        self.w = _zero_disturbance(cl, w_box)
        self.dt = dt
        self.scheme = scheme
        self.hold = hold
        self.refine = refine
        self.refreshes = 0

    def controller(self, lo, hi, cb=None, hold=False):
        if not isinstance(self.cl, ClosedLoopIfn) or self.cl.net is None:
            return None
        if hold:
            self.refreshes += 1
            return self.cl.controller_bounds(IntervalVector(lo, hi), hold=True)
        found = _controller(self.cl, lo, hi, cb)
        if found is not cb:
            self.refreshes += 1
        return found

    def rhs(self, lo, hi, cb, step):
        if np.any(lo > hi):
            raise OrderViolation(
                f"Intermediate stage is not ordered at step {step}.", step=step
            )
        cb = self.controller(lo, hi, cb)
        return _embed(self.cl, lo, hi, self.w.lo, self.w.hi, cb)

    def step(self, lo, hi, cb, step):
        dt = self.dt
        if self.scheme == "discrete":
            cb = self.controller(lo, hi, cb)
            new = _map_bounds(
                self.cl, lo[None], hi[None], self.w.lo, self.w.hi, cb
            )
            return new[0][0], new[1][0]
        k1 = self.rhs(lo, hi, cb, step)
        if self.scheme == "euler":
            return lo + dt * k1[0], hi + dt * k1[1]
        k2 = self.rhs(lo + 0.5 * dt * k1[0], hi + 0.5 * dt * k1[1], cb, step)
        k3 = self.rhs(lo + 0.5 * dt * k2[0], hi + 0.5 * dt * k2[1], cb, step)
        k4 = self.rhs(lo + dt * k3[0], hi + dt * k3[1], cb, step)
        return tuple(
            x + dt / 6 * (a + 2 * b + 2 * c + d)
            for x, a, b, c, d in zip((lo, hi), k1, k2, k3, k4)
        )

    def advance(self, state: EmbeddingState, step: int, cb=None) -> EmbeddingState:
        lo, hi = self.step(state.lo, state.hi, cb, step)
        t = (step + 1) * self.dt
        lo, hi = _check_order(lo, hi, step + 1, t)
        new = EmbeddingState(lo, hi, t)
        if self.refine is not None:
            new = self.refine(new)
        return new

    def run(self, branch: Branch, n_steps: int) -> Branch:
        cb = None
        for k in range(len(branch.samples) - 1, n_steps):
            s = branch.state
            if self.hold and k % self.hold == 0:
                logger.debug(f"Refreshing network bounds at t={s.t:g}...")
                cb = self.controller(s.lo, s.hi, hold=True)
            branch.samples.append(self.advance(s, k, cb if self.hold else None))
        return branch


def _check_step_size(cl: System, box: IntervalVector, dt: float):
    """Warn when an Euler step can break the ordering of the embedding."""
    if not isinstance(cl, ClosedLoopIfn):
        return
    if cl.linear:
        diag = np.abs(np.diag(cl.system.A))
    else:
        g = cl.system
        cb = _controller(cl, box.lo, box.hi)
        u = cb.u_box if cb is not None else IntervalVector(np.zeros(cl.p))
        joint = IntervalVector.concat(box, u, IntervalVector(np.zeros(cl.q)))
        try:
            Jlo, Jhi = g.jacobian_bounds_arrays(joint.lo, joint.hi)
        except NonDifferentiableOp:
            return
        idx = np.arange(cl.n)
        diag = np.maximum(np.abs(Jlo[idx, idx]), np.abs(Jhi[idx, idx]))
    worst = float(dt * np.max(diag, initial=0.0))
    if worst > 1:
        warnings.warn(
            f"Euler step {dt} is large for this system (dt * max|df_i/dx_i| = "
            f"{worst:.3g} > 1); the embedding may lose its ordering."
        )


def _fingerprint(cl, x0_box, w_box, **params) -> dict:
    out = {
        "system": repr(cl),
        "x0": x0_box.tolist(),
        "w": None if w_box is None else w_box.tolist(),
    }
    out.update(params)
    if params.get("zoh"):
        # both methods treat the control as a constant box over each hold
        out["hold"] = "constant-control-box"
    return out


@_defaults
def integrate(
    cl: System,
    x0_box: IntervalVector,
    w_box: Optional[IntervalVector] = None,
    t_final: float = 1.0,
    dt: float = 0.01,
    scheme: str = "euler",
    zoh: Optional[float] = None,
    refine=None,
) -> ReachTube:
    """Integrate the embedding system from ``x0_box``.

    Parameters
    ----------
    cl
        Closed loop, or an open-loop inclusion over ``(x, w)``.
    x0_box, w_box
        Initial set and disturbance box.
    t_final, dt
        Horizon and step; ``dt`` must divide ``t_final``. For the
        ``"discrete"`` scheme they count map iterations.
    scheme
        ``"euler"``, ``"rk4"`` or ``"discrete"``.
    zoh
        Hold period of the controller. Network bounds are then computed only
        at hold instants and the control is treated as a constant drawn from
        the bounded output box until the next one.
    refine
        Optional callable applied to every new :class:`EmbeddingState`.

    Returns
    -------
    ReachTube
        A single-branch tube sampled at every step.
    """
    n_steps, hold = _schedule(t_final, dt, scheme, zoh)
    if scheme == "euler":
        _check_step_size(cl, x0_box, dt)
    start = time.perf_counter()
    integ = _Integrator(cl, w_box, dt, scheme, hold, refine)
    branch = integ.run(_initial_branch(x0_box, 0, refine), n_steps)
    stats = {
        "runtime": time.perf_counter() - start,
        "refreshes": integ.refreshes,
        "branches": 1,
    }
    fingerprint = _fingerprint(
        cl, x0_box, w_box, t_final=t_final, dt=dt, scheme=scheme, zoh=zoh
    )
    return ReachTube([branch], fingerprint, stats)


def _initial_branch(box: IntervalVector, branch_id: int, refine=None) -> Branch:
    state = EmbeddingState.from_box(box, 0.0)
    if refine is not None:
        state = refine(state)
    return Branch(branch_id, [state], check_width=box.width)


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PartitionConfig:
    """``uniform`` splitting into ``k`` pieces per axis, or width-triggered
    ``adaptive`` splitting with threshold ``eps``, maximum split depth
    ``depth_p`` and network-bound sharing depth ``depth_n``."""

    mode: str = "uniform"
    k: int = 1
    eps: float = 0.0
    depth_p: int = 0
    depth_n: int = 0

    def __post_init__(self):
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError(
                f"Partition mode must be uniform or adaptive, not {self.mode!r}."
            )
        if self.mode == "uniform" and self.k < 1:
            raise ValueError(f"Uniform partitioning needs k >= 1, got {self.k}.")
        if self.mode == "adaptive" and (
            self.eps <= 0 or self.depth_p < 0 or self.depth_n < 0
        ):
            raise ValueError(
                "Adaptive partitioning needs eps > 0 and non-negative depths, got "
                f"({self.eps}, {self.depth_p}, {self.depth_n})."
            )

    def __str__(self):
        if self.mode == "uniform":
            return f"uniform:{self.k}"
        return f"adaptive:{self.eps:g},{self.depth_p},{self.depth_n}"


def parse_partition(text: Union[str, PartitionConfig, None]) -> PartitionConfig:
    """Parse ``"uniform:k"`` or ``"adaptive:eps,depth_p,depth_n"``."""
    if text is None:
        return PartitionConfig()
    if isinstance(text, PartitionConfig):
        return text
    mode, _, args = str(text).partition(":")
    try:
        if mode == "uniform":
            return PartitionConfig("uniform", k=int(args or 1))
        if mode == "adaptive":
            eps, depth_p, depth_n = args.split(",")
            return PartitionConfig(
                "adaptive", 1, float(eps), int(depth_p), int(depth_n)
            )
    except ValueError as err:
        raise ValueError(f"Could not parse partition {text!r}: {err}")
    raise ValueError(f"Unknown partition mode in {text!r}.")


def _worker_count(jobs: Optional[int]) -> int:
    if jobs is None:
        jobs = os.environ.get("REACHCORE_JOBS")
    if jobs is None:
        return min(32, os.cpu_count() or 1)
    return max(1, int(jobs))


def _uniform(
    cl, x0_box, w_box, cfg, n_steps, dt, scheme, hold, refine, jobs, max_branches
):
    count = cfg.k ** x0_box.dim
    if count > max_branches:
        raise BranchExplosion(
            f"Uniform partitioning creates {count} branches, the cap is {max_branches}."
        )
    boxes = x0_box.partition(cfg.k)
    workers = min(_worker_count(jobs), len(boxes))
    logger.info(f"Integrating {len(boxes)} branches on {workers} workers...")

    def run(item):
        i, box = item
        logger.debug(f"Integrating branch {i + 1} of {len(boxes)}...")
        integ = _Integrator(cl, w_box, dt, scheme, hold, refine)
        branch = integ.run(_initial_branch(box, i, refine), n_steps)
        return branch, integ.refreshes

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, enumerate(boxes)))
    return [b for b, _ in results], sum(r for _, r in results)


def _group_controllers(integ, branches, depth_n, hold):
    """Controller bounds shared by branches with a common ancestor at ``depth_n``."""
    groups: Dict[Tuple[int, ...], List[Branch]] = {}
    for branch in branches:
        groups.setdefault(branch.path[:depth_n], []).append(branch)
    out = {}
    for key, members in groups.items():
        lo = np.min([b.state.lo for b in members], axis=0)
        hi = np.max([b.state.hi for b in members], axis=0)
        out[key] = integ.controller(lo, hi, hold=hold)
    return out


def _adaptive(integ, x0_box, cfg, n_steps, check_steps, max_branches):
    branches = [_initial_branch(x0_box, 0, integ.refine)]
    cbs = {}
    for k in range(n_steps):
        if k and k % check_steps == 0:
            grown = []
            for branch in branches:
                width = float(np.max(branch.state.hi - branch.state.lo))
                grew = width - branch.check_width > cfg.eps
                if grew and len(branch.path) < cfg.depth_p:
                    grown.extend(branch.children())
                else:
                    branch.check_width = width
                    grown.append(branch)
            if len(grown) > max_branches:
                raise BranchExplosion(
                    f"Adaptive partitioning reached {len(grown)} branches at step {k}, "
                    f"the cap is {max_branches}."
                )
            if len(grown) != len(branches):
                logger.info(f"Split into {len(grown)} branches at t={k * integ.dt:g}.")
            branches = grown
        refresh = not integ.hold or k % integ.hold == 0
        if refresh:
            cbs = _group_controllers(integ, branches, cfg.depth_n, bool(integ.hold))
            if integ.hold:
                for branch in branches:
                    branch.held = cbs.get(branch.path[: cfg.depth_n])
        stepped = []
        for branch in branches:
            if integ.hold:
                cb = branch.held
            else:
                cb = cbs.get(branch.path[: cfg.depth_n])
            try:
                branch.samples.append(integ.advance(branch.state, k, cb))
                stepped.append(branch)
            except OrderViolation:
                if branch.retried:
                    raise
                logger.info(
                    f"Order lost at step {k + 1}; bisecting the branch and retrying."
                )
                for child in branch.children():
                    child.retried = True
                    child_cb = cb if integ.hold else None
                    child.samples.append(integ.advance(child.state, k, child_cb))
                    stepped.append(child)
        if len(stepped) > max_branches:
            raise BranchExplosion(
                f"Adaptive partitioning reached {len(stepped)} branches, the cap is "
                f"{max_branches}."
            )
        branches = stepped
    branches.sort(key=lambda b: b.path)
    for i, branch in enumerate(branches):
        branch.id = i
    return branches


@_defaults
def partition_integrate(
    cl: System,
    x0_box: IntervalVector,
    w_box: Optional[IntervalVector] = None,
    partition: Union[str, PartitionConfig, None] = "uniform:1",
    t_final: float = 1.0,
    dt: float = 0.01,
    scheme: str = "euler",
    zoh: Optional[float] = None,
    refine=None,
    jobs: Optional[int] = None,
    max_branches: int = 4096,
    check_every: Optional[float] = None,
) -> ReachTube:
    """Integrate a partitioned initial set.

    ``partition`` is a :class:`PartitionConfig` or its text form
    (``"uniform:k"``, ``"adaptive:eps,depth_p,depth_n"``). Uniform branches
    run on a thread pool of ``jobs`` workers (``REACHCORE_JOBS`` when not
    given); adaptive branches step in lockstep, checking every
    ``check_every`` seconds (default: the hold period, else a tenth of the
    horizon) whether a branch grew wider than ``eps`` since the last check.
    """
    cfg = parse_partition(partition)
    n_steps, hold = _schedule(t_final, dt, scheme, zoh)
    if scheme == "euler":
        _check_step_size(cl, x0_box, dt)
    start = time.perf_counter()
    if cfg.mode == "uniform":
        branches, refreshes = _uniform(
            cl, x0_box, w_box, cfg, n_steps, dt, scheme, hold, refine, jobs,
            max_branches,
        )
    else:
        integ = _Integrator(cl, w_box, dt, scheme, hold, refine)
        check_every = check_every or zoh or t_final / 10
        check_steps = max(1, int(round(check_every / dt)))
        branches = _adaptive(integ, x0_box, cfg, n_steps, check_steps, max_branches)
        refreshes = integ.refreshes
    stats = {
        "runtime": time.perf_counter() - start,
        "refreshes": refreshes,
        "branches": len(branches),
    }
    fingerprint = _fingerprint(
        cl,
        x0_box,
        w_box,
        t_final=t_final,
        dt=dt,
        scheme=scheme,
        zoh=zoh,
        partition=str(cfg),
    )
    return ReachTube(branches, fingerprint, stats)


# ---------------------------------------------------------------------------
# redundant variables
# ---------------------------------------------------------------------------
@_defaults
def refine_redundant(
    s: EmbeddingState, A, b=None, max_sweeps: int = 10, tol: float = 1e-12
) -> EmbeddingState:
    """Tighten an augmented state ``z = (x, y)`` with ``y = A x + b``.

    Each row of ``-A x + y = b`` is solved for each of its variables with
    interval arithmetic and intersected with the current bounds, sweeping
    until nothing moves by more than ``tol`` or ``max_sweeps`` is reached.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, nx = A.shape
    b = np.zeros(m) if b is None else np.asarray(b, dtype=float).reshape(m)
    if s.dim != nx + m:
        raise DimensionMismatch(
            f"Augmented state has dimension {s.dim}, expected {nx} + {m}."
        )
    M = np.hstack([-A, np.eye(m)])
    lo, hi = np.array(s.lo, dtype=float), np.array(s.hi, dtype=float)
    for _ in range(max_sweeps):
        change = 0.0
        for row, rhs in zip(M, b):
            support = np.flatnonzero(row)
            for k in support:
                others = support[support != k]
                coef = row[others]
                olo = np.sum(np.where(coef > 0, coef * lo[others], coef * hi[others]))
                ohi = np.sum(np.where(coef > 0, coef * hi[others], coef * lo[others]))
                if row[k] > 0:
                    new_lo, new_hi = (rhs - ohi) / row[k], (rhs - olo) / row[k]
                else:
                    new_lo, new_hi = (rhs - olo) / row[k], (rhs - ohi) / row[k]
                new_lo, new_hi = max(lo[k], new_lo), min(hi[k], new_hi)
                if new_lo > new_hi:
                    if new_lo - new_hi > 1e-9 * (1.0 + abs(new_hi)):
                        raise InconsistentConstraint(
                            f"Variable {k} has empty bounds [{new_lo}, {new_hi}] "
                            f"after propagation at t={s.t:g}."
                        )
                    continue
                change = max(change, new_lo - lo[k], hi[k] - new_hi)
                lo[k], hi[k] = new_lo, new_hi
        if change < tol:
            break
    return EmbeddingState(lo, hi, s.t)


@dataclass(frozen=True)
class RedundantRefinement:
    """Refinement hook for :func:`integrate` with ``y = A x + b``."""

    A: np.ndarray
    b: Optional[np.ndarray] = None
    max_sweeps: int = 10
    tol: float = 1e-12

    def __call__(self, s: EmbeddingState) -> EmbeddingState:
        return refine_redundant(
            s, self.A, self.b, max_sweeps=self.max_sweeps, tol=self.tol
        )
