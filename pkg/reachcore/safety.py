"""Target-avoid specifications and their check against reach tubes.

Because a tube over-approximates the reachable set, a failed check can
only mean that a violation is possible; the verdicts are ``verified``,
``violated-possible`` and ``inconclusive``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DimensionMismatch, HorizonMismatch, IntervalError
from .interval import IntervalVector
from .reach import ReachTube
from .symbolic import ExprGraph

logger = logging.getLogger(__name__)

VERIFIED = "verified"
VIOLATED_POSSIBLE = "violated-possible"
INCONCLUSIVE = "inconclusive"

EXIT_CODES = {VERIFIED: 0, VIOLATED_POSSIBLE: 2, INCONCLUSIVE: 3}


@dataclass(frozen=True)
class Circle:
    """A disc obstacle in the plane of coordinates ``axes``."""

    center: Tuple[float, float]
    radius: float
    axes: Tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"Circle radius must be non-negative, got {self.radius}.")

    def distance(self, box: IntervalVector) -> float:
        """Euclidean distance from the centre to the projected box."""
        i, j = self.axes
        lo = np.array([box.lo[i], box.lo[j]])
        hi = np.array([box.hi[i], box.hi[j]])
        center = np.asarray(self.center, dtype=float)
        return float(np.linalg.norm(center - np.clip(center, lo, hi)))

    def intersects(self, box: IntervalVector) -> bool:
        return self.distance(box) <= self.radius


@dataclass(frozen=True)
class AvoidRegion:
    """An unsafe box or circle, optionally active only on ``[t0, t1]``."""

    region: Union[IntervalVector, Circle]
    horizon: Optional[Tuple[float, float]] = None
    name: str = "avoid"

    def intersects(self, box: IntervalVector) -> bool:
        if isinstance(self.region, Circle):
            return self.region.intersects(box)
        if self.region.dim != box.dim:
            raise DimensionMismatch(
                f"Unsafe box has dimension {self.region.dim}, tube has {box.dim}."
            )
        return bool(
            np.all(box.lo <= self.region.hi) and np.all(self.region.lo <= box.hi)
        )


@dataclass(frozen=True)
class StateConstraint:
    """A requirement ``h(x) >= 0`` checked at every stored time."""

    h: ExprGraph
    horizon: Optional[Tuple[float, float]] = None
    name: str = "constraint"

    def __post_init__(self):
        if self.h.nout != 1 or self.h.p or self.h.q:
            raise DimensionMismatch(
                f"Constraint '{self.name}' must be a scalar function of the state."
            )

    def lower_bound(self, box: IntervalVector) -> float:
        return float(self.h.eval_bounds(box.lo, box.hi)[0][0])


@dataclass(frozen=True)
class SafetySpec:
    """Reach ``target`` at ``target_time`` while avoiding ``avoid`` and keeping
    every state constraint non-negative.

    ``target_time`` defaults to the final time of the tube. Unbounded
    coordinates of the target are given as infinite endpoints.
    """

    target: Optional[IntervalVector] = None
    target_time: Optional[float] = None
    avoid: Sequence[AvoidRegion] = ()
    constraints: Sequence[StateConstraint] = ()

    def __post_init__(self):
        if self.target_time is not None and self.target is None:
            raise ValueError("A target time was given without a target box.")

    @property
    def horizon(self) -> float:
        """Latest time the specification refers to."""
        times = [0.0]
        if self.target_time is not None:
            times.append(self.target_time)
        for item in list(self.avoid) + list(self.constraints):
            if item.horizon is not None:
                times.append(item.horizon[1])
        return max(times)

    def replace(self, **changes) -> SafetySpec:
        fields = {
            "target": self.target,
            "target_time": self.target_time,
            "avoid": self.avoid,
            "constraints": self.constraints,
        }
        fields.update(changes)
        return SafetySpec(**fields)


@dataclass
class Verdict:
    """Overall status and one report entry per checked item."""

    status: str
    report: List[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> dict:
        return {"status": self.status, "report": self.report}


def _indices(tube: ReachTube, horizon) -> np.ndarray:
    if horizon is None:
        return np.arange(len(tube))
    t0, t1 = horizon
    tol = 1e-9
    return np.flatnonzero((tube.times >= t0 - tol) & (tube.times <= t1 + tol))


def _check_target(tube, spec) -> dict:
    t = tube.times[-1] if spec.target_time is None else spec.target_time
    k = tube.index_at(t)
    if k is None:
        raise HorizonMismatch(f"Target time {t} is not a stored time of the tube.")
    box = tube.union_at(k)
    if spec.target.dim != box.dim:
        raise DimensionMismatch(
            f"Target has dimension {spec.target.dim}, tube has {box.dim}."
        )
    ok = box.issubset(spec.target)
    return {
        "name": "target",
        "t": float(t),
        "status": VERIFIED if ok else VIOLATED_POSSIBLE,
        "box": box.tolist(),
    }


def _check_avoid(tube, region: AvoidRegion) -> dict:
    hits = []
    for k in _indices(tube, region.horizon):
        for branch in tube.branches:
            if region.intersects(branch.samples[k].box):
                hits.append(float(tube.times[k]))
                break
    entry = {"name": region.name, "status": VERIFIED if not hits else VIOLATED_POSSIBLE}
    if hits:
        entry["first_contact"] = hits[0]
    return entry


def _check_constraint(tube, constraint: StateConstraint) -> dict:
    margin = np.inf
    worst_t = None
    try:
        for k in _indices(tube, constraint.horizon):
            for branch in tube.branches:
                lower = constraint.lower_bound(branch.samples[k].box)
                if lower < margin:
                    margin, worst_t = lower, float(tube.times[k])
    except IntervalError as err:
        return {"name": constraint.name, "status": INCONCLUSIVE, "message": str(err)}
    if np.isnan(margin):
        status = INCONCLUSIVE
    else:
        status = VERIFIED if margin >= 0 else VIOLATED_POSSIBLE
    return {"name": constraint.name, "status": status, "margin": margin, "t": worst_t}


def check_spec(tube: ReachTube, spec: SafetySpec) -> Verdict:
    """Check ``spec`` against the union of the tube's branch boxes.

    Raises
    ------
    HorizonMismatch
        If the tube stops before the specification's horizon.
    """
    if not tube.covers(spec.horizon):
        raise HorizonMismatch(
            f"The tube ends at t={tube.times[-1]:g} but the specification needs "
            f"t={spec.horizon:g}."
        )
    report = []
    if spec.target is not None:
        report.append(_check_target(tube, spec))
    report.extend(_check_avoid(tube, region) for region in spec.avoid)
    report.extend(_check_constraint(tube, c) for c in spec.constraints)

    statuses = {entry["status"] for entry in report}
    if not report:
        status = INCONCLUSIVE
    elif VIOLATED_POSSIBLE in statuses:
        status = VIOLATED_POSSIBLE
    elif INCONCLUSIVE in statuses:
        status = INCONCLUSIVE
    else:
        status = VERIFIED
    logger.info(f"Specification check: {status}.")
    return Verdict(status, report)
