"""Monte Carlo simulation of the true closed loop.

Trajectories use the same scheme, step and hold period as the reach
computation, with disturbances drawn uniformly from their box and held
constant over each step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .closed_loop import LinearSystem
from .defaults import _defaults
from .exceptions import DimensionMismatch
from .interval import IntervalVector
from .nn import NeuralNetwork
from .reach import ReachTube, _schedule
from .symbolic import ExprGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectories:
    """Sampled states of shape ``(n_samples, len(times), n)``."""

    times: np.ndarray
    states: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    def outside(self, tube: ReachTube, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask ``(n_samples, len(times))`` of states the tube misses."""
        if len(tube) != len(self.times) or not np.allclose(tube.times, self.times):
            raise DimensionMismatch("Trajectories and tube use different time grids.")
        mask = np.zeros(self.states.shape[:2], dtype=bool)
        for k in range(len(self.times)):
            mask[:, k] = ~tube.contains(k, self.states[:, k], tol)
        return mask

    def violations(self, tube: ReachTube, tol: float = 1e-9) -> int:
        return int(self.outside(tube, tol).sum())


def _step(system, x, u, w, dt, scheme, feedback=None):
    """One step of ``scheme``; ``feedback`` re-evaluates the input per stage."""

    def f(z):
        return system(z, u if feedback is None else feedback(z), w)

    if scheme == "discrete":
        return f(x)
    k1 = f(x)
    if scheme == "euler":
        return x + dt * k1
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@_defaults
def simulate(
    system: Union[ExprGraph, LinearSystem],
    net: Optional[NeuralNetwork],
    x0_box: IntervalVector,
    w_box: Optional[IntervalVector] = None,
    t_final: float = 1.0,
    dt: float = 0.01,
    scheme: str = "euler",
    zoh: Optional[float] = None,
    n_samples: int = 100,
    seed: int = 0,
) -> Trajectories:
    """Simulate ``n_samples`` closed-loop trajectories from ``x0_box``.

    Initial states are drawn uniformly from ``x0_box`` (its corners are
    always included when ``n_samples`` allows). Without ``zoh`` the controller
    is evaluated at every integration stage; with it, only at hold instants
    and the input stays constant in between.
    """
    n_steps, hold = _schedule(t_final, dt, scheme, zoh)
    n, p, q = system.dims
    if x0_box.dim != n:
        raise DimensionMismatch(f"Initial box has dimension {x0_box.dim}, system {n}.")
    w_box = w_box if w_box is not None else IntervalVector(np.zeros(q))
    rng = np.random.default_rng(seed)

    x = x0_box.sample(rng, n_samples)
    x[:2] = np.array([x0_box.lo, x0_box.hi])[: min(2, n_samples)]
    states = np.empty((n_samples, n_steps + 1, n))
    states[:, 0] = x
    u = np.zeros((n_samples, p))
    feedback = net if net is not None and not hold else None
    logger.info(f"Simulating {n_samples} trajectories over {n_steps} steps...")
    for k in range(n_steps):
        if hold and net is not None and k % hold == 0:
            u = net(x)
        w = w_box.sample(rng, n_samples) if q else np.zeros((n_samples, 0))
        x = _step(system, x, u, w, dt, scheme, feedback)
        states[:, k + 1] = x
    times = dt * np.arange(n_steps + 1)
    return Trajectories(times, states)
