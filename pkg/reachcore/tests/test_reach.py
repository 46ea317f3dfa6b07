import logging

import numpy as np
import pytest

from reachcore.closed_loop import ClosedLoopIfn, LinearSystem
from reachcore.defaults import defaults
from reachcore.exceptions import (
    BranchExplosion,
    DimensionMismatch,
    FaceOrderViolation,
    InconsistentConstraint,
    IntegrationError,
    OrderViolation,
)
from reachcore.inclusion import natural_ifn
from reachcore.interval import IntervalVector
from reachcore.nn import Layer, NeuralNetwork
from reachcore.reach import (
    EmbeddingState,
    PartitionConfig,
    RedundantRefinement,
    ReachTube,
    embed_rhs,
    face_boxes,
    integrate,
    parse_partition,
    partition_integrate,
    refine_redundant,
)
from reachcore.symbolic import ExprGraph, var


def _decay(rate=-1.0, dims=1):
    names = [f"x{i}" for i in range(dims)]
    return natural_ifn(ExprGraph([rate * var(n) for n in names], names))


@pytest.fixture(scope="function")
def unit_box():
    return IntervalVector([-1.0], [1.0])


def test_decay_euler(unit_box):
    tube = integrate(_decay(), unit_box, t_final=1.0, dt=0.001)
    final = tube.final_box
    assert np.isclose(final.hi[0], np.exp(-1), atol=2e-3)
    assert np.isclose(final.lo[0], -np.exp(-1), atol=2e-3)
    assert len(tube) == 1001
    assert np.isclose(tube.times[-1], 1.0)


def test_decay_rk4_is_accurate(unit_box):
    tube = integrate(_decay(), unit_box, t_final=1.0, dt=0.1, scheme="rk4")
    assert np.isclose(tube.final_box.hi[0], np.exp(-1), atol=1e-5)


def test_discrete_scheme(unit_box):
    tube = integrate(_decay(0.5), unit_box, t_final=3, dt=1, scheme="discrete")
    assert np.allclose(tube.union_bounds[1][:, 0], [1, 0.5, 0.25, 0.125])


def test_tube_metadata(unit_box):
    tube = integrate(_decay(), unit_box, t_final=0.5, dt=0.1)
    assert tube.fingerprint["dt"] == 0.1
    assert tube.fingerprint["x0"] == [[-1.0, 1.0]]
    assert tube.stats["branches"] == 1
    assert tube.index_at(0.3) == 3
    assert tube.index_at(0.35) is None
    assert tube.covers(0.5) and not tube.covers(0.6)
    records = list(tube.records())
    assert records[0] == {"branch": 0, "t": 0.0, "lo": [-1.0], "hi": [1.0]}
    assert repr(tube) == "ReachTube(1 branches, 6 samples, t_final=0.5)"


def test_face_boxes():
    flo, fhi = face_boxes(np.array([0.0, 1.0]), np.array([2.0, 3.0]))
    assert np.allclose(flo, [[0, 1], [0, 1], [2, 1], [0, 3]])
    assert np.allclose(fhi, [[0, 3], [2, 1], [2, 3], [2, 3]])


def test_embed_rhs():
    x1, x2 = var("x1"), var("x2")
    ifn = natural_ifn(ExprGraph([x2, -x1], ("x1", "x2")))
    state = EmbeddingState(np.array([0.0, 1.0]), np.array([2.0, 3.0]))
    dlo, dhi = embed_rhs(ifn, state)
    assert np.allclose(dlo, [1, -2])
    assert np.allclose(dhi, [3, 0])
    with pytest.raises(FaceOrderViolation):
        embed_rhs(ifn, EmbeddingState(np.array([1.0, 0.0]), np.array([0.0, 1.0])))
    with pytest.raises(DimensionMismatch):
        embed_rhs(ifn, EmbeddingState(np.zeros(3), np.ones(3)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.3, "t_final": 1.0},
        {"dt": -0.1},
        {"scheme": "midpoint"},
        {"dt": 0.1, "zoh": 0.25},
    ],
)
def test_bad_schedules(unit_box, kwargs):
    with pytest.raises(IntegrationError):
        integrate(_decay(), unit_box, **kwargs)


def test_order_violation(unit_box):
    with pytest.raises(OrderViolation) as err:
        integrate(_decay(), unit_box, t_final=3.0, dt=3.0)
    assert err.value.step == 1


def test_large_euler_step_warns():
    cl = ClosedLoopIfn(LinearSystem.from_matrices([[30.0]]))
    with pytest.warns(UserWarning):
        integrate(cl, IntervalVector([0.0], [0.1]), t_final=0.1, dt=0.05)


def test_interaction_tube_inside_interconnection_tube():
    A = [[0.0, 1.0], [0.0, 0.0]]
    net = NeuralNetwork([Layer([[-1.0, -2.0]], [0.0])])
    x0 = IntervalVector([0.9, -0.1], [1.1, 0.1])
    tubes = {
        method: integrate(
            ClosedLoopIfn(LinearSystem.from_matrices(A, [[0], [1]]), net, method),
            x0,
            t_final=5.0,
            dt=0.01,
        )
        for method in ("con", "act")
    }
    assert np.all(tubes["act"].issubset(tubes["con"], tol=1e-12))


def test_uniform_partition_matches_single_branch():
    box = IntervalVector([-1.0, 0.5], [1.0, 1.5])
    cl = _decay(dims=2)
    whole = integrate(cl, box, t_final=0.5, dt=0.05)
    split = partition_integrate(cl, box, partition="uniform:3", t_final=0.5, dt=0.05)
    assert len(split.branches) == 9
    assert [b.id for b in split.branches] == list(range(9))
    assert np.allclose(split.union_bounds[0], whole.union_bounds[0])
    assert np.allclose(split.union_bounds[1], whole.union_bounds[1])
    assert split.fingerprint["partition"] == "uniform:3"


def test_uniform_partition_is_deterministic():
    box = IntervalVector([-1.0, 0.5], [1.0, 1.5])
    runs = []
    for jobs in (1, 4):
        tube = partition_integrate(
            _decay(dims=2), box, partition="uniform:2", t_final=0.2, dt=0.05, jobs=jobs
        )
        runs.append(list(tube.records()))
    assert runs[0] == runs[1]


def test_uniform_partition_logs_progress(caplog, unit_box):
    caplog.set_level(logging.INFO, logger="reachcore.reach")
    partition_integrate(
        _decay(), unit_box, partition="uniform:2", t_final=0.1, dt=0.05, jobs=2
    )
    assert "Integrating 2 branches on 2 workers" in caplog.text


def test_branch_cap():
    box = IntervalVector([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(BranchExplosion):
        partition_integrate(
            _decay(dims=2), box, partition="uniform:20", max_branches=100
        )


def test_branch_cap_from_defaults():
    defaults.set({"max_branches": 3}, refresh=True)
    box = IntervalVector([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(BranchExplosion):
        partition_integrate(_decay(dims=2), box, partition="uniform:2")


def test_adaptive_partition_splits_growing_branches():
    box = IntervalVector([-1.0, -1.0], [1.0, 1.0])
    cl = _decay(1.0, dims=2)
    whole = integrate(cl, box, t_final=1.0, dt=0.01)
    tube = partition_integrate(
        cl, box, partition="adaptive:0.01,1,0", t_final=1.0, dt=0.01
    )
    assert len(tube.branches) == 2
    assert [b.path for b in tube.branches] == [(0,), (1,)]
    assert np.allclose(tube.final_box.lo, whole.final_box.lo)
    assert np.allclose(tube.final_box.hi, whole.final_box.hi)
    assert np.all(tube.widths[-1] > 0)


def test_adaptive_split_between_hold_instants_keeps_held_control():
    system = LinearSystem.from_matrices(np.eye(2), [[0.0], [1.0]])
    net = NeuralNetwork([Layer([[0.1, -0.2]], [0.0])])
    cl = ClosedLoopIfn(system, net, method="con")
    box = IntervalVector([-1.0, -1.0], [1.0, 1.0])
    tube = partition_integrate(
        cl,
        box,
        partition="adaptive:0.01,1,0",
        t_final=1.0,
        dt=0.05,
        zoh=0.5,
        check_every=0.15,
    )
    assert [b.path for b in tube.branches] == [(0,), (1,)]
    # one shared refresh at t=0 and one at t=0.5
    assert tube.stats["refreshes"] == 2
    held = tube.branches[0].held
    assert held is tube.branches[1].held
    assert np.all(held.affine.Clo == 0)


def test_adaptive_partition_without_growth():
    box = IntervalVector([-1.0, -1.0], [1.0, 1.0])
    tube = partition_integrate(
        _decay(dims=2), box, partition="adaptive:0.01,3,0", t_final=1.0, dt=0.01
    )
    assert len(tube.branches) == 1


@pytest.mark.parametrize(
    "text, expected",
    [
        (None, PartitionConfig()),
        ("uniform:4", PartitionConfig("uniform", 4)),
        ("uniform", PartitionConfig("uniform", 1)),
        ("adaptive:0.5,2,1", PartitionConfig("adaptive", 1, 0.5, 2, 1)),
    ],
)
def test_parse_partition(text, expected):
    assert parse_partition(text) == expected
    assert parse_partition(str(expected)) == expected


@pytest.mark.parametrize(
    "text", ["uniform:0", "uniform:x", "adaptive:0.5,2", "adaptive:0,1,1", "grid:3"]
)
def test_bad_partitions(text):
    with pytest.raises(ValueError):
        parse_partition(text)


def test_refine_redundant():
    s = EmbeddingState(np.array([0.0, 0.0, -10.0]), np.array([1.0, 1.0, 10.0]))
    out = refine_redundant(s, [[1.0, 1.0]])
    assert np.allclose(out.lo, [0, 0, 0])
    assert np.allclose(out.hi, [1, 1, 2])


def test_refine_redundant_tightens_base_states():
    s = EmbeddingState(np.array([0.0, 0.0, 1.5]), np.array([1.0, 1.0, 1.6]))
    out = RedundantRefinement(np.array([[1.0, 1.0]]))(s)
    assert np.allclose(out.lo, [0.5, 0.5, 1.5])
    assert np.allclose(out.hi, [1, 1, 1.6])


def test_refine_redundant_errors():
    s = EmbeddingState(np.array([0.0, 0.0, 5.0]), np.array([1.0, 1.0, 6.0]))
    with pytest.raises(InconsistentConstraint):
        refine_redundant(s, [[1.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        refine_redundant(s, [[1.0, 1.0, 1.0]])


def test_refinement_during_integration():
    x1, x2, y = var("x1"), var("x2"), var("y")
    ifn = natural_ifn(ExprGraph([-x1, -x2, -y], ("x1", "x2", "y")))
    box = IntervalVector([0.0, 0.0, -5.0], [1.0, 1.0, 5.0])
    refine = RedundantRefinement(np.array([[1.0, 1.0]]))
    tube = integrate(ifn, box, t_final=0.1, dt=0.01, refine=refine)
    assert np.allclose(tube.union_at(0).hi, [1, 1, 2])
    assert tube.final_box.hi[2] <= tube.final_box.hi[0] + tube.final_box.hi[1] + 1e-12


def test_tubes_need_a_shared_time_grid(unit_box):
    a = integrate(_decay(), unit_box, t_final=0.2, dt=0.1).branches[0]
    b = integrate(_decay(), unit_box, t_final=0.3, dt=0.1).branches[0]
    with pytest.raises(IntegrationError):
        ReachTube([a, b])
    with pytest.raises(IntegrationError):
        ReachTube([])
