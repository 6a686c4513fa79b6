import numpy as np
import pytest

from asymm.errors import NumericAbort
from asymm.node import (DualMessage, NodeConfig, NodeState, PrimalMessage,
                        block_slices, descent_step, next_tolerance)
from asymm.problems import LocalProblem


def _quadratic(dim=2, a=1.0, bound=None):
    return LocalProblem(dim_x=dim, m_eq=0, m_ineq=0,
                        f=lambda x: float(0.5 * a * x @ x),
                        grad_f=lambda x: a * x, hessian_bound=bound)


def _zero_problem(dim=2):
    return LocalProblem(dim_x=dim, m_eq=0, m_ineq=0,
                        f=lambda x: 0.0, grad_f=lambda x: np.zeros(dim))


def _make_node(problem=None, node_id=0, neighbors=(), rows=1, x0=None,
               x_nbr=None, **cfg_kwargs):
    problem = problem or _quadratic()
    x0 = np.zeros(problem.dim_x) if x0 is None else x0
    x_nbr = x_nbr or {j: np.zeros(problem.dim_x) for j in neighbors}
    return NodeState(node_id, problem, neighbors, rows, x0, x_nbr,
                     NodeConfig(**cfg_kwargs))


def test_next_tolerance():
    assert next_tolerance(1e-2, 0.5, 1e-9) == 5e-3
    assert next_tolerance(1e-9, 0.5, 1e-9) == 1e-9
    eps = 1e-2
    for _ in range(5):
        eps = next_tolerance(eps, 0.5, 1e-9)
    assert eps == pytest.approx(1e-2 * 0.5 ** 5)
    with pytest.raises(ValueError):
        next_tolerance(0.0)


def test_block_slices():
    assert block_slices(4, 2) == [slice(0, 2), slice(2, 4)]
    assert block_slices(5, 2) == [slice(0, 2), slice(2, 5)]
    assert block_slices(3, 1) == [slice(0, 3)]
    with pytest.raises(ValueError):
        block_slices(2, 3)


def test_fresh_node_runs_t1_and_broadcasts():
    node = _make_node(neighbors=(1,), rows=2, x0=np.array([1.0, 0.0]))
    result = node.on_awake()
    assert result.task == "T1"
    assert len(result.messages) == 1
    msg = result.messages[0]
    assert isinstance(msg, PrimalMessage)
    assert msg.recipient == 1 and msg.block is None
    assert len(msg.status_col) == 2


def test_t2_branch_emits_duals_only():
    node = _make_node(neighbors=(1, 2), rows=1)
    node.status.handle_stop_signal()
    result = node.on_awake()
    assert result.task == "T2"
    assert [m.recipient for m in result.messages] == [1, 2]
    assert all(isinstance(m, DualMessage) for m in result.messages)
    assert result.t2 is not None and node.m_done


def test_mdone_node_is_noop():
    node = _make_node(neighbors=(1,), rows=1)
    node.status.handle_stop_signal()
    node.on_awake()
    assert node.m_done
    result = node.on_awake()
    assert result.task == "NOOP" and result.messages == []


def test_t1_descends_quadratic():
    # 1-d quadratic with curvature 4: adaptive search must settle at L=4
    # after exactly two doublings from 1, then the step is exact
    problem = _quadratic(dim=1, a=4.0)
    node = _make_node(problem=problem, rows=1, x0=np.array([1.0]), lipschitz0=1.0)
    node.on_awake()
    assert node.lipschitz == [4.0]
    assert node.doublings == 2
    assert node.x[0] == pytest.approx(0.0)


def test_adaptive_lipschitz_keeps_valid_value():
    problem = _quadratic(dim=1, a=4.0)
    node = _make_node(problem=problem, rows=1, x0=np.array([1.0]), lipschitz0=8.0)
    node.on_awake()
    assert node.lipschitz == [8.0]      # condition already satisfied: unchanged
    assert node.doublings == 0


def test_adaptive_lipschitz_never_shrinks():
    problem = _quadratic(dim=2, a=3.0)
    node = _make_node(problem=problem, rows=1, x0=np.array([2.0, -1.0]))
    values = []
    for _ in range(6):
        node.on_awake()
        values.append(node.lipschitz[0])
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_lipschitz_overflow_aborts():
    # gradient lies about the function: descent condition can never hold
    problem = LocalProblem(dim_x=1, m_eq=0, m_ineq=0,
                           f=lambda x: float(x[0]),
                           grad_f=lambda x: np.array([-1.0]))
    node = _make_node(problem=problem, rows=1, x0=np.array([0.0]),
                      lipschitz_max=1e6)
    with pytest.raises(NumericAbort):
        node.on_awake()


def test_flag_latches_at_tolerance():
    node = _make_node(problem=_zero_problem(), rows=1, eps0=1e-3)
    assert node.flag == 0
    node.on_awake()
    assert node.flag == 1               # zero gradient latches immediately


def test_receive_from_stranger_rejected():
    node = _make_node(neighbors=(1,), rows=1)
    msg = PrimalMessage(sender=5, recipient=0, block=None,
                        values=np.zeros(2), status_col=(1,))
    with pytest.raises(ValueError):
        node.on_receive(msg)


def test_status_guard_after_dual_arrival():
    node = _make_node(neighbors=(1, 2), rows=2)
    node.on_receive(DualMessage(sender=1, recipient=0, nu=np.zeros(2), rho=2.0))
    assert node.received_nu == {1}
    assert node.status.cells[-1] == [1, 1, 1]      # stop signal forced
    # a later status column must NOT clear the forced last row,
    # but the primal payload must still be cached
    node.on_receive(PrimalMessage(sender=2, recipient=0, block=None,
                                  values=np.array([3.0, 4.0]), status_col=(0, 0)))
    assert np.array_equal(node.x_nbr[2], [3.0, 4.0])
    assert node.status.cells[-1] == [1, 1, 1]


def test_status_absorbed_before_any_dual():
    node = _make_node(neighbors=(1, 2), rows=2)
    node.on_receive(PrimalMessage(sender=2, recipient=0, block=None,
                                  values=np.array([3.0, 4.0]), status_col=(1, 1)))
    col = node.status._col_of[2]
    assert [node.status.cells[l][col] for l in range(2)] == [1, 1]


def test_cycle_restart_on_last_missing_dual():
    node = _make_node(neighbors=(1, 2), rows=2, eps0=1e-2)
    node.status.handle_stop_signal()
    node.on_awake()                                     # T2, m_done = 1
    assert node.m_done and node.cycle == 0
    node.on_receive(DualMessage(sender=1, recipient=0, nu=np.ones(2), rho=3.0))
    assert node.m_done                                  # still waiting for 2
    node.on_receive(DualMessage(sender=2, recipient=0, nu=np.ones(2), rho=3.0))
    assert not node.m_done
    assert node.cycle == 1
    assert node.eps == pytest.approx(5e-3)
    assert node.received_nu == set()
    assert all(all(v == 0 for v in row) for row in node.status.cells)
    assert node.pen.rho_in[1] == 3.0
    assert np.array_equal(node.dual.nu_in[2], [1.0, 1.0])


def test_restart_immediately_after_t2_when_duals_arrived_first():
    node = _make_node(neighbors=(1,), rows=1)
    node.on_receive(DualMessage(sender=1, recipient=0, nu=np.zeros(2), rho=1.0))
    assert not node.m_done                  # has not done its own T2 yet
    result = node.on_awake()                # forced detection: T2 fires
    assert result.task == "T2"
    assert result.t2["restarted"]
    assert not node.m_done and node.cycle == 1


def test_two_node_t2_fires_after_neighbor_dual():
    # node with one neighbor receives that neighbor's dual before its own
    # multiplier update: its next awakening must run T2 via the stop row
    a = _make_node(node_id=0, neighbors=(1,), rows=1, x0=np.array([1.0, 1.0]))
    a.on_receive(DualMessage(sender=1, recipient=0, nu=np.zeros(2), rho=1.0))
    result = a.on_awake()
    assert result.task == "T2"


def test_theta_revision_only_moves_at_t2():
    node = _make_node(neighbors=(), rows=1, problem=_quadratic(), eps0=1e6)
    revs = [node.theta_rev]
    tasks = []
    for _ in range(4):
        r = node.on_awake()
        tasks.append(r.task)
        revs.append(node.theta_rev)
    # eps enormous: T1 latches instantly, detection next awake, T2, restart...
    assert "T2" in tasks
    for prev, cur, task in zip(revs, revs[1:], tasks):
        assert cur == prev + (1 if task == "T2" else 0)


def test_isolated_node_alternates_t1_t2_at_floor():
    problem = _quadratic(dim=1, a=2.0)
    node = _make_node(problem=problem, rows=1, x0=np.array([4.0]),
                      eps0=1e-2, eps_decay=0.5, eps_min=1e-6)
    tasks = []
    for _ in range(40):
        tasks.append(node.on_awake().task)
    # pure descent first, then alternating primal/ascent cycles
    first_t2 = tasks.index("T2")
    assert first_t2 > 0
    assert all(t == "T1" for t in tasks[:first_t2])
    tail = tasks[-6:]
    assert tail in ([ "T1", "T2"] * 3, ["T2", "T1"] * 3)
    assert "NOOP" not in tasks              # no neighbors: restart is instant


def test_t2_arithmetic_updates_duals_and_memory():
    node = _make_node(neighbors=(1,), rows=1, x0=np.array([1.0, 0.0]),
                      x_nbr={1: np.array([0.0, 0.0])})
    node.status.handle_stop_signal()
    node.on_awake()
    # nu = 0 + 1.0 * (x_i - x_j)
    assert np.array_equal(node.dual.nu_out[1], [1.0, 0.0])
    # residual memory now holds the new residual, penalty grew (old was 0... 1>0)
    assert node.mem.prev_cons[1] == pytest.approx(1.0)
    assert node.pen.rho_out[1] == pytest.approx(4.0)


class TestBlockMode:
    def test_count_one_identical_to_whole_vector(self):
        problem = _quadratic(dim=4, a=2.0)
        whole = _make_node(problem=problem, rows=1, x0=np.arange(4.0),
                           block_count=1)
        single = _make_node(problem=problem, rows=1, x0=np.arange(4.0),
                            block_count=1)
        for _ in range(5):
            ra, rb = whole.on_awake(), single.on_awake()
            assert np.array_equal(whole.x, single.x)
            assert ra.block == rb.block is None

    def test_block_payload_carries_block_only(self):
        problem = _quadratic(dim=4, a=2.0)
        node = _make_node(problem=problem, neighbors=(1,), rows=1,
                          x0=np.ones(4), x_nbr={1: np.zeros(4)}, block_count=2)
        r0 = node.on_awake()
        assert r0.block == 0
        assert r0.messages[0].values.shape == (2,)
        r1 = node.on_awake()
        assert r1.block == 1                      # cursor advances cyclically
        r2 = node.on_awake()
        assert r2.block == 0

    def test_block_receive_updates_slice(self):
        node = _make_node(problem=_quadratic(dim=4), neighbors=(1,), rows=1,
                          x_nbr={1: np.zeros(4)}, block_count=2)
        node.on_receive(PrimalMessage(sender=1, recipient=0, block=1,
                                      values=np.array([7.0, 8.0]),
                                      status_col=(0,)))
        assert np.array_equal(node.x_nbr[1], [0.0, 0.0, 7.0, 8.0])

    def test_flag_uses_full_gradient(self):
        # one block already converged, the other not: flag must stay down
        problem = _quadratic(dim=2, a=2.0)
        node = _make_node(problem=problem, rows=1, x0=np.array([0.0, 5.0]),
                          block_count=2, eps0=1e-3)
        node.on_awake()       # steps block 0 (already at optimum)
        assert node.flag == 0
