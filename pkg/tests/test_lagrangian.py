import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asymm.lagrangian import (DualLocal, PenaltyLocal, global_lagrangian,
                              lipschitz_estimate, local_lagrangian,
                              local_lagrangian_grad, q_penalty)
from asymm.numdiff import central_gradient, gradient_mismatch
from asymm.problems import LocalProblem, build_localization_instance
from asymm.simulator import Network


def _quadratic_problem(dim=2, bound=None):
    return LocalProblem(dim_x=dim, m_eq=0, m_ineq=0,
                        f=lambda x: float(x @ x), grad_f=lambda x: 2.0 * x,
                        hessian_bound=bound)


def _zero_problem(dim=2):
    return LocalProblem(dim_x=dim, m_eq=0, m_ineq=0,
                        f=lambda x: 0.0, grad_f=lambda x: np.zeros(dim))


def test_q_penalty_values():
    assert q_penalty(1.0, np.array([0.0]), np.array([-1.0]))[0] == 0.0
    assert q_penalty(2.0, np.array([1.0]), np.array([1.0]))[0] == pytest.approx(2.0)
    assert q_penalty(1.0, np.array([2.0]), np.array([-5.0]))[0] == pytest.approx(-2.0)


def test_q_penalty_rejects_nonpositive_c():
    with pytest.raises(ValueError):
        q_penalty(0.0, np.array([1.0]), np.array([1.0]))


@given(st.floats(0.1, 10.0), st.floats(0.0, 5.0))
def test_q_penalty_continuous_across_clamp(c, a):
    # the clamp boundary sits at b = -a/c
    b = -a / c
    lo = q_penalty(c, np.array([a]), np.array([b - 1e-9]))[0]
    hi = q_penalty(c, np.array([a]), np.array([b + 1e-9]))[0]
    assert abs(hi - lo) <= 1e-8


def test_local_lagrangian_isolated_node():
    p = _quadratic_problem()
    dual = DualLocal.zeros(p, [])
    pen = PenaltyLocal.uniform([], 1.0)
    assert local_lagrangian(p, np.array([1.0, 1.0]), {}, dual, pen) == pytest.approx(2.0)


def test_local_lagrangian_consensus_term_only():
    p = _zero_problem()
    dual = DualLocal.zeros(p, [1])
    pen = PenaltyLocal.uniform([1], 1.0)
    value = local_lagrangian(p, np.array([1.0, 0.0]),
                             {1: np.array([0.0, 0.0])}, dual, pen)
    assert value == pytest.approx(1.0)


def test_local_lagrangian_missing_neighbor():
    p = _zero_problem()
    dual = DualLocal.zeros(p, [1])
    pen = PenaltyLocal.uniform([1], 1.0)
    with pytest.raises(ValueError):
        local_lagrangian(p, np.zeros(2), {}, dual, pen)


def test_gradient_zero_at_consensus_stationary_point():
    p = _quadratic_problem()
    dual = DualLocal.zeros(p, [1, 2])
    pen = PenaltyLocal.uniform([1, 2], 3.0)
    x = np.zeros(2)
    g = local_lagrangian_grad(p, x, {1: x.copy(), 2: x.copy()}, dual, pen)
    assert np.allclose(g, 0.0)


def test_inactive_inequality_contributes_nothing():
    problems, _ = build_localization_instance(3, 1)
    p = problems[0]
    dual = DualLocal.zeros(p, [])
    pen = PenaltyLocal.uniform([], 2.0)
    # strictly inside the crown: mu = 0 and g < 0 componentwise
    mid = p.anchor + np.array([0.5 * (p.inner_radius + p.outer_radius), 0.0])
    _, g = p.constraints(mid)
    assert np.all(g < 0)
    grad = local_lagrangian_grad(p, mid, {}, dual, pen)
    assert np.allclose(grad, p.objective_grad(mid))


def _random_state(problems, net, rng, scale=2.0):
    xs = {i: rng.uniform(-scale, scale, size=problems[i].dim_x)
          for i in range(net.n_nodes)}
    duals, pens = {}, {}
    for i in range(net.n_nodes):
        nbrs = net.neighbors(i)
        duals[i] = DualLocal(
            lam=rng.normal(size=problems[i].m_eq),
            mu=rng.uniform(0.0, 1.5, size=problems[i].m_ineq),
            nu_out={j: rng.normal(size=problems[i].dim_x) for j in nbrs},
            nu_in={j: rng.normal(size=problems[i].dim_x) for j in nbrs})
        pens[i] = PenaltyLocal(
            varrho=float(rng.uniform(0.5, 4.0)),
            zeta=float(rng.uniform(0.5, 4.0)),
            rho_out={j: float(rng.uniform(0.5, 4.0)) for j in nbrs},
            rho_in={j: float(rng.uniform(0.5, 4.0)) for j in nbrs})
    # mirror the received copies so both directions agree like in a real run
    for i in range(net.n_nodes):
        for j in net.neighbors(i):
            duals[i].nu_in[j] = duals[j].nu_out[i].copy()
            pens[i].rho_in[j] = pens[j].rho_out[i]
    return xs, duals, pens


def test_local_gradient_matches_finite_differences_on_benchmark():
    problems, _ = build_localization_instance(21, 4)
    net = Network.ring(4)
    rng = np.random.default_rng(8)
    for trial in range(20):
        xs, duals, pens = _random_state(problems, net, rng)
        i = trial % 4
        nbr = {j: xs[j] for j in net.neighbors(i)}
        grad = local_lagrangian_grad(problems[i], xs[i], nbr, duals[i], pens[i])
        num = central_gradient(
            lambda v: local_lagrangian(problems[i], v, nbr, duals[i], pens[i]),
            xs[i])
        assert gradient_mismatch(grad, num) <= 1e-5


def test_single_block_change_moves_global_and_local_equally():
    problems, _ = build_localization_instance(33, 5)
    net = Network.ring(5)
    rng = np.random.default_rng(14)
    for trial in range(10):
        xs, duals, pens = _random_state(problems, net, rng)
        i = trial % 5
        x_new = xs[i] + rng.normal(scale=0.3, size=2)
        nbr = {j: xs[j] for j in net.neighbors(i)}
        local_delta = (local_lagrangian(problems[i], x_new, nbr, duals[i], pens[i])
                       - local_lagrangian(problems[i], xs[i], nbr, duals[i], pens[i]))
        g_before = global_lagrangian(problems, xs, duals, pens)
        xs2 = dict(xs)
        xs2[i] = x_new
        g_after = global_lagrangian(problems, xs2, duals, pens)
        scale = max(1.0, abs(g_before), abs(g_after))
        assert abs((g_after - g_before) - local_delta) <= 1e-10 * scale


def test_global_lagrangian_reduces_to_objective_at_feasible_consensus():
    problems, x_star = build_localization_instance(2, 4)
    net = Network.ring(4)
    xs = {i: x_star.copy() for i in range(4)}
    duals = {i: DualLocal.zeros(problems[i], net.neighbors(i)) for i in range(4)}
    pens = {i: PenaltyLocal.uniform(net.neighbors(i), 7.0) for i in range(4)}
    expected = sum(p.objective(x_star) for p in problems)
    assert global_lagrangian(problems, xs, duals, pens) == pytest.approx(expected)


def test_global_lagrangian_tiny_penalty_limit():
    problems, x_star = build_localization_instance(2, 4)
    net = Network.ring(4)
    xs = {i: x_star.copy() for i in range(4)}
    duals = {i: DualLocal.zeros(problems[i], net.neighbors(i)) for i in range(4)}
    pens = {i: PenaltyLocal.uniform(net.neighbors(i), 1e-8) for i in range(4)}
    expected = sum(p.objective(x_star) for p in problems)
    assert global_lagrangian(problems, xs, duals, pens) == pytest.approx(expected)


def test_global_lagrangian_degenerate_single_node():
    problems, _ = build_localization_instance(6, 1)
    p = problems[0]
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=2)
    dual = DualLocal(lam=np.zeros(0), mu=np.array([0.3, 0.1]), nu_out={}, nu_in={})
    pen = PenaltyLocal.uniform([], 2.0)
    value = global_lagrangian(problems, {0: x}, {0: dual}, {0: pen})
    _, g = p.constraints(x)
    expected = p.objective(x) + float(np.sum(q_penalty(2.0, dual.mu, g)))
    assert value == pytest.approx(expected)


def test_global_matches_edge_sum_decomposition():
    # independent evaluation: loop over undirected edges once instead of nodes
    problems, _ = build_localization_instance(13, 5)
    net = Network.ring(5)
    rng = np.random.default_rng(99)
    xs, duals, pens = _random_state(problems, net, rng)
    total = 0.0
    for i in range(5):
        total += problems[i].objective(xs[i])
        _, g = problems[i].constraints(xs[i])
        total += float(np.sum(q_penalty(pens[i].zeta, duals[i].mu, g)))
    for a, b in net.edges:
        d = xs[a] - xs[b]
        total += float(duals[a].nu_out[b] @ d) + 0.5 * pens[a].rho_out[b] * float(d @ d)
        total += float(duals[b].nu_out[a] @ (-d)) + 0.5 * pens[b].rho_out[a] * float(d @ d)
    assert global_lagrangian(problems, xs, duals, pens) == pytest.approx(total, rel=1e-12)


def test_lipschitz_estimate_quadratic_with_neighbor():
    p = _quadratic_problem(bound=2.0)
    dual = DualLocal.zeros(p, [1])
    pen = PenaltyLocal.uniform([1], 1.0)
    assert lipschitz_estimate(p, dual, pen) == pytest.approx(4.0)


def test_lipschitz_estimate_isolated():
    p = _quadratic_problem(bound=3.5)
    dual = DualLocal.zeros(p, [])
    pen = PenaltyLocal.uniform([], 1.0)
    assert lipschitz_estimate(p, dual, pen) == pytest.approx(3.5)


def test_lipschitz_estimate_needs_bound():
    p = _quadratic_problem(bound=None)
    dual = DualLocal.zeros(p, [])
    pen = PenaltyLocal.uniform([], 1.0)
    with pytest.raises(ValueError):
        lipschitz_estimate(p, dual, pen)


def test_penalty_local_validation():
    with pytest.raises(ValueError):
        PenaltyLocal(varrho=0.0, zeta=1.0, rho_out={}, rho_in={})
    with pytest.raises(ValueError):
        PenaltyLocal(varrho=1.0, zeta=1.0, rho_out={1: 1.0}, rho_in={2: 1.0})


def test_dual_local_validation():
    p = _quadratic_problem()
    with pytest.raises(ValueError):
        DualLocal(lam=np.zeros(0), mu=np.array([-0.1]), nu_out={}, nu_in={})
