"""Multiplier ascent steps and penalty growth rules.

Shared verbatim by the asynchronous per-node update and the centralized
replay oracle, so the two cannot drift apart arithmetically. The penalty
updates return the branch decision alongside the new value; traces record
the branches and the oracle re-derives them for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import LocalProblem

Array = np.ndarray


@dataclass(frozen=True)
class PenaltySchedule:
    """Growth factor, sufficient-decrease factor, initial value and safety cap."""

    beta: float = 4.0
    gamma: float = 0.25
    initial: float = 1.0
    cap: float = 1e8

    def __post_init__(self):
        if self.beta <= 1.0:
            raise ValueError("beta must exceed 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.initial <= self.cap:
            raise ValueError("need 0 < initial <= cap")


def update_consensus_multiplier(nu: Array, rho: float, x_i: Array, x_j: Array) -> Array:
    if rho <= 0:
        raise ValueError("rho must be positive")
    return nu + rho * (x_i - x_j)


def update_eq_multiplier(lam: Array, varrho: float, h_val: Array) -> Array:
    if varrho <= 0:
        raise ValueError("varrho must be positive")
    return lam + varrho * h_val


def update_ineq_multiplier(mu: Array, zeta: float, g_val: Array) -> Array:
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if np.any(np.asarray(mu) < 0):
        raise ValueError("mu must be nonnegative")
    return np.maximum(0.0, mu + zeta * g_val)


def _grow(value: float, grew: bool, sched: PenaltySchedule) -> float:
    return min(sched.beta * value, sched.cap) if grew else value


def update_penalty_consensus(rho: float, new_residual: float, old_residual: float,
                             sched: PenaltySchedule) -> tuple[float, bool]:
    """Grow rho by beta when the edge disagreement shrank too slowly."""
    grew = new_residual > sched.gamma * old_residual
    return _grow(rho, grew, sched), grew


def update_penalty_eq(varrho: float, new_h_norm: float, old_h_norm: float,
                      sched: PenaltySchedule) -> tuple[float, bool]:
    grew = new_h_norm > sched.gamma * old_h_norm
    return _grow(varrho, grew, sched), grew


def clamped_violation(g_val: Array, mu: Array, zeta: float) -> Array:
    """Componentwise ``max(g, -mu/zeta)``: the inequality violation proxy."""
    return np.maximum(np.asarray(g_val, dtype=float), -np.asarray(mu, dtype=float) / zeta)


def update_penalty_ineq(zeta: float, x_new: Array, x_old: Array,
                        mu_new: Array, mu_old: Array, problem: LocalProblem,
                        sched: PenaltySchedule) -> tuple[float, bool]:
    """Grow zeta when the clamped violation shrank too slowly.

    Both proxies are evaluated with the pre-update zeta: the new side pairs
    it with the post-ascent multiplier, the old side with the previous one.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    _, g_new = problem.constraints(x_new)
    _, g_old = problem.constraints(x_old)
    new_norm = float(np.linalg.norm(clamped_violation(g_new, mu_new, zeta)))
    old_norm = float(np.linalg.norm(clamped_violation(g_old, mu_old, zeta)))
    grew = new_norm > sched.gamma * old_norm
    return _grow(zeta, grew, sched), grew


@dataclass
class AscentMemory:
    """Residual history one multiplier phase needs from the previous one."""

    prev_x: Array
    prev_h_norm: float
    prev_cons: dict[int, float]

    @classmethod
    def initial(cls, problem: LocalProblem, x0: Array, x_nbr0) -> "AscentMemory":
        h0, _ = problem.constraints(x0)
        return cls(
            prev_x=np.array(x0, dtype=float),
            prev_h_norm=float(np.linalg.norm(h0)),
            prev_cons={j: float(np.linalg.norm(x0 - x_nbr0[j])) for j in sorted(x_nbr0)},
        )


@dataclass
class AscentOutcome:
    """New multipliers, penalties, and the branch decisions that produced them."""

    nu_out: dict[int, Array]
    lam: Array
    mu: Array
    varrho: float
    zeta: float
    rho_out: dict[int, float]
    grew_eq: bool
    grew_ineq: bool
    grew_cons: dict[int, bool]
    new_h_norm: float
    new_cons: dict[int, float]
    cap_hits: int


def full_ascent_step(problem: LocalProblem, x_i: Array, x_nbr,
                     dual, pen, sched: PenaltySchedule,
                     mem: AscentMemory) -> AscentOutcome:
    """One complete multiplier-and-penalty update for a node.

    Pure: reads the current duals/penalties and the residual memory, returns
    everything the caller must commit. Neighbor loops run in ascending id so
    the asynchronous solver and the replay oracle produce identical bits.
    """
    h_val, g_val = problem.constraints(x_i)
    new_nu = {}
    for j in dual.neighbors:
        new_nu[j] = update_consensus_multiplier(dual.nu_out[j], pen.rho_out[j], x_i, x_nbr[j])
    new_lam = update_eq_multiplier(dual.lam, pen.varrho, h_val)
    new_mu = update_ineq_multiplier(dual.mu, pen.zeta, g_val)

    cap_hits = 0
    new_h_norm = float(np.linalg.norm(h_val))
    varrho_new, grew_eq = update_penalty_eq(pen.varrho, new_h_norm, mem.prev_h_norm, sched)
    if grew_eq and varrho_new == sched.cap and sched.beta * pen.varrho > sched.cap:
        cap_hits += 1
    zeta_new, grew_ineq = update_penalty_ineq(pen.zeta, x_i, mem.prev_x,
                                              new_mu, dual.mu, problem, sched)
    if grew_ineq and zeta_new == sched.cap and sched.beta * pen.zeta > sched.cap:
        cap_hits += 1
    rho_new, grew_cons, new_cons = {}, {}, {}
    for j in pen.neighbors:
        res = float(np.linalg.norm(x_i - x_nbr[j]))
        rho_new[j], grew_cons[j] = update_penalty_consensus(pen.rho_out[j], res,
                                                            mem.prev_cons[j], sched)
        if grew_cons[j] and rho_new[j] == sched.cap and sched.beta * pen.rho_out[j] > sched.cap:
            cap_hits += 1
        new_cons[j] = res

    return AscentOutcome(
        nu_out=new_nu, lam=new_lam, mu=new_mu,
        varrho=varrho_new, zeta=zeta_new, rho_out=rho_new,
        grew_eq=grew_eq, grew_ineq=grew_ineq, grew_cons=grew_cons,
        new_h_norm=new_h_norm, new_cons=new_cons, cap_hits=cap_hits,
    )
