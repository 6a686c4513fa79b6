"""Augmented Lagrangian arithmetic.

Holds the clamped quadratic penalty operator for inequalities, the node-local
augmented Lagrangian (the subset of global terms that depend on one node's
variable) and its exact gradient, the full network Lagrangian used by tests
and the replay oracle, and a closed-form step-size bound.

All neighbor reductions iterate in ascending node id so that sums are
bit-reproducible between the asynchronous solver and the centralized oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .problems import LocalProblem

Array = np.ndarray


@dataclass
class DualLocal:
    """One node's multipliers: equality, inequality, and per-edge consensus.

    ``nu_out[j]`` is the multiplier this node owns for edge (i, j);
    ``nu_in[j]`` caches the latest value received from neighbor j.
    """

    lam: Array
    mu: Array
    nu_out: dict[int, Array]
    nu_in: dict[int, Array]
    neighbors: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.neighbors = tuple(sorted(self.nu_out))
        if tuple(sorted(self.nu_in)) != self.neighbors:
            raise ValueError("nu_out and nu_in must cover the same neighbor set")
        if np.any(self.mu < 0):
            raise ValueError("inequality multipliers must be nonnegative")

    @classmethod
    def zeros(cls, problem: LocalProblem, neighbors) -> "DualLocal":
        return cls(
            lam=np.zeros(problem.m_eq),
            mu=np.zeros(problem.m_ineq),
            nu_out={j: np.zeros(problem.dim_x) for j in sorted(neighbors)},
            nu_in={j: np.zeros(problem.dim_x) for j in sorted(neighbors)},
        )


@dataclass
class PenaltyLocal:
    """One node's penalty parameters, all strictly positive and nondecreasing."""

    varrho: float
    zeta: float
    rho_out: dict[int, float]
    rho_in: dict[int, float]
    neighbors: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.neighbors = tuple(sorted(self.rho_out))
        if tuple(sorted(self.rho_in)) != self.neighbors:
            raise ValueError("rho_out and rho_in must cover the same neighbor set")
        values = [self.varrho, self.zeta, *self.rho_out.values(), *self.rho_in.values()]
        if any(v <= 0 for v in values):
            raise ValueError("penalty parameters must be strictly positive")

    @classmethod
    def uniform(cls, neighbors, value: float) -> "PenaltyLocal":
        return cls(
            varrho=value, zeta=value,
            rho_out={j: value for j in sorted(neighbors)},
            rho_in={j: value for j in sorted(neighbors)},
        )


def q_penalty(c: float, a: Array, b: Array) -> Array:
    """Componentwise ``(max(0, a + c*b)^2 - a^2) / (2c)``.

    The standard smoothed penalty for inequality constraints: continuously
    differentiable in b, and zero whenever a = 0 and b <= 0.
    """
    if c <= 0:
        raise ValueError("penalty parameter must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    clamped = np.maximum(0.0, a + c * b)
    return (clamped * clamped - a * a) / (2.0 * c)


def _require_neighbor_values(x_nbr: Mapping[int, Array], neighbors) -> None:
    missing = [j for j in neighbors if j not in x_nbr]
    if missing:
        raise ValueError(f"missing neighbor values for {missing}")


def local_lagrangian(problem: LocalProblem, x_i: Array,
                     x_nbr: Mapping[int, Array],
                     dual: DualLocal, pen: PenaltyLocal) -> float:
    """Value of the node-local augmented Lagrangian at ``x_i``.

    Collects every term of the network Lagrangian that depends on this
    node's variable: its own objective and constraint penalties plus, per
    edge, the linear multiplier coupling and the full (both directions)
    quadratic consensus penalty.
    """
    _require_neighbor_values(x_nbr, dual.neighbors)
    value = problem.objective(x_i)
    for j in dual.neighbors:
        diff = x_i - x_nbr[j]
        value += float(x_i @ (dual.nu_out[j] - dual.nu_in[j]))
        value += 0.5 * (pen.rho_out[j] + pen.rho_in[j]) * float(diff @ diff)
    h, g = problem.constraints(x_i)
    if problem.m_eq:
        value += float(dual.lam @ h) + 0.5 * pen.varrho * float(h @ h)
    if problem.m_ineq:
        value += float(np.sum(q_penalty(pen.zeta, dual.mu, g)))
    return value


def local_lagrangian_grad(problem: LocalProblem, x_i: Array,
                          x_nbr: Mapping[int, Array],
                          dual: DualLocal, pen: PenaltyLocal) -> Array:
    """Exact gradient of :func:`local_lagrangian` in ``x_i``."""
    _require_neighbor_values(x_nbr, dual.neighbors)
    grad = problem.objective_grad(x_i)
    for j in dual.neighbors:
        grad += dual.nu_out[j] - dual.nu_in[j]
        grad += (pen.rho_out[j] + pen.rho_in[j]) * (x_i - x_nbr[j])
    if problem.m_eq or problem.m_ineq:
        h, g = problem.constraints(x_i)
        jh, jg = problem.constraint_jacobians(x_i)
        if problem.m_eq:
            grad += jh @ (dual.lam + pen.varrho * h)
        if problem.m_ineq:
            # d/dx of sum q_zeta(mu, g(x)): the clamp deactivates components
            # with mu + zeta*g < 0.
            grad += jg @ np.maximum(0.0, dual.mu + pen.zeta * g)
    return grad


def global_lagrangian(problems, x_all: Mapping[int, Array],
                      duals: Mapping[int, DualLocal],
                      pens: Mapping[int, PenaltyLocal]) -> float:
    """Full network augmented Lagrangian (tests and oracle only).

    Each edge contributes twice, once per direction with that direction's
    own multiplier and penalty, matching the per-node grouping used by
    :func:`local_lagrangian`.
    """
    value = 0.0
    for i in sorted(x_all):
        problem = problems[i]
        x_i = x_all[i]
        dual, pen = duals[i], pens[i]
        value += problem.objective(x_i)
        for j in dual.neighbors:
            diff = x_i - x_all[j]
            value += float(dual.nu_out[j] @ diff)
            value += 0.5 * pen.rho_out[j] * float(diff @ diff)
        h, g = problem.constraints(x_i)
        if problem.m_eq:
            value += float(dual.lam @ h) + 0.5 * pen.varrho * float(h @ h)
        if problem.m_ineq:
            value += float(np.sum(q_penalty(pen.zeta, dual.mu, g)))
    return value


def lipschitz_estimate(problem: LocalProblem, dual: DualLocal, pen: PenaltyLocal,
                       *, bound_h: float = 0.0, bound_jac_g: float = 0.0) -> float:
    """Closed-form upper bound on the Lipschitz constant of the local gradient.

    Affine in the multiplier norms and penalties, so it can only overestimate
    (which merely shrinks steps). Requires ``problem.hessian_bound``;
    ``bound_h`` and ``bound_jac_g`` bound the equality values and inequality
    Jacobian norms over the region the iterates visit.
    """
    if problem.hessian_bound is None:
        raise ValueError("closed-form estimate needs problem.hessian_bound")
    curvature = problem.hessian_bound * (
        1.0
        + float(np.linalg.norm(dual.lam)) + pen.varrho * bound_h
        + float(np.linalg.norm(dual.mu)) + pen.zeta * bound_jac_g
    )
    coupling = sum(pen.rho_out[j] + pen.rho_in[j] for j in pen.neighbors)
    return curvature + coupling
