"""Per-node state machine of the asynchronous solver.

A node alternates between two awake tasks. While termination detection has
not fired it runs T1: one gradient descent step on its local augmented
Lagrangian, a tolerance check on the post-step gradient that may raise its
detection flag, and a broadcast of the new variable plus the status column.
Once detection fires it runs T2: one ascent step on its multipliers plus
the penalty growth rules, then a broadcast of the per-edge duals. Sending
or receiving an edge dual doubles as the detection protocol's stop signal.
A node that has done T2 idles until the new duals from all neighbors have
arrived, then zeroes its status matrix, tightens its tolerance, and starts
the next primal phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import NumericAbort
from .lagrangian import (DualLocal, PenaltyLocal, lipschitz_estimate,
                         local_lagrangian, local_lagrangian_grad)
from .logic_and import StatusMatrix
from .multipliers import AscentMemory, PenaltySchedule, full_ascent_step
from .problems import LocalProblem

Array = np.ndarray


@dataclass(frozen=True)
class PrimalMessage:
    """Primal broadcast: new variable (whole, or one block) plus status column."""

    sender: int
    recipient: int
    block: int | None          # None when the payload is the whole vector
    values: Array
    status_col: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"kind": "primal", "sender": self.sender, "recipient": self.recipient,
                "block": self.block, "values": [float(v) for v in self.values],
                "status_col": list(self.status_col)}


@dataclass(frozen=True)
class DualMessage:
    """Edge dual broadcast after a multiplier update; doubles as a stop signal."""

    sender: int
    recipient: int
    nu: Array
    rho: float

    def to_dict(self) -> dict:
        return {"kind": "duals", "sender": self.sender, "recipient": self.recipient,
                "nu": [float(v) for v in self.nu], "rho": float(self.rho)}


def message_from_dict(d: dict):
    if d["kind"] == "primal":
        return PrimalMessage(d["sender"], d["recipient"], d["block"],
                             np.array(d["values"], dtype=float), tuple(d["status_col"]))
    if d["kind"] == "duals":
        return DualMessage(d["sender"], d["recipient"],
                           np.array(d["nu"], dtype=float), float(d["rho"]))
    raise ValueError(f"unknown message kind {d['kind']!r}")


@dataclass(frozen=True)
class NodeConfig:
    """Tolerance schedule, penalty schedule and step-size policy of one node."""

    eps0: float = 1e-2
    eps_decay: float = 0.5
    eps_min: float = 1e-9
    sched: PenaltySchedule = field(default_factory=PenaltySchedule)
    lipschitz0: float = 1.0
    lipschitz_max: float = 1e12
    bound_h: float = 0.0
    bound_jac_g: float = 0.0
    block_count: int = 1


@dataclass
class AwakeResult:
    """What one awakening did; the simulator wraps this into a trace record."""

    task: str                     # "T1" | "T2" | "NOOP"
    messages: list
    cycle: int
    theta_rev: int
    eps: float
    block: int | None = None
    lipschitz: float | None = None
    grad_norm: float | None = None
    grad_norm_pre: float | None = None
    lag_pre: float | None = None
    lag_post: float | None = None
    t2: dict | None = None
    pen_max: float = 0.0


def next_tolerance(eps: float, decay: float = 0.5, floor: float = 1e-9) -> float:
    """Geometric tolerance decay with a floor (tolerances must stay positive)."""
    if eps <= 0:
        raise ValueError("tolerance must be positive")
    return max(floor, decay * eps)


def block_slices(dim: int, count: int) -> list[slice]:
    """Contiguous equal blocks; the last absorbs the remainder."""
    if not 1 <= count <= dim:
        raise ValueError("block count must be in [1, dim]")
    size = dim // count
    cuts = [i * size for i in range(count)] + [dim]
    return [slice(cuts[i], cuts[i + 1]) for i in range(count)]


def descent_step(x_block: Array, g_block: Array, lipschitz: float) -> Array:
    """The primal update ``x - g/L``, shared with the replay oracle bit-for-bit."""
    return x_block - g_block / lipschitz


class NodeState:
    """Full per-node state: variable, neighbor caches, duals, status matrix."""

    def __init__(self, node_id: int, problem: LocalProblem, neighbors,
                 rows: int, x0: Array, x_nbr0: Mapping[int, Array],
                 cfg: NodeConfig | None = None):
        cfg = cfg or NodeConfig()
        self.id = node_id
        self.problem = problem
        self.neighbors = tuple(sorted(neighbors))
        self.cfg = cfg
        self.x = np.array(x0, dtype=float)
        self.x_nbr = {j: np.array(x_nbr0[j], dtype=float) for j in self.neighbors}
        self.dual = DualLocal.zeros(problem, self.neighbors)
        self.pen = PenaltyLocal.uniform(self.neighbors, cfg.sched.initial)
        self.status = StatusMatrix(rows, self.neighbors)
        self.m_done = False
        self.eps = cfg.eps0
        self.received_nu: set[int] = set()
        self.cycle = 0
        self.theta_rev = 0
        self.block_cursor = 0
        self.blocks = block_slices(problem.dim_x, cfg.block_count)
        self.mem = AscentMemory.initial(problem, self.x, self.x_nbr)
        self.adaptive = problem.hessian_bound is None
        if self.adaptive:
            self.lipschitz = [cfg.lipschitz0] * len(self.blocks)
        else:
            self.lipschitz = [self._formula_lipschitz()] * len(self.blocks)
        # counters surfaced in run summaries
        self.t2_count = 0
        self.flag_regressions = 0
        self.cap_hits = 0
        self.doublings = 0

    # -- helpers ------------------------------------------------------------

    def _formula_lipschitz(self) -> float:
        return lipschitz_estimate(self.problem, self.dual, self.pen,
                                  bound_h=self.cfg.bound_h,
                                  bound_jac_g=self.cfg.bound_jac_g)

    def _lagrangian(self, x: Array) -> float:
        return local_lagrangian(self.problem, x, self.x_nbr, self.dual, self.pen)

    def _gradient(self, x: Array) -> Array:
        return local_lagrangian_grad(self.problem, x, self.x_nbr, self.dual, self.pen)

    def _pen_max(self) -> float:
        return max(self.pen.varrho, self.pen.zeta,
                   *(list(self.pen.rho_out.values()) or [0.0]))

    @property
    def flag(self) -> int:
        return self.status.cells[0][-1]

    # -- awake dispatch -----------------------------------------------------

    def on_awake(self) -> AwakeResult:
        """One task per awakening: T1 before detection, T2 after, else no-op."""
        if self.m_done:
            return AwakeResult(task="NOOP", messages=[], cycle=self.cycle,
                               theta_rev=self.theta_rev, eps=self.eps,
                               pen_max=self._pen_max())
        if not self.status.detection_reached():
            return self._t1()
        return self._t2()

    def _t1(self) -> AwakeResult:
        m = self.block_cursor
        sl = self.blocks[m]
        lag_pre = self._lagrangian(self.x)
        g_full = self._gradient(self.x)
        grad_norm_pre = float(np.linalg.norm(g_full))
        gb = g_full[sl]
        lip = self.lipschitz[m]
        stepped = self.x.copy()
        stepped[sl] = descent_step(self.x[sl], gb, lip)
        lag_post = self._lagrangian(stepped)
        if self.adaptive:
            # grow L until the stepped value certifies it as a valid bound;
            # the slack absorbs float cancellation when gradients are tiny
            target = lag_pre - float(gb @ gb) / (2.0 * lip)
            slack = 1e-12 * (1.0 + abs(lag_pre))
            while lag_post > target + slack:
                lip *= 2.0
                self.doublings += 1
                if lip > self.cfg.lipschitz_max:
                    raise NumericAbort(
                        f"node {self.id}: step-size search exceeded "
                        f"{self.cfg.lipschitz_max:g} (diverging subproblem?)")
                stepped = self.x.copy()
                stepped[sl] = descent_step(self.x[sl], gb, lip)
                lag_post = self._lagrangian(stepped)
                target = lag_pre - float(gb @ gb) / (2.0 * lip)
            self.lipschitz[m] = lip
        self.x = stepped

        g_post = self._gradient(self.x)
        grad_norm = float(np.linalg.norm(g_post))
        flag = self.flag
        if grad_norm <= self.eps:
            flag = 1
        elif flag:
            # a raised flag is never retracted; count how often it would be
            self.flag_regressions += 1
        col = tuple(self.status.refresh_self_column(flag))
        self.block_cursor = (m + 1) % len(self.blocks)

        whole = len(self.blocks) == 1
        payload = self.x.copy() if whole else self.x[sl].copy()
        messages = [PrimalMessage(self.id, j, None if whole else m, payload, col)
                    for j in self.neighbors]
        return AwakeResult(task="T1", messages=messages, cycle=self.cycle,
                           theta_rev=self.theta_rev, eps=self.eps,
                           block=None if whole else m, lipschitz=lip,
                           grad_norm=grad_norm, grad_norm_pre=grad_norm_pre,
                           lag_pre=lag_pre, lag_post=lag_post,
                           pen_max=self._pen_max())

    def _t2(self) -> AwakeResult:
        out = full_ascent_step(self.problem, self.x, self.x_nbr,
                               self.dual, self.pen, self.cfg.sched, self.mem)
        self.dual.nu_out = out.nu_out
        self.dual.lam = out.lam
        self.dual.mu = out.mu
        self.pen.varrho = out.varrho
        self.pen.zeta = out.zeta
        self.pen.rho_out = out.rho_out
        self.mem.prev_x = self.x.copy()
        self.mem.prev_h_norm = out.new_h_norm
        self.mem.prev_cons = out.new_cons
        self.theta_rev += 1
        self.t2_count += 1
        self.cap_hits += out.cap_hits
        self.m_done = True

        messages = [DualMessage(self.id, j, out.nu_out[j].copy(), out.rho_out[j])
                    for j in self.neighbors]
        record = {
            "x": [float(v) for v in self.x],
            "lam": [float(v) for v in out.lam],
            "mu": [float(v) for v in out.mu],
            "nu_out": {j: [float(v) for v in out.nu_out[j]] for j in self.neighbors},
            "varrho": float(out.varrho),
            "zeta": float(out.zeta),
            "rho_out": {j: float(out.rho_out[j]) for j in self.neighbors},
            "grew_eq": out.grew_eq,
            "grew_ineq": out.grew_ineq,
            "grew_cons": {j: out.grew_cons[j] for j in self.neighbors},
            "restarted": False,
        }
        result = AwakeResult(task="T2", messages=messages, cycle=self.cycle,
                             theta_rev=self.theta_rev, eps=self.eps, t2=record,
                             pen_max=self._pen_max())
        # neighbors whose duals all arrived before our own update: start the
        # next primal phase right away instead of waiting for a message
        if self.received_nu == set(self.neighbors):
            self._restart_cycle()
            record["restarted"] = True
        return result

    def _restart_cycle(self) -> None:
        self.m_done = False
        self.status.reset()
        self.eps = next_tolerance(self.eps, self.cfg.eps_decay, self.cfg.eps_min)
        self.received_nu.clear()
        self.cycle += 1
        if not self.adaptive:
            self.lipschitz = [self._formula_lipschitz()] * len(self.blocks)

    # -- idle side ------------------------------------------------------------

    def on_receive(self, msg) -> None:
        if msg.sender not in self.x_nbr:
            raise ValueError(f"node {self.id} got a message from non-neighbor {msg.sender}")
        if isinstance(msg, PrimalMessage):
            if msg.block is None:
                self.x_nbr[msg.sender] = np.array(msg.values, dtype=float)
            else:
                self.x_nbr[msg.sender][self.blocks[msg.block]] = msg.values
            # once any new dual arrived this cycle, status columns are stale:
            # absorbing one could clear the stop-forced last row
            if not self.received_nu:
                self.status.absorb_neighbor_column(msg.sender, msg.status_col)
        elif isinstance(msg, DualMessage):
            self.dual.nu_in[msg.sender] = np.array(msg.nu, dtype=float)
            self.pen.rho_in[msg.sender] = float(msg.rho)
            self.received_nu.add(msg.sender)
            self.status.handle_stop_signal()
            if self.m_done and self.received_nu == set(self.neighbors):
                self._restart_cycle()
        else:
            raise TypeError(f"unsupported message type {type(msg)!r}")
