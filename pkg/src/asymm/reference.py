"""Centralized inexact method of multipliers: the replay oracle.

Replays the block-coordinate schedule extracted from an asynchronous run —
per cycle, the merged per-node windows of primal steps between consecutive
multiplier updates — through a single-process solver that performs every
multiplier update at the cycle boundary. Because both sides share the same
gradient and ascent arithmetic and the same reduction order, the replay must
reproduce every cycle-boundary primal/dual/penalty state bit for bit; any
deviation is a bug in one of the two. Also hosts numerical checks of the
strong-convexity gradient bounds the analysis leans on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PropertyViolation
from .lagrangian import DualLocal, PenaltyLocal, local_lagrangian_grad
from .multipliers import AscentMemory, PenaltySchedule, full_ascent_step
from .node import block_slices, descent_step
from .problems import LocalProblem
from .simulator import EventTrace, Network, trace_cycles

Array = np.ndarray


@dataclass
class ReplayScript:
    """Per-cycle ordered primal steps, plus everything needed to re-run them."""

    n_nodes: int
    block_count: int
    x0: dict[int, Array]
    sched: PenaltySchedule
    cycles: list[list[tuple[int, int | None, float]]]   # (node, block, lipschitz)

    def to_json(self) -> str:
        return json.dumps({
            "n_nodes": self.n_nodes,
            "block_count": self.block_count,
            "x0": {str(i): [float(v) for v in x] for i, x in self.x0.items()},
            "sched": {"beta": self.sched.beta, "gamma": self.sched.gamma,
                      "initial": self.sched.initial, "cap": self.sched.cap},
            "cycles": [[[i, b, lip] for (i, b, lip) in steps] for steps in self.cycles],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ReplayScript":
        d = json.loads(text)
        return cls(
            n_nodes=d["n_nodes"], block_count=d["block_count"],
            x0={int(i): np.array(x, dtype=float) for i, x in d["x0"].items()},
            sched=PenaltySchedule(**d["sched"]),
            cycles=[[(i, b, lip) for i, b, lip in steps] for steps in d["cycles"]],
        )


def extract_replay_script(trace: EventTrace) -> ReplayScript:
    """Build the oracle's schedule from a trace.

    Cycle k replays, in event order, every node's primal steps between its
    (k-1)-th and k-th multiplier updates — including the steps before the
    first update. Each cycle must touch every node at least once.
    """
    cycles = trace_cycles(trace)
    if not cycles:
        raise PropertyViolation("trace contains no complete cycle")
    meta = trace.meta
    if "x0" not in meta:
        raise PropertyViolation("trace metadata lacks initial states (x0)")
    for c in cycles:
        if {i for (_, i, _, _) in c.steps} != set(range(meta["n_nodes"])):
            raise PropertyViolation(
                f"cycle {c.k} does not step every node", window=(c.k, c.k))
    return ReplayScript(
        n_nodes=meta["n_nodes"],
        block_count=meta.get("block_count", 1),
        x0={int(i): np.array(x, dtype=float) for i, x in meta["x0"].items()},
        sched=PenaltySchedule(**meta["sched"]),
        cycles=[[(node, block, lip) for (_, node, block, lip) in c.steps]
                for c in cycles],
    )


@dataclass
class CycleSnapshot:
    """Full solver state at one cycle boundary."""

    x: dict[int, Array]
    lam: dict[int, Array]
    mu: dict[int, Array]
    nu_out: dict[int, dict[int, Array]]
    varrho: dict[int, float]
    zeta: dict[int, float]
    rho_out: dict[int, dict[int, float]]
    branches: dict[int, dict]


def run_inexact_mm(problems: list[LocalProblem], net: Network,
                   script: ReplayScript) -> list[CycleSnapshot]:
    """Run the centralized solver along a replay script.

    Per cycle: the scripted block-coordinate descent steps on the full
    augmented Lagrangian (each a plain ``x_i <- x_i - g_i/L`` on one block,
    with the recorded step sizes), then one multiplier-and-penalty update
    for every node, then the dual exchange that the network would perform.
    """
    n = net.n_nodes
    x = {i: script.x0[i].copy() for i in range(n)}
    duals = {i: DualLocal.zeros(problems[i], net.neighbors(i)) for i in range(n)}
    pens = {i: PenaltyLocal.uniform(net.neighbors(i), script.sched.initial)
            for i in range(n)}
    mems = {i: AscentMemory.initial(problems[i], x[i],
                                    {j: x[j] for j in net.neighbors(i)})
            for i in range(n)}
    slices = {i: block_slices(problems[i].dim_x, script.block_count) for i in range(n)}

    snapshots = []
    for steps in script.cycles:
        for node, block, lip in steps:
            nbr = {j: x[j] for j in net.neighbors(node)}
            grad = local_lagrangian_grad(problems[node], x[node], nbr,
                                         duals[node], pens[node])
            sl = slices[node][0] if block is None else slices[node][block]
            x[node][sl] = descent_step(x[node][sl], grad[sl], lip)

        branches = {}
        for i in range(n):
            nbr = {j: x[j] for j in net.neighbors(i)}
            out = full_ascent_step(problems[i], x[i], nbr, duals[i], pens[i],
                                   script.sched, mems[i])
            duals[i].nu_out = out.nu_out
            duals[i].lam = out.lam
            duals[i].mu = out.mu
            pens[i].varrho = out.varrho
            pens[i].zeta = out.zeta
            pens[i].rho_out = out.rho_out
            mems[i].prev_x = x[i].copy()
            mems[i].prev_h_norm = out.new_h_norm
            mems[i].prev_cons = out.new_cons
            branches[i] = {"grew_eq": out.grew_eq, "grew_ineq": out.grew_ineq,
                           "grew_cons": dict(out.grew_cons)}
        # the dual exchange: every node caches its neighbors' new values
        for i in range(n):
            for j in net.neighbors(i):
                duals[i].nu_in[j] = duals[j].nu_out[i].copy()
                pens[i].rho_in[j] = pens[j].rho_out[i]

        snapshots.append(CycleSnapshot(
            x={i: x[i].copy() for i in range(n)},
            lam={i: duals[i].lam.copy() for i in range(n)},
            mu={i: duals[i].mu.copy() for i in range(n)},
            nu_out={i: {j: duals[i].nu_out[j].copy() for j in net.neighbors(i)}
                    for i in range(n)},
            varrho={i: pens[i].varrho for i in range(n)},
            zeta={i: pens[i].zeta for i in range(n)},
            rho_out={i: dict(pens[i].rho_out) for i in range(n)},
            branches=branches,
        ))
    return snapshots


def verify_replay(trace: EventTrace, problems: list[LocalProblem],
                  net: Network) -> dict:
    """Replay a trace through the centralized solver and diff every boundary.

    Returns the maximum componentwise deviation over all cycle-boundary
    primal, multiplier, and penalty values, and the count of penalty-branch
    disagreements. Both should be zero.
    """
    script = extract_replay_script(trace)
    snapshots = run_inexact_mm(problems, net, script)
    cycles = trace_cycles(trace)
    t2_of = {}
    for e in trace.t2_events():
        t2_of[e.t] = e.t2

    max_dev = 0.0
    branch_mismatches = 0
    for c, snap in zip(cycles, snapshots):
        for i, t in c.tau.items():
            rec = t2_of[t]
            devs = [np.max(np.abs(np.array(rec["x"]) - snap.x[i]), initial=0.0),
                    np.max(np.abs(np.array(rec["lam"]) - snap.lam[i]), initial=0.0),
                    np.max(np.abs(np.array(rec["mu"]) - snap.mu[i]), initial=0.0),
                    abs(rec["varrho"] - snap.varrho[i]),
                    abs(rec["zeta"] - snap.zeta[i])]
            for j in net.neighbors(i):
                devs.append(np.max(np.abs(np.array(rec["nu_out"][j]) - snap.nu_out[i][j]),
                                   initial=0.0))
                devs.append(abs(rec["rho_out"][j] - snap.rho_out[i][j]))
            max_dev = max(max_dev, float(max(devs)))
            if rec["grew_eq"] != snap.branches[i]["grew_eq"] \
                    or rec["grew_ineq"] != snap.branches[i]["grew_ineq"] \
                    or {j: rec["grew_cons"][j] for j in net.neighbors(i)} \
                    != snap.branches[i]["grew_cons"]:
                branch_mismatches += 1
    return {"n_cycles": len(snapshots), "max_deviation": max_dev,
            "branch_mismatches": branch_mismatches}


# --------------------------------------------------------------------------
# strong-convexity diagnostics
# --------------------------------------------------------------------------

def _quadratic(q: Array, b: Array):
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    y_star = np.linalg.solve(q, -b)
    return (lambda y: float(0.5 * y @ q @ y + b @ y)), (lambda y: q @ y + b), y_star


def verify_gradient_bound(q: Array, b: Array, n_blocks: int, eps,
                          *, extra_steps: int = 100, max_iters: int = 200_000,
                          y0: Array | None = None) -> dict:
    """Check the tolerance-to-gradient bound on a strongly convex quadratic.

    Runs round-robin block descent with per-block step sizes ``1/L_i`` (block
    row spectral norms) until every block gradient has been within its
    tolerance at least once, then asserts for a further ``extra_steps`` steps
    that the full gradient stays below ``sqrt(sum((L_i * eps_i / sigma)^2))``
    with ``sigma`` the smallest eigenvalue.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    _, grad, _ = _quadratic(q, b)
    blocks = block_slices(n, n_blocks)
    sigma = float(np.linalg.eigvalsh(q).min())
    if sigma <= 0:
        raise ValueError("quadratic must be positive definite")
    lips = [float(np.linalg.norm(q[sl, :], 2)) for sl in blocks]
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (len(blocks),))
    bound = float(np.sqrt(np.sum((np.array(lips) * eps / sigma) ** 2)))

    y = np.zeros(n) if y0 is None else np.array(y0, dtype=float)
    reached = [False] * len(blocks)
    latched_at = None
    violations = []
    max_ratio = 0.0
    it = 0
    while it < max_iters:
        m = it % len(blocks)
        g = grad(y)
        y[blocks[m]] = descent_step(y[blocks[m]], g[blocks[m]], lips[m])
        it += 1
        g = grad(y)
        for idx, sl in enumerate(blocks):
            if np.linalg.norm(g[sl]) <= eps[idx]:
                reached[idx] = True
        if latched_at is None and all(reached):
            latched_at = it
        if latched_at is not None:
            ratio = float(np.linalg.norm(g)) / bound
            max_ratio = max(max_ratio, ratio)
            if ratio > 1.0 + 1e-12:
                violations.append((it, float(np.linalg.norm(g))))
            if it >= latched_at + extra_steps:
                break
    if latched_at is None:
        raise RuntimeError("block descent never latched all tolerances")
    return {"sigma": sigma, "lipschitz": lips, "bound": bound,
            "latched_at": latched_at, "violations": violations,
            "max_ratio": max_ratio}


def verify_descent_monotonicity(q: Array, b: Array, y0: Array,
                                steps: int = 50) -> dict:
    """Distances to the minimizer never grow under full gradient steps 1/L."""
    q = np.asarray(q, dtype=float)
    _, grad, y_star = _quadratic(q, b)
    lip = float(np.linalg.norm(q, 2))
    y = np.array(y0, dtype=float)
    distances = [float(np.linalg.norm(y - y_star))]
    violations = []
    for h in range(steps):
        y = descent_step(y, grad(y), lip)
        d = float(np.linalg.norm(y - y_star))
        if d > distances[-1] + 1e-14 * (1.0 + distances[-1]):
            violations.append((h + 1, distances[-1], d))
        distances.append(d)
    return {"distances": distances, "violations": violations}


def estimate_local_strong_convexity(problems, net: Network, x_all,
                                    duals, pens, *, step: float = 1e-5,
                                    eps=None, lipschitz=None) -> dict:
    """Smallest eigenvalue of the finite-difference Lagrangian Hessian.

    Diagnostic only (small problems). When per-node tolerances and step
    bounds are supplied and the point is locally convex, also reports the
    implied full-gradient bound and whether the measured gradient meets it.
    """
    n = net.n_nodes
    dims = [problems[i].dim_x for i in range(n)]
    offsets = np.concatenate([[0], np.cumsum(dims)])

    def split(vec):
        return {i: vec[offsets[i]:offsets[i + 1]] for i in range(n)}

    def stacked_grad(vec):
        xs = split(vec)
        parts = []
        for i in range(n):
            nbr = {j: xs[j] for j in net.neighbors(i)}
            parts.append(local_lagrangian_grad(problems[i], xs[i], nbr,
                                               duals[i], pens[i]))
        return np.concatenate(parts)

    from .numdiff import hessian_from_gradient
    x_vec = np.concatenate([np.asarray(x_all[i], dtype=float) for i in range(n)])
    hess = hessian_from_gradient(stacked_grad, x_vec, step=step)
    sigma = float(np.linalg.eigvalsh(hess).min())
    grad_norm = float(np.linalg.norm(stacked_grad(x_vec)))
    report = {"sigma": sigma, "grad_norm": grad_norm, "locally_convex": sigma > 0.0}
    if eps is not None and lipschitz is not None:
        if sigma > 0.0:
            bound = float(np.sqrt(sum((lipschitz[i] * eps[i] / sigma) ** 2
                                      for i in range(n))))
            report["bound"] = bound
            report["within_bound"] = grad_norm <= bound
        else:
            report["bound"] = None
            report["within_bound"] = None
    return report
