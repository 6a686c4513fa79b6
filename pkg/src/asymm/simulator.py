"""Deterministic discrete-event engine and trace machinery.

One event is one node awakening. Wake times come from seeded per-node
timers (uniform in ``(t_min, t_max]``), the earliest timer fires next with
ties broken by node id, and broadcasts reach idle neighbors instantly,
before any further awakening. A run is therefore a pure function of
(configuration, seed), and equal seeds yield byte-identical traces.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PropertyViolation
from .node import AwakeResult, NodeState, message_from_dict

Array = np.ndarray


# --------------------------------------------------------------------------
# network
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Network:
    """Undirected connected graph with precomputed sorted adjacency."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]        # canonical (i < j), sorted
    adjacency: tuple[tuple[int, ...], ...]
    diameter: int

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Network":
        canon = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise ConfigError("self-loops are not allowed")
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise ConfigError(f"edge ({a},{b}) out of range for {n_nodes} nodes")
            canon.add((min(a, b), max(a, b)))
        nbrs = [set() for _ in range(n_nodes)]
        for a, b in canon:
            nbrs[a].add(b)
            nbrs[b].add(a)
        adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        diameter = compute_diameter(adjacency)
        return cls(n_nodes=n_nodes, edges=tuple(sorted(canon)),
                   adjacency=adjacency, diameter=diameter)

    @classmethod
    def path(cls, n_nodes: int) -> "Network":
        return cls.from_edges(n_nodes, [(i, i + 1) for i in range(n_nodes - 1)])

    @classmethod
    def ring(cls, n_nodes: int) -> "Network":
        return cls.from_edges(n_nodes, [(i, (i + 1) % n_nodes) for i in range(n_nodes)])

    @classmethod
    def complete(cls, n_nodes: int) -> "Network":
        return cls.from_edges(n_nodes, [(i, j) for i in range(n_nodes)
                                        for j in range(i + 1, n_nodes)])

    @classmethod
    def singleton(cls) -> "Network":
        return cls(n_nodes=1, edges=(), adjacency=((),), diameter=0)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]


def _bfs_eccentricity(adjacency, start: int) -> int:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    if len(dist) != len(adjacency):
        raise ConfigError("graph is not connected")
    return max(dist.values())


def compute_diameter(adjacency) -> int:
    """Exact diameter: maximum BFS eccentricity over all nodes."""
    if len(adjacency) == 1:
        return 0
    return max(_bfs_eccentricity(adjacency, s) for s in range(len(adjacency)))


def generate_watts_strogatz(seed: int, n_nodes: int, k: int, rewire_p: float,
                            max_retries: int = 200) -> Network:
    """Connected small-world graph: ring lattice of degree k, then rewiring.

    Each clockwise lattice edge is rewired with probability ``rewire_p`` to a
    uniformly random new endpoint (no self-loops or duplicates). Disconnected
    draws are rejected and regenerated from an incremented sub-seed.
    """
    if k % 2 != 0 or k < 2:
        raise ConfigError("mean degree k must be even and >= 2")
    if n_nodes <= k:
        raise ConfigError("need n_nodes > k")
    if not 0.0 <= rewire_p <= 1.0:
        raise ConfigError("rewire_p must lie in [0, 1]")
    for attempt in range(max_retries):
        rng = np.random.default_rng((seed, 0x57A7, attempt))
        edges = set()
        for i in range(n_nodes):
            for d in range(1, k // 2 + 1):
                j = (i + d) % n_nodes
                edges.add((min(i, j), max(i, j)))
        if rewire_p > 0.0:
            for i in range(n_nodes):
                for d in range(1, k // 2 + 1):
                    j = (i + d) % n_nodes
                    e = (min(i, j), max(i, j))
                    if e not in edges or rng.random() >= rewire_p:
                        continue
                    candidates = [t for t in range(n_nodes)
                                  if t != i and (min(i, t), max(i, t)) not in edges]
                    if not candidates:
                        continue
                    t = candidates[rng.integers(len(candidates))]
                    edges.remove(e)
                    edges.add((min(i, t), max(i, t)))
        try:
            return Network.from_edges(n_nodes, edges)
        except ConfigError:
            continue
    raise ConfigError(f"no connected graph after {max_retries} attempts")


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@dataclass
class EventRecord:
    """One awakening: who ran what, plus scalar diagnostics."""

    t: int
    time: float
    node: int
    task: str
    cycle: int
    theta_rev: int
    eps: float
    pen_max: float
    block: int | None = None
    lipschitz: float | None = None
    grad_norm: float | None = None
    grad_norm_pre: float | None = None
    lag_pre: float | None = None
    lag_post: float | None = None
    xi: float | None = None
    messages: list | None = None
    t2: dict | None = None

    def to_dict(self) -> dict:
        d = {"t": self.t, "time": self.time, "node": self.node, "task": self.task,
             "cycle": self.cycle, "theta_rev": self.theta_rev, "eps": self.eps,
             "pen_max": self.pen_max}
        for key in ("block", "lipschitz", "grad_norm", "grad_norm_pre",
                    "lag_pre", "lag_post", "xi"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        if self.messages is not None:
            d["messages"] = [m.to_dict() for m in self.messages]
        if self.t2 is not None:
            t2 = dict(self.t2)
            t2["nu_out"] = {str(j): v for j, v in t2["nu_out"].items()}
            t2["rho_out"] = {str(j): v for j, v in t2["rho_out"].items()}
            t2["grew_cons"] = {str(j): v for j, v in t2["grew_cons"].items()}
            d["t2"] = t2
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        messages = None
        if "messages" in d:
            messages = [message_from_dict(m) for m in d["messages"]]
        t2 = None
        if "t2" in d:
            t2 = dict(d["t2"])
            t2["nu_out"] = {int(j): v for j, v in t2["nu_out"].items()}
            t2["rho_out"] = {int(j): v for j, v in t2["rho_out"].items()}
            t2["grew_cons"] = {int(j): v for j, v in t2["grew_cons"].items()}
        return cls(t=d["t"], time=d["time"], node=d["node"], task=d["task"],
                   cycle=d["cycle"], theta_rev=d["theta_rev"], eps=d["eps"],
                   pen_max=d["pen_max"], block=d.get("block"),
                   lipschitz=d.get("lipschitz"), grad_norm=d.get("grad_norm"),
                   grad_norm_pre=d.get("grad_norm_pre"), lag_pre=d.get("lag_pre"),
                   lag_post=d.get("lag_post"), xi=d.get("xi"),
                   messages=messages, t2=t2)


@dataclass
class EventTrace:
    """Ordered event records plus run metadata."""

    meta: dict
    events: list[EventRecord] = field(default_factory=list)

    def t2_events(self) -> list[EventRecord]:
        return [e for e in self.events if e.task == "T2"]


@dataclass(frozen=True)
class TimerParams:
    """Per-node wake delays are uniform in ``(t_min, t_max]``."""

    t_min: float = 0.1
    t_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.t_min < self.t_max:
            raise ConfigError("need 0 < t_min < t_max")


@dataclass(frozen=True)
class StopRule:
    """Run until an event budget, a cycle budget, or an infeasibility target."""

    max_events: int | None = None
    max_cycles: int | None = None
    infeasibility_below: float | None = None

    def __post_init__(self):
        if self.max_events is None and self.max_cycles is None \
                and self.infeasibility_below is None:
            raise ConfigError("stop rule needs at least one bound")


def schedule_run(net: Network, nodes: list[NodeState], timers: TimerParams,
                 seed: int, stop: StopRule, *, metric_fn=None,
                 record_messages: bool = True, rows: int | None = None) -> EventTrace:
    """Run the event loop until the stop rule fires and return the trace.

    ``metric_fn(node_id, task)``, when given, is evaluated after every event
    and its value stored on the record (used for the live infeasibility
    column). ``rows`` documents the status-matrix depth in the metadata.
    """
    n = net.n_nodes
    rng = np.random.default_rng((seed, 0xA11CE))   # timer stream, decoupled from instance draws

    def draw(i: int) -> float:
        # uniform on (t_min, t_max]: numpy's uniform is right-open
        return timers.t_max - float(rng.uniform(0.0, timers.t_max - timers.t_min))

    heap = [(draw(i), i) for i in range(n)]
    heapq.heapify(heap)

    cfg = nodes[0].cfg
    trace = EventTrace(meta={
        "schema": 1, "n_nodes": n, "diameter": net.diameter,
        "rows": rows if rows is not None else max(1, net.diameter),
        "seed": seed, "t_min": timers.t_min, "t_max": timers.t_max,
        "edges": [list(e) for e in net.edges],
        # everything the replay oracle needs to re-run the trace
        "x0": {str(i): [float(v) for v in nodes[i].x] for i in range(n)},
        "block_count": cfg.block_count,
        "sched": {"beta": cfg.sched.beta, "gamma": cfg.sched.gamma,
                  "initial": cfg.sched.initial, "cap": cfg.sched.cap},
    })
    t = 0
    t2_total = 0
    while True:
        if stop.max_events is not None and t >= stop.max_events:
            break
        now, i = heapq.heappop(heap)
        t += 1
        result: AwakeResult = nodes[i].on_awake()
        for msg in result.messages:
            nodes[msg.recipient].on_receive(msg)
        heapq.heappush(heap, (now + draw(i), i))

        xi = metric_fn(i, result.task) if metric_fn is not None else None
        trace.events.append(EventRecord(
            t=t, time=now, node=i, task=result.task, cycle=result.cycle,
            theta_rev=result.theta_rev, eps=result.eps, pen_max=result.pen_max,
            block=result.block, lipschitz=result.lipschitz,
            grad_norm=result.grad_norm, grad_norm_pre=result.grad_norm_pre,
            lag_pre=result.lag_pre, lag_post=result.lag_post, xi=xi,
            messages=result.messages if record_messages else None,
            t2=result.t2))

        if result.task == "T2":
            t2_total += 1
            if t2_total % n == 0:
                cycles_done = t2_total // n
                if stop.max_cycles is not None and cycles_done >= stop.max_cycles:
                    break
                if stop.infeasibility_below is not None and xi is not None \
                        and xi < stop.infeasibility_below:
                    break
    trace.meta["n_events"] = t
    return trace


# --------------------------------------------------------------------------
# cycle extraction and structural checks
# --------------------------------------------------------------------------

@dataclass
class CycleSummary:
    """One complete multiplier cycle recovered from a trace."""

    k: int
    tau: dict[int, int]                    # node -> event t of its T2
    t2_order: list[int]                    # T2 node ids in event order
    steps: list[tuple[int, int, int | None, float]]   # (t, node, block, L)

    @property
    def h(self) -> int:
        return len(self.steps)


def trace_cycles(trace: EventTrace) -> list[CycleSummary]:
    """Partition T2 events into cycles and collect each cycle's T1 steps.

    The T1 steps of cycle k are, per node, the steps between its (k-1)-th
    and k-th multiplier updates, merged across nodes in event order. Only
    complete cycles (one T2 per node) are returned; a window of N T2 events
    that is not a permutation of the nodes raises
    :class:`~asymm.errors.PropertyViolation`.
    """
    n = trace.meta["n_nodes"]
    t2s = trace.t2_events()
    n_cycles = len(t2s) // n
    cycles = []
    for k in range(n_cycles):
        group = t2s[k * n:(k + 1) * n]
        ids = [e.node for e in group]
        if sorted(ids) != list(range(n)):
            raise PropertyViolation(
                f"T2 group {k} is not a permutation of the nodes: {ids}",
                window=(group[0].t, group[-1].t))
        cycles.append(CycleSummary(k=k, tau={e.node: e.t for e in group},
                                   t2_order=ids, steps=[]))
    own_t2 = [0] * n
    for e in trace.events:
        if e.task == "T2":
            own_t2[e.node] += 1
        elif e.task == "T1":
            k = own_t2[e.node]
            if k < n_cycles:
                cycles[k].steps.append((e.t, e.node, e.block, e.lipschitz))
    return cycles


def check_trace_properties(trace: EventTrace) -> dict:
    """Assert the structural properties every conforming run must satisfy.

    Covers: each cycle's T2 group is a node permutation; a node's multiplier
    revision changes only at its T2; every node runs T1 at least once between
    consecutive cycle starts; cycle starts are at least 2N events apart; each
    cycle's T1 step count is at least N; each cycle's multiplier phase spans
    at most diameter * t_max of simulated time; no wake gap exceeds t_max;
    and no T1 step increases the local Lagrangian (up to float slack).
    Returns summary statistics; raises PropertyViolation on any failure.
    """
    n = trace.meta["n_nodes"]
    cycles = trace_cycles(trace)

    # multiplier revision only moves at T2, by exactly one
    last_rev = {}
    for e in trace.events:
        prev = last_rev.get(e.node, 0)
        expect = prev + 1 if e.task == "T2" else prev
        if e.theta_rev != expect:
            raise PropertyViolation(
                f"node {e.node} multiplier revision moved outside T2 at t={e.t}",
                window=(e.t, e.t))
        last_rev[e.node] = e.theta_rev

    t1_times = {i: [] for i in range(n)}
    for e in trace.events:
        if e.task == "T1":
            t1_times[e.node].append(e.t)
    starts = [min(c.tau.values()) for c in cycles]
    for k in range(len(cycles) - 1):
        for i in range(n):
            if not any(starts[k] < t < starts[k + 1] for t in t1_times[i]):
                raise PropertyViolation(
                    f"node {i} ran no T1 between cycle starts {k} and {k + 1}",
                    window=(starts[k], starts[k + 1]))
        if starts[k + 1] - starts[k] < 2 * n:
            raise PropertyViolation(
                f"cycle starts {k},{k + 1} only {starts[k + 1] - starts[k]} events apart",
                window=(starts[k], starts[k + 1]))
    for c in cycles:
        if c.h < n:
            raise PropertyViolation(f"cycle {c.k} has only {c.h} T1 steps (< {n})")

    # multiplier phases complete within diameter * t_max of simulated time
    t_max = trace.meta.get("t_max")
    diameter = trace.meta.get("diameter")
    if t_max is not None and diameter is not None and diameter > 0:
        time_of = {e.t: e.time for e in trace.events}
        for c in cycles:
            span = max(time_of[t] for t in c.tau.values()) \
                - min(time_of[t] for t in c.tau.values())
            if span > diameter * t_max + 1e-9:
                raise PropertyViolation(
                    f"cycle {c.k} multiplier phase spans {span:.6f} "
                    f"> diameter*t_max = {diameter * t_max:.6f}")

    # local timers honored: consecutive wake gaps never exceed t_max
    if t_max is not None:
        last_time = {}
        for e in trace.events:
            gap = e.time - last_time.get(e.node, 0.0)
            if gap > t_max + 1e-12:
                raise PropertyViolation(
                    f"node {e.node} slept {gap:.6f} > t_max at t={e.t}")
            last_time[e.node] = e.time

    # primal steps never increase the local augmented Lagrangian
    for e in trace.events:
        if e.task == "T1" and e.lag_pre is not None and e.lag_post is not None:
            if e.lag_post > e.lag_pre + 1e-9 * (1.0 + abs(e.lag_pre)):
                raise PropertyViolation(
                    f"T1 at t={e.t} increased the local Lagrangian "
                    f"({e.lag_pre} -> {e.lag_post})", window=(e.t, e.t))

    return {
        "n_cycles": len(cycles),
        "h_per_cycle": [c.h for c in cycles],
        "events": len(trace.events),
        "t2_per_node": {i: sum(1 for e in trace.t2_events() if e.node == i)
                        for i in range(n)},
    }
