"""Randomized and exhaustive checks of the termination-detection protocol.

Soundness: whenever any node's detection fires, every node's flag must have
been observed raised at or before that event. Liveness: with all flags up
from the start and a fair (round-based) schedule, every node detects within
``rows`` sweeps of the network, where ``rows`` is the status-matrix depth
(the diameter, or the configured upper bound on it).
"""

from __future__ import annotations

import math

import numpy as np

from .logic_and import LogicAndNode, run_protocol


def random_connected_graph(rng: np.random.Generator, n: int,
                           extra_edge_p: float = 0.2) -> list[tuple[int, ...]]:
    """Random tree plus random extra edges; adjacency as sorted tuples."""
    nbrs = [set() for _ in range(n)]
    for v in range(1, n):
        u = int(rng.integers(v))
        nbrs[u].add(v)
        nbrs[v].add(u)
    for u in range(n):
        for v in range(u + 1, n):
            if v not in nbrs[u] and rng.random() < extra_edge_p:
                nbrs[u].add(v)
                nbrs[v].add(u)
    return [tuple(sorted(s)) for s in nbrs]


def graph_diameter(adjacency) -> int:
    from .simulator import compute_diameter
    return compute_diameter(adjacency)


def round_schedule(rng: np.random.Generator, n: int, sweeps: int) -> list[int]:
    """Concatenated random node permutations: fair by construction."""
    out = []
    for _ in range(sweeps):
        out.extend(int(v) for v in rng.permutation(n))
    return out


def soundness_corpus(n_graphs: int = 100, seed: int = 2024, max_n: int = 12,
                     pad: int = 0) -> dict:
    """Random graphs x random (possibly unfair) schedules x random flag times."""
    rng = np.random.default_rng((seed, 0x50F7))
    violations = []
    detections = 0
    for run_idx in range(n_graphs):
        n = int(rng.integers(2, max_n + 1))
        adjacency = random_connected_graph(rng, n)
        rows = graph_diameter(adjacency) + pad
        length = 6 * rows * n * n
        schedule = [int(v) for v in rng.integers(0, n, size=length)]
        raise_events = [math.inf if rng.random() < 0.3
                        else float(rng.integers(1, length + 1)) for _ in range(n)]
        run = run_protocol(adjacency, rows, schedule, raise_events)
        first = run.first_detection
        if first is None:
            continue
        detections += 1
        for i in range(n):
            seen = run.flag_seen_at.get(i)
            if seen is None or seen > first:
                violations.append({"run": run_idx, "node": i,
                                   "detected_at": first, "flag_seen": seen})
    return {"runs": n_graphs, "detections": detections, "violations": violations}


def liveness_corpus(n_graphs: int = 100, seed: int = 2024, max_n: int = 12,
                    pad: int = 0) -> dict:
    """Fair schedules, all flags up from the start: everyone must detect in time."""
    rng = np.random.default_rng((seed, 0x11FE))
    violations = []
    for run_idx in range(n_graphs):
        n = int(rng.integers(2, max_n + 1))
        adjacency = random_connected_graph(rng, n)
        rows = graph_diameter(adjacency) + pad
        sweeps = rows * n
        schedule = round_schedule(rng, n, sweeps)
        run = run_protocol(adjacency, rows, schedule, [1.0] * n)
        missing = [i for i in range(n) if i not in run.detected_at]
        if missing:
            violations.append({"run": run_idx, "n": n, "rows": rows,
                               "missing": missing})
    return {"runs": n_graphs, "violations": violations}


def exhaustive_path3(max_len: int = 12, pad: int = 0) -> dict:
    """Every schedule up to ``max_len`` on the 3-path, for every constant flag set.

    Soundness in its sharpest form: with any flag permanently down, no node
    may ever detect; with all flags up, any detection is legitimate. The
    schedule prefix tree is walked with state memoization: a state already
    expanded with at least as much remaining depth cannot yield anything
    new, so the exploration is exhaustive but far cheaper than the tree.
    """
    adjacency = [(1,), (0, 2), (1,)]
    rows = 2 + pad
    violations = []
    stats = {"transitions": 0, "detections": 0, "states": 0}

    for pattern in range(8):
        flags = [(pattern >> i) & 1 for i in range(3)]
        all_up = all(flags)
        nodes = [LogicAndNode(i, adjacency[i], rows, lambda i=i: flags[i])
                 for i in range(3)]
        seen: dict[tuple, int] = {}

        def freeze():
            return tuple((tuple(tuple(r) for r in nd.matrix.cells),
                          nd.got_stop, nd.detected_at is not None)
                         for nd in nodes)

        def snapshot():
            return [([row[:] for row in nd.matrix.cells], nd.got_stop, nd.detected_at)
                    for nd in nodes]

        def restore(saved):
            for nd, (cells, got_stop, detected_at) in zip(nodes, saved):
                nd.matrix.cells = [row[:] for row in cells]
                nd.got_stop = got_stop
                nd.detected_at = detected_at

        def walk(remaining):
            key = freeze()
            if seen.get(key, -1) >= remaining:
                return
            seen[key] = remaining
            if remaining == 0:
                return
            for i in range(3):
                saved = snapshot()
                stats["transitions"] += 1
                for kind, sender, payload in nodes[i].awake(1):
                    for j in adjacency[i]:
                        nodes[j].receive(kind, sender, payload)
                detected = [nd.id for nd in nodes if nd.detected_at is not None]
                if detected and not all_up:
                    violations.append({"flags": flags, "remaining": remaining,
                                       "detected": detected})
                elif detected:
                    stats["detections"] += 1
                walk(remaining - 1)
                restore(saved)

        walk(max_len)
        stats["states"] += len(seen)
    return {**stats, "violations": violations}
