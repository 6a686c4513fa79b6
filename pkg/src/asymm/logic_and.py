"""Asynchronous distributed logic-AND termination detection.

Every node keeps a binary status matrix with one row per hop (the graph
diameter, or any upper bound on it) and one column per neighbor plus a
self column. Row 1 holds flags; each deeper row holds the conjunction of
the previous row, so information that some flag is still 0 propagates one
hop per broadcast. When a node's last row is all ones, every flag in the
network must have been raised at some earlier time.

The matrix transitions live in :class:`StatusMatrix`; :class:`LogicAndNode`
drives them from an arbitrary flag callback, so the protocol can be
exercised standalone (as here, in tests) or embedded in a larger node state
machine (as the solver does).
"""

from __future__ import annotations

from typing import Callable, Sequence


class StatusMatrix:
    """The per-node d_G x (|neighbors|+1) binary status matrix."""

    def __init__(self, rows: int, neighbors: Sequence[int]):
        if rows < 1:
            raise ValueError("need at least one row")
        self.rows = rows
        self.neighbors = tuple(sorted(neighbors))
        self._col_of = {j: idx for idx, j in enumerate(self.neighbors)}
        self.cols = len(self.neighbors) + 1
        self.cells = [[0] * self.cols for _ in range(rows)]

    def reset(self) -> None:
        for row in self.cells:
            for b in range(self.cols):
                row[b] = 0

    def refresh_self_column(self, flag: int) -> list[int]:
        """Write the flag into row 1, cascade conjunctions down, return the column.

        The returned column (row 1 flag, then one conjunction per deeper row)
        is exactly the broadcast payload.
        """
        self.cells[0][-1] = 1 if flag else 0
        for l in range(1, self.rows):
            self.cells[l][-1] = 1 if all(self.cells[l - 1]) else 0
        return self.self_column()

    def self_column(self) -> list[int]:
        return [row[-1] for row in self.cells]

    def absorb_neighbor_column(self, j: int, col: Sequence[int]) -> None:
        if j not in self._col_of:
            raise ValueError(f"{j} is not a neighbor")
        if len(col) != self.rows:
            raise ValueError(f"column must carry {self.rows} bits, got {len(col)}")
        b = self._col_of[j]
        for l in range(self.rows):
            self.cells[l][b] = 1 if col[l] else 0

    def detection_reached(self) -> bool:
        return all(self.cells[-1])

    def handle_stop_signal(self) -> None:
        """Force the last row to ones: detection fires at the next check."""
        row = self.cells[-1]
        for b in range(self.cols):
            row[b] = 1


class LogicAndNode:
    """One protocol participant, generic over where its flag comes from.

    ``flag_fn()`` is queried at each awakening and must be monotone (once 1,
    stays 1) for the detection guarantees to mean anything. A node that has
    detected halts: it emits one stop signal and ignores everything after.
    """

    def __init__(self, node_id: int, neighbors: Sequence[int], rows: int,
                 flag_fn: Callable[[], int]):
        self.id = node_id
        self.neighbors = tuple(sorted(neighbors))
        self.matrix = StatusMatrix(rows, neighbors)
        self.flag_fn = flag_fn
        self.got_stop = False
        self.detected_at = None   # event counter of own detection, if any

    def awake(self, t: int) -> list[tuple]:
        """Process one awakening; returns messages as (kind, self, payload)."""
        if self.detected_at is not None:
            return []
        out = []
        if not self.matrix.detection_reached():
            col = self.matrix.refresh_self_column(self.flag_fn())
            out.append(("col", self.id, tuple(col)))
        # re-check: the refresh above may itself have completed the last row
        if self.matrix.detection_reached():
            self.detected_at = t
            out.append(("stop", self.id, None))
        return out

    def receive(self, kind: str, sender: int, payload) -> None:
        if self.detected_at is not None:
            return
        if kind == "col":
            if not self.got_stop:
                self.matrix.absorb_neighbor_column(sender, payload)
        elif kind == "stop":
            self.got_stop = True
            self.matrix.handle_stop_signal()
        else:
            raise ValueError(f"unknown message kind {kind!r}")


class ProtocolRun:
    """Outcome of one driven protocol execution."""

    def __init__(self, n: int):
        self.detected_at: dict[int, int] = {}
        self.flag_seen_at: dict[int, int] = {}   # first awakening that read flag 1

    @property
    def first_detection(self) -> int | None:
        return min(self.detected_at.values()) if self.detected_at else None


def run_protocol(adjacency: Sequence[Sequence[int]], rows: int,
                 schedule: Sequence[int],
                 flag_raise_event: Sequence[float]) -> ProtocolRun:
    """Drive the protocol over an explicit awakening schedule.

    ``flag_raise_event[i]`` is the event counter from which node i's flag
    reads 1 (``inf`` for a flag that never raises). Events count from 1.
    """
    n = len(adjacency)
    run = ProtocolRun(n)
    clock = {"t": 0}

    def make_flag(i):
        def flag():
            up = clock["t"] >= flag_raise_event[i]
            if up and i not in run.flag_seen_at:
                run.flag_seen_at[i] = clock["t"]
            return 1 if up else 0
        return flag

    nodes = [LogicAndNode(i, adjacency[i], rows, make_flag(i)) for i in range(n)]
    for t, i in enumerate(schedule, start=1):
        clock["t"] = t
        for kind, sender, payload in nodes[i].awake(t):
            for j in adjacency[i]:
                nodes[j].receive(kind, sender, payload)
        if nodes[i].detected_at == t:
            run.detected_at[i] = t
    return run
