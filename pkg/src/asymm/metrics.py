"""Run metrics: the infeasibility measure and machine-readable exports.

Infeasibility sums, over nodes, the positive part of every inequality, the
absolute value of every equality, and the disagreement norm with each
neighbor (each edge counted from both endpoints). For the localization
benchmark this is exactly the crown-violation-plus-consensus measure.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .problems import LocalProblem
from .simulator import EventTrace, Network, trace_cycles

Array = np.ndarray

METRICS_COLUMNS = ["t", "cycle", "node", "task", "grad_norm", "eps", "xi", "pen_max"]
SUMMARY_SCHEMA = 1


def node_violation(problem: LocalProblem, x: Array) -> float:
    """Constraint part of one node's infeasibility contribution."""
    h, g = problem.constraints(x)
    return float(np.sum(np.abs(h)) + np.sum(np.maximum(0.0, g)))


def compute_infeasibility(problems, net: Network, x_all) -> float:
    total = 0.0
    for i in range(net.n_nodes):
        total += node_violation(problems[i], x_all[i])
        for j in net.neighbors(i):
            total += float(np.linalg.norm(x_all[i] - x_all[j]))
    return total


class InfeasibilityTracker:
    """Incrementally maintained live infeasibility over a running simulation.

    Recomputes only the awake node's constraint term and its edge norms, so
    the per-event cost is proportional to the node degree.
    """

    def __init__(self, problems, net: Network, nodes):
        self.problems = problems
        self.net = net
        self.nodes = nodes
        self.violation = [node_violation(problems[i], nodes[i].x)
                          for i in range(net.n_nodes)]
        self.edge_norm = {}
        for i in range(net.n_nodes):
            for j in net.neighbors(i):
                if i < j:
                    self.edge_norm[(i, j)] = float(
                        np.linalg.norm(nodes[i].x - nodes[j].x))

    def __call__(self, node_id: int, task: str) -> float:
        if task == "T1":     # only primal steps move x
            x = self.nodes[node_id].x
            self.violation[node_id] = node_violation(self.problems[node_id], x)
            for j in self.net.neighbors(node_id):
                key = (min(node_id, j), max(node_id, j))
                self.edge_norm[key] = float(np.linalg.norm(x - self.nodes[j].x))
        return float(sum(self.violation) + 2.0 * sum(self.edge_norm.values()))


def cycle_boundary_infeasibility(trace: EventTrace, problems, net: Network) -> list[float]:
    """Infeasibility of the assembled per-cycle state snapshots.

    Each node's variable is taken at its own multiplier-update instant, the
    state the centralized view calls the cycle-k result.
    """
    values = []
    t2_of = {e.t: e.t2 for e in trace.t2_events()}
    for c in trace_cycles(trace):
        x = {i: np.array(t2_of[t]["x"], dtype=float) for i, t in c.tau.items()}
        values.append(compute_infeasibility(problems, net, x))
    return values


def export_metrics_csv(trace: EventTrace, path) -> None:
    """One row per event; floats via repr so files are byte-stable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for e in trace.events:
            writer.writerow([
                e.t, e.cycle, e.node, e.task,
                "" if e.grad_norm is None else repr(e.grad_norm),
                repr(e.eps),
                "" if e.xi is None else repr(e.xi),
                repr(e.pen_max),
            ])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            rows.append({
                "t": int(row["t"]), "cycle": int(row["cycle"]),
                "node": int(row["node"]), "task": row["task"],
                "grad_norm": float(row["grad_norm"]) if row["grad_norm"] else None,
                "eps": float(row["eps"]),
                "xi": float(row["xi"]) if row["xi"] else None,
                "pen_max": float(row["pen_max"]),
            })
        return rows


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")


def consensus_stats(nodes) -> tuple[Array, float]:
    """Mean of the final node variables and the largest distance to it."""
    xs = np.stack([node.x for node in nodes])
    mean = xs.mean(axis=0)
    spread = float(np.max(np.linalg.norm(xs - mean, axis=1)))
    return mean, spread


def export_classifier_grid(weights: Array, bounds, resolution: int, path) -> None:
    """CSV of classifier outputs over a grid, for external region plots.

    ``bounds`` is (xmin, xmax, ymin, ymax); rows are ``z1, z2, value``.
    """
    from .problems import nn_forward_many
    xmin, xmax, ymin, ymax = bounds
    z1 = np.linspace(xmin, xmax, resolution)
    z2 = np.linspace(ymin, ymax, resolution)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z1", "z2", "value"])
        for b in z2:
            pts = np.column_stack([z1, np.full_like(z1, b)])
            vals = nn_forward_many(pts, weights)
            for a, v in zip(z1, vals):
                writer.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
