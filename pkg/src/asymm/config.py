"""Run configuration: a single JSON document that fully determines a run.

Every random draw in a run (instance, initial points, timers) derives from
the one seed recorded here, so a config file plus the package version
reproduces a run exactly. Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .multipliers import PenaltySchedule
from .node import NodeConfig, NodeState
from .problems import (build_localization_instance, build_nn_problems,
                       build_quadratic_problems, nested_circles, two_moons)
from .simulator import Network, StopRule, TimerParams, generate_watts_strogatz

FAMILIES = ("localization", "nn-classifier", "quadratic")

# independent named streams under the run seed
_STREAM_INSTANCE = 0x9B0B
_STREAM_INIT = 0x117


def _section(d: dict, name: str, allowed: set[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{name} must be an object, got {type(d).__name__}")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return d


@dataclass(frozen=True)
class RunConfig:
    family: str
    n_nodes: int
    seed: int
    graph: dict
    penalties: PenaltySchedule
    tolerance: dict
    timers: TimerParams
    stop: StopRule
    block_enabled: bool
    block_count: int
    problem: dict
    lipschitz: dict
    diameter_bound: int | None
    record_messages: bool
    out_dir: str | None
    raw: dict = field(repr=False)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        top = _section(raw, "config", {
            "family", "n_nodes", "seed", "graph", "penalties", "tolerance",
            "timers", "stop", "block", "problem", "lipschitz",
            "diameter_bound", "record_messages", "out_dir"})
        family = top.get("family")
        if family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {family!r}")
        n_nodes = top.get("n_nodes")
        if not isinstance(n_nodes, int) or n_nodes < 1:
            raise ConfigError("n_nodes must be a positive integer")
        seed = top.get("seed")
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")

        graph = _section(top.get("graph", {"kind": "watts-strogatz"}), "graph",
                         {"kind", "k", "rewire_p", "edges"})
        pen = _section(top.get("penalties", {}), "penalties",
                       {"beta", "gamma", "initial", "cap"})
        try:
            penalties = PenaltySchedule(
                beta=float(pen.get("beta", 4.0)),
                gamma=float(pen.get("gamma", 0.25)),
                initial=float(pen.get("initial", 1.0)),
                cap=float(pen.get("cap", 1e8)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        tol = _section(top.get("tolerance", {}), "tolerance",
                       {"initial", "decay", "floor"})
        tolerance = {"initial": float(tol.get("initial", 1e-2)),
                     "decay": float(tol.get("decay", 0.5)),
                     "floor": float(tol.get("floor", 1e-9))}
        if not (tolerance["initial"] > 0 and 0 < tolerance["decay"] < 1
                and tolerance["floor"] > 0):
            raise ConfigError("tolerance needs initial > 0, decay in (0,1), floor > 0")
        tm = _section(top.get("timers", {}), "timers", {"t_min", "t_max"})
        try:
            timers = TimerParams(t_min=float(tm.get("t_min", 0.1)),
                                 t_max=float(tm.get("t_max", 1.0)))
        except ConfigError:
            raise
        st = _section(top.get("stop", {}), "stop",
                      {"max_events", "max_cycles", "infeasibility_below"})
        stop = StopRule(max_events=st.get("max_events"),
                        max_cycles=st.get("max_cycles"),
                        infeasibility_below=st.get("infeasibility_below"))
        blk = _section(top.get("block", {}), "block", {"enabled", "count"})
        block_enabled = bool(blk.get("enabled", False))
        block_count = int(blk.get("count", 1))
        if block_count < 1:
            raise ConfigError("block count must be >= 1")
        lip = _section(top.get("lipschitz", {}), "lipschitz",
                       {"initial", "max", "bound_h", "bound_jac_g"})
        lipschitz = {"initial": float(lip.get("initial", 1.0)),
                     "max": float(lip.get("max", 1e12)),
                     "bound_h": float(lip.get("bound_h", 0.0)),
                     "bound_jac_g": float(lip.get("bound_jac_g", 0.0))}
        problem = top.get("problem", {})
        diameter_bound = top.get("diameter_bound")
        if diameter_bound is not None and (not isinstance(diameter_bound, int)
                                           or diameter_bound < 1):
            raise ConfigError("diameter_bound must be a positive integer")

        cfg = cls(family=family, n_nodes=n_nodes, seed=seed, graph=graph,
                  penalties=penalties, tolerance=tolerance, timers=timers,
                  stop=stop, block_enabled=block_enabled, block_count=block_count,
                  problem=dict(problem), lipschitz=lipschitz,
                  diameter_bound=diameter_bound,
                  record_messages=bool(top.get("record_messages", True)),
                  out_dir=top.get("out_dir"), raw=raw)
        cfg._validate_problem()
        return cfg

    def _validate_problem(self) -> None:
        if self.family == "localization":
            _section(self.problem, "problem", {"dim", "box", "kappa_max"})
        elif self.family == "nn-classifier":
            p = _section(self.problem, "problem",
                         {"dataset", "points_per_node", "noise", "init_scale"})
            if p.get("dataset", "two-moons") not in ("two-moons", "nested-circles"):
                raise ConfigError("dataset must be two-moons or nested-circles")
        elif self.family == "quadratic":
            _section(self.problem, "problem", {"dim", "init", "init_scale"})

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)


@dataclass
class RunSetup:
    """Everything a run needs, built deterministically from a config."""

    cfg: RunConfig
    problems: list
    net: Network
    nodes: list[NodeState]
    rows: int
    extra: dict


def _build_network(cfg: RunConfig) -> Network:
    if cfg.n_nodes == 1:
        return Network.singleton()
    kind = cfg.graph.get("kind", "watts-strogatz")
    if kind == "watts-strogatz":
        return generate_watts_strogatz(cfg.seed, cfg.n_nodes,
                                       int(cfg.graph.get("k", 2)),
                                       float(cfg.graph.get("rewire_p", 0.1)))
    if kind == "edges":
        if "edges" not in cfg.graph:
            raise ConfigError("graph kind 'edges' needs an edge list")
        return Network.from_edges(cfg.n_nodes, cfg.graph["edges"])
    if kind == "ring":
        return Network.ring(cfg.n_nodes)
    if kind == "path":
        return Network.path(cfg.n_nodes)
    if kind == "complete":
        return Network.complete(cfg.n_nodes)
    raise ConfigError(f"unknown graph kind {kind!r}")


def _build_problems(cfg: RunConfig):
    instance_seed = (cfg.seed, _STREAM_INSTANCE)
    extra = {}
    if cfg.family == "localization":
        problems, x_star = build_localization_instance(
            instance_seed, cfg.n_nodes,
            box=float(cfg.problem.get("box", 2.5)),
            kappa_max=float(cfg.problem.get("kappa_max", 0.3)),
            dim=int(cfg.problem.get("dim", 2)))
        extra["x_star"] = x_star
    elif cfg.family == "nn-classifier":
        per = int(cfg.problem.get("points_per_node", 100))
        noise = float(cfg.problem.get("noise", 0.1))
        dataset = cfg.problem.get("dataset", "two-moons")
        maker = two_moons if dataset == "two-moons" else nested_circles
        points, labels = maker(instance_seed, per * cfg.n_nodes, noise)
        problems = build_nn_problems(points, labels, cfg.n_nodes)
        extra["points"], extra["labels"] = points, labels
    else:
        problems = build_quadratic_problems(instance_seed, cfg.n_nodes,
                                            int(cfg.problem.get("dim", 4)))
    return problems, extra


def _initial_points(cfg: RunConfig, dim: int) -> list[np.ndarray]:
    rng = np.random.default_rng((cfg.seed, _STREAM_INIT))
    if cfg.family == "nn-classifier":
        scale = float(cfg.problem.get("init_scale", 0.5))
        return [rng.uniform(-scale, scale, size=dim) for _ in range(cfg.n_nodes)]
    if cfg.family == "quadratic" and cfg.problem.get("init", "zeros") == "uniform":
        scale = float(cfg.problem.get("init_scale", 1.0))
        return [rng.uniform(-scale, scale, size=dim) for _ in range(cfg.n_nodes)]
    return [np.zeros(dim) for _ in range(cfg.n_nodes)]


def build_run(cfg: RunConfig) -> RunSetup:
    net = _build_network(cfg)
    problems, extra = _build_problems(cfg)
    dim = problems[0].dim_x
    block_count = cfg.block_count if cfg.block_enabled else 1
    if block_count > dim:
        raise ConfigError(f"block count {block_count} exceeds dimension {dim}")
    rows = max(1, net.diameter)
    if cfg.diameter_bound is not None:
        if cfg.diameter_bound < net.diameter:
            raise ConfigError(f"diameter_bound {cfg.diameter_bound} below "
                              f"actual diameter {net.diameter}")
        rows = cfg.diameter_bound
    node_cfg = NodeConfig(
        eps0=cfg.tolerance["initial"], eps_decay=cfg.tolerance["decay"],
        eps_min=cfg.tolerance["floor"], sched=cfg.penalties,
        lipschitz0=cfg.lipschitz["initial"], lipschitz_max=cfg.lipschitz["max"],
        bound_h=cfg.lipschitz["bound_h"], bound_jac_g=cfg.lipschitz["bound_jac_g"],
        block_count=block_count)
    x0 = _initial_points(cfg, dim)
    nodes = [NodeState(i, problems[i], net.neighbors(i), rows, x0[i],
                       {j: x0[j] for j in net.neighbors(i)}, node_cfg)
             for i in range(cfg.n_nodes)]
    return RunSetup(cfg=cfg, problems=problems, net=net, nodes=nodes,
                    rows=rows, extra=extra)
