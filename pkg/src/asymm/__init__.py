"""Asynchronous method of multipliers over peer networks.

Peer nodes cooperatively solve a constrained, possibly nonconvex problem:
each holds a private objective and constraints plus a copy of the decision
variable, descends its local augmented Lagrangian when awake, and switches
to multiplier ascent once a distributed logic-AND detects that every node
reached its tolerance. A deterministic discrete-event simulator executes
the network; a centralized inexact method of multipliers replays traces as
an equivalence oracle.
"""

from .config import RunConfig, build_run
from .errors import ConfigError, NumericAbort, PropertyViolation
from .lagrangian import (DualLocal, PenaltyLocal, global_lagrangian,
                         lipschitz_estimate, local_lagrangian,
                         local_lagrangian_grad, q_penalty)
from .logic_and import LogicAndNode, StatusMatrix, run_protocol
from .metrics import compute_infeasibility, consensus_stats
from .multipliers import (PenaltySchedule, update_consensus_multiplier,
                          update_eq_multiplier, update_ineq_multiplier,
                          update_penalty_consensus, update_penalty_eq,
                          update_penalty_ineq)
from .node import DualMessage, NodeConfig, NodeState, PrimalMessage, next_tolerance
from .problems import (LocalProblem, LocalizationProblem, NnClassifierProblem,
                       build_localization_instance, build_nn_problems,
                       build_quadratic_problems, nested_circles, nn_forward,
                       two_moons)
from .reference import (ReplayScript, extract_replay_script, run_inexact_mm,
                        verify_replay)
from .runner import execute, run_experiment
from .simulator import (EventRecord, EventTrace, Network, StopRule, TimerParams,
                        check_trace_properties, compute_diameter,
                        generate_watts_strogatz, schedule_run, trace_cycles)

__version__ = "0.1.0"
