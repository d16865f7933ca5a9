from .config import ATTACKER_RATIOS, AttackKind, ConfigError, SimConfig, attacker_count
from .engine import Event, EventKind, SimTrace, SimulationError, Simulator, run_simulation, transmission_delay
from .mobility import NodeState, gm_step, gm_update, neighbor_matrix, neighbors_of
