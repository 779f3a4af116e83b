"""Hybrid-electric aircraft charging demand, smart charging and joint flight rescheduling."""

from .errors import (EmptyWindow, GapNotReached, HeaschedError, InconsistentPair, Infeasible, MissingEntry,
                     ParseError, SlotOutOfRange, UnknownConfig, ZeroDwell)
from .hea_params import AircraftClass, HybridConfig, is_hea_feasible, leg_energy
from .reschedule import RescheduleSolution, Scenario, solve, verify
from .schedule import Connection, HeaDemand, Movement, MovementKind, Schedule, TimeGrid
from .smart_charge import ChargingTask, naive_profile, solve_smart

__version__ = "0.1.0"
