"""EV charging rescheduling under order-preserving slot constraints.

Charge blocks measured in 15-minute slots are moved, without reordering,
inside each session's plug-in window to lower a TOU bill with demand charges
or to shave load inside a system peak window.
"""

from .estimators import BillOptimizer, PeakShaver
from .ingestion import SyntheticConfig, generate_synthetic, group_sessions, parse_sessions
from .metrics import infrastructure_use, load_flexibility, summarize
from .optimize.bill import optimize_day_bill, optimize_month_bill
from .optimize.peak import optimize_peak_two_stage
from .optimize.problem import SolveResult, SolverConfig
from .schedule import Schedule, aggregate_power, baseline_schedule, validate_schedule
from .tariff import BillingState, Month, e19, load_tariff, monthly_bill
from .timegrid import ChargingSession, session_energy

__version__ = "0.1.0"

__all__ = [
    "BillOptimizer", "BillingState", "ChargingSession", "Month", "PeakShaver", "Schedule",
    "SolveResult", "SolverConfig", "SyntheticConfig", "aggregate_power", "baseline_schedule",
    "e19", "generate_synthetic", "group_sessions", "infrastructure_use", "load_flexibility",
    "load_tariff", "monthly_bill", "optimize_day_bill", "optimize_month_bill",
    "optimize_peak_two_stage", "parse_sessions", "session_energy", "summarize",
    "validate_schedule",
]
