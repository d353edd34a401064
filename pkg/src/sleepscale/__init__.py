from .errors import ConfigError, ModelError, SleepScaleError
from .power import PowerTable, SleepSequence, SleepState, active_power, combined_power, sleep_catalog
from .workload import ArrivalSpec, JobStream, ServiceSpec, UtilizationTrace, generate, workload_preset
from .simulate import Policy, SimResult, simulate, sweep
from .analytic import MM1SleepParams, evaluate
from .policy import PolicyGrid, QoSConstraint, SleepTemplate, baseline_budget, frontier, select
from .predict import Predictor, run_series
from .runtime import EpochConfig, Strategy, compare, parse_strategy, run
from .data import load_jobs, load_power_table, load_trace

__version__ = '1.0.0'
