from .closed_testing import (BoundSeries, BoundTracker, DiscoverySet, ShortcutTrace, bound_series,
                             brute_force_bound, multi_r_bounds, p_value_closed_testing_bound,
                             shortcut_bound)
from .eprocess import EProcessBank, EProcessFamily, ElementaryState, EValueMatrix, e_to_p_process
from .errors import ConfigError, InputError, NumericalError, OracleMismatch, SizeError, TDPError
from .simulation import MetricsTable, ScenarioConfig, run_scenario

# export main objects
__all__ = ["DiscoverySet",
           "BoundSeries",
           "BoundTracker",
           "ShortcutTrace",
           "shortcut_bound",
           "brute_force_bound",
           "bound_series",
           "multi_r_bounds",
           "p_value_closed_testing_bound",
           "EProcessFamily",
           "EProcessBank",
           "ElementaryState",
           "EValueMatrix",
           "e_to_p_process",
           "ScenarioConfig",
           "MetricsTable",
           "run_scenario",
           "TDPError",
           "InputError",
           "SizeError",
           "ConfigError",
           "NumericalError",
           "OracleMismatch",
           ]
