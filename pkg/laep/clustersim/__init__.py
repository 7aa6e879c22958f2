from laep.core import reroute_pruned, reroute_rows
from .params import ParamBreakdown, param_breakdown, count_params
from .simulate import (
    ScenarioReport,
    BASE,
    PRUNED,
    PRUNED_REARRANGED,
    UNIFORM_CONTROL,
    SCENARIOS,
    step_time,
    layer_step_times,
    mean_step_time,
    compare_scenarios,
)
from .io import write_report, read_report, REPORT_CSV_HEADER
