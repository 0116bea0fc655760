"""Fast Krasnosel'skii-Mann iteration for fixed points of averaged operators."""

__version__ = "0.1.0"

from ._jit import USE_NUMBA
from .operators import (
    AveragedOperator,
    MonotoneLinearMap,
    NonFiniteError,
    ParameterError,
    check_cocoercivity,
    evaluate,
    make_davis_yin,
    make_douglas_rachford,
    make_dr_feasibility,
    make_forward_backward,
    make_rotation_resolvent,
    project_hyperplane,
    project_nonnegative,
    residual_map,
)
from .schemes import SchemeConfig, StepSchedule, Trace, run
