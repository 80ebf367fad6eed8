"""gridhelm: interactive grid resource management over a simulated execution
fabric — steering, job monitoring, and runtime/queue/transfer estimation."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    ConcretePlan,
    Estimate,
    EstimateEvaluation,
    Job,
    Task,
    TaskAttributes,
    TaskState,
    mean_absolute_percentage_error,
    percentage_error,
    transition,
)
from .fabric import LinkBandwidth, SimFabric, SiteState  # noqa: F401
from .history import HistoryStore, TaskHistoryRecord  # noqa: F401
from .stack import GridStack  # noqa: F401
