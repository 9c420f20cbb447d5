"""
Workflow orchestration for HomeSentinel
"""

from .event_engine import EventEngine, TriggeredEvent
from .notifier import Notifier
from .pipeline import RunSummary, run_monitor
from .recorder import Recorder

__all__ = ["EventEngine", "TriggeredEvent", "Notifier", "Recorder", "RunSummary", "run_monitor"]
