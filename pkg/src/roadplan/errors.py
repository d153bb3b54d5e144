"""Planner failure signals shared by both planners and the harness."""

from __future__ import annotations


class PlanningFailure(Exception):
    """The planner could not produce a valid trajectory; carries the reason."""

    def __init__(self, reason: str, step: int | None = None):
        super().__init__(reason if step is None else f"{reason} (at step {step})")
        self.reason = reason
        self.step = step


class TimeoutExceeded(Exception):
    """The planner ran out of its wall-clock budget."""
