"""Driver-behavior scoring from vehicle trajectories, and a behavior-aware highway planner."""

__version__ = "0.1.0"
