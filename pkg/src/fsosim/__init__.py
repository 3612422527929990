"""Agent-based simulation of fractal social organizations (FSO).

Communities of agents are nested in a tree; requests that a community cannot
serve on its own escalate upward and are answered by temporary overlay
networks built from roles anywhere in the tree. Two scenarios exercise this:
a city with everyday activities, healthcare and house fires, and an ambient
assisted-living falls model.
"""
__version__ = "0.1.0"

from .engine import EventLog, Position, RngStream, RngStreams, World, WorldConfig, advance_tick, distance
from .fso import FSOTree, ServiceRequest, SocialOverlayNetwork
from .metrics import CitySummary, FallsSummary, summarize_city_run, summarize_falls_run, write_outputs

__all__ = [
    "__version__", "EventLog", "Position", "RngStream", "RngStreams", "World", "WorldConfig",
    "advance_tick", "distance", "FSOTree", "ServiceRequest", "SocialOverlayNetwork",
    "CitySummary", "FallsSummary", "summarize_city_run", "summarize_falls_run", "write_outputs",
]
