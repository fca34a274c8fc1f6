"""agentline: regression-aware release pipeline for agents on a single version line."""

__version__ = "0.1.0"
