"""Two-phase air/water column flow with similarity-network analysis."""

__version__ = "0.1.0"
