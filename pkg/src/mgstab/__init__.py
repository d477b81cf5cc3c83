"""Small-signal stability of droop-controlled inverter microgrids with dynamic phasors."""

__version__ = "0.1.0"
