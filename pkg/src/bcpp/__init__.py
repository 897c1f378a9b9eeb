"""Binary contact path process: event-driven simulation and numerical checks."""

__version__ = "0.1.0"
