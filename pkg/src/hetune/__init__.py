"""Privacy-preserving PID tuning by encrypted extremum seeking."""

__version__ = "0.1.0"
