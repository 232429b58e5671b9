"""Multi-agent robot-command generation, simulation and evaluation harness."""

__version__ = "0.1.0"
