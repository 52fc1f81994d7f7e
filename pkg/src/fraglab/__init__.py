"""Simulation and statistical checks for split-merge interval fragmentation."""

__version__ = "0.1.0"
