"""Deadline-aware workflow scheduling with OOM recovery on a simulated cloud-edge cluster."""

__version__ = "0.1.0"
