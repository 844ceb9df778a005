"""Motorcycle safety controller, sensor models, and scenario replay tooling."""

__version__ = "0.1.0"
