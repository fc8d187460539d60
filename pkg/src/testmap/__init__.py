"""Classify the methods of compiled JVM code as trivial, unit-testable or not."""

__version__ = "0.1.0"
