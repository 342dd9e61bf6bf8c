"""Exact simulation of online pull-based broadcast scheduling with request dependencies."""

__version__ = "0.1.0"
