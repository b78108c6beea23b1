"""Desk-scale toolkit for context-aware repair of C compilation errors."""

__version__ = "0.1.0"
