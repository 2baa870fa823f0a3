"""Simulator for two-crystal collinear SPDC entanglement sources with
circular field-stop collection."""

__version__ = "0.1.0"
