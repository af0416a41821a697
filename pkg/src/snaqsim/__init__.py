"""Serialized-readout surface code simulator for shuttling spin-qubit arrays."""

__version__ = "0.1.0"
