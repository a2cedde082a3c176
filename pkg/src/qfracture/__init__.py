"""Hybrid quantum-classical fracture classification from grayscale radiographs."""

__version__ = "0.1.0"
