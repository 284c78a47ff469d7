"""Radial simulation and audit toolkit for the damped focusing cubic Klein-Gordon equation."""

__version__ = "0.1.0"
