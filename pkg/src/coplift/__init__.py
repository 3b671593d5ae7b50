"""Cooperative multi-UAV payload transport: tracking MPC + ECBF safety filter."""

__version__ = "0.1.0"
