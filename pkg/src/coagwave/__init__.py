"""Traveling thrombin waves in reduced blood coagulation models."""

__version__ = "0.1.0"
