"""Outcome-oriented predictive process monitoring with temporal stability evaluation."""

__version__ = '0.1.0'
