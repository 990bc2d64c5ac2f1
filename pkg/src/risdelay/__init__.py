"""Delay-aware RIS scheduling and RB allocation with stochastic network calculus bounds."""

__version__ = "0.1.0"
