"""Reduced-order PLL stability model of a Type-4 wind-turbine grid-side converter."""

__version__ = "0.1.0"
