"""Identification of Houthakker-Johansen production models from output and price data."""

__version__ = "0.1.0"
