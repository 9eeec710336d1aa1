"""Downsampling benchmarks for top-N recommenders: accuracy, runtime and CO2e."""

__version__ = "0.1.0"
