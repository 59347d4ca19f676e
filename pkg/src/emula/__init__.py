"""Target-trial emulation and causal effect estimation on event logs."""

__version__ = "0.1.0"
