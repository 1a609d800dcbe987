"""Short-horizon pump fault forecasting from one-minute telemetry."""

__version__ = "0.1.0"
