"""Grouped-panel quantile forecasting with training-time de-biasing and error-parity audits."""

__version__ = "0.1.0"
