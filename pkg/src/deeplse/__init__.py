"""Deep log-sum-exp networks for risk-neutral density recovery."""

__version__ = "0.1.0"
