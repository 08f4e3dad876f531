"""Climate-aware multi-horizon demand forecasting."""

__version__ = "0.1.0"
