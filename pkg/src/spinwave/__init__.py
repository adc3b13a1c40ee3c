"""Low-temperature series and Monte Carlo validation for O(N) lattice spin models."""

__version__ = "0.1.0"
