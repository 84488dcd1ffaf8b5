"""Energy-dissipation-penalized physics-informed networks for Allen-Cahn dynamics."""

__version__ = "0.1.0"
