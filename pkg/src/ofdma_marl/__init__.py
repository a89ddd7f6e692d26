"""Multi-cell OFDMA scheduling and power control with decentralized actor-critic learners."""

__version__ = "0.1.0"
