"""Sequential search models: partial-ranking conditions and GHK simulated likelihood."""
__version__ = "0.1.0"
