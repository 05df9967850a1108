"""Kinetic/fluid laboratory for the high-field limit of Vlasov-Poisson-Fokker-Planck."""

__version__ = "0.1.0"
