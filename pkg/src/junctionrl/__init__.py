"""Mixed-autonomy junction driving simulator with a from-scratch SAC stack."""

__version__ = "0.1.0"
