"""2D corrected-XFEM crack solver with a tip-separated additive-Schwarz PCG."""

__version__ = "0.1.0"
