"""Super-resolution memristor crossbar simulator."""

__version__ = "1.0.0"
