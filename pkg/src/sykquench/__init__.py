"""SYK quench dynamics on spin lattices: operator hopping versus operator growth."""

__version__ = "0.1.0"
