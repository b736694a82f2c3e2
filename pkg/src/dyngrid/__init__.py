"""Dynamic occupancy grid mapping with a particle-based DS-PHD/MIB filter."""

__version__ = "0.1.0"
