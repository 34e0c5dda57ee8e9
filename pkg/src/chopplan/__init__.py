"""Kinematic planning toolkit for chopstick-based object relocation."""

__version__ = "0.1.0"
