"""Visual grouping with networks of diffusively coupled neural oscillators."""

__version__ = "0.1.0"
