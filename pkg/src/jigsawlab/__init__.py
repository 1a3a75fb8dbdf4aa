"""Square-piece jigsaw reconstruction with a human-supervision loop."""

__version__ = "0.1.0"
