"""Word alignment as binary sequence labeling over span-marked sentence pairs."""

__version__ = "0.1.0"
