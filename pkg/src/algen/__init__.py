"""Pool-based batch active learning simulation for text generation tasks."""

__version__ = "0.1.0"
