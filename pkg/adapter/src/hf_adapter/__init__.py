"""Seq2seq model server for the AL simulation backend wire protocol."""

__version__ = "0.1.0"
