"""Locally competitive algorithm (LCA) networks for sparse approximation."""

__version__ = "0.1.0"
