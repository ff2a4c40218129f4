"""Locate vulnerability-triggering statements from a patch and classify them."""

__version__ = "0.1.0"
