"""Detecting malicious TLS connections from Zeek log metadata."""

__version__ = "0.1.0"
