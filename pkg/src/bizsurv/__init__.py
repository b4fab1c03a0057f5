"""Interpretable business survival prediction from LBSN snapshots."""

__version__ = "0.1.0"
MANIFEST_SCHEMA_VERSION = 1
