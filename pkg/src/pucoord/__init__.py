"""pucoord: compiler + timing simulator for a multi-PU DNN accelerator."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
