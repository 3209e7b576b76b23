"""Common-atoms mixtures for synthetic control arms."""

__version__ = "0.1.0"
