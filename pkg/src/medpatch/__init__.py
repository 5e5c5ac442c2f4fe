"""
medpatch - config-driven patch-based CNN pipeline for medical images
"""

# Read version from pyproject.toml (single source of truth)
try:
    from importlib.metadata import version
    __version__ = version("medpatch")
except Exception:
    __version__ = "0.1.0"

__all__ = ["__version__"]
