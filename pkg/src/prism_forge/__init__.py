"""Floquet spin-lock magnetometry simulator with alternating-frame signal recovery."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("prism-forge")
except PackageNotFoundError:  # running from a source tree without installation
    __version__ = "0.0.0"
