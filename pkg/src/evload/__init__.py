"""Detailed EV fast-charging station models, derived load models and grid studies."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("evload")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
