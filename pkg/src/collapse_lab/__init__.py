"""Asymptotic risk of ridge and random-projection regression trained on mixed real and synthetic data."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
