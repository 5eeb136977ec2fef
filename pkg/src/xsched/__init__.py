"""Multi-cell downlink lab: A2C power/RBG allocation xApps and their scheduler."""

__version__ = "0.1.0"

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
