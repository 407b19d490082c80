"""HTTP service layer for the calibration toolkit."""

from .app import app, create_app

__all__ = ["app", "create_app"]
