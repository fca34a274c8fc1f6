"""HTTP service wrapping the release-line engine."""

from .app import create_app

__all__ = ["create_app"]
