"""HTTP service exposing the planning toolkit."""

from .app import create_app

__all__ = ["create_app"]
