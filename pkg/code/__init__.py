"""Krylov chain statistics of billiard Liouvillians."""

from .config import CODE_VERSION as __version__
