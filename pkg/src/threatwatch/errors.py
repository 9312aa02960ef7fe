"""Shared exception base for domain errors.

Every error raised by threatwatch on bad input or bad configuration derives
from ThreatwatchError, so callers (and the CLI) can distinguish domain
failures (exit code 1) from I/O failures (OSError, exit code 2).
"""

from __future__ import annotations


class ThreatwatchError(Exception):
    """Base class for all threatwatch domain errors."""
