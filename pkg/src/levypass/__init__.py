"""Passage-time fluctuation toolkit for heavy-tailed Levy processes drifting to minus infinity."""

__version__ = "0.1.0"
