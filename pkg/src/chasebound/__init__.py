"""Chase engines, depth analytics, transformations and UCQ rewriting for existential rules."""

__version__ = "0.1.0"
