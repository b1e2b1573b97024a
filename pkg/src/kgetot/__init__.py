"""Knowledge-graph entity typing with cross-view optimal transport."""

__version__ = "0.1.0"
