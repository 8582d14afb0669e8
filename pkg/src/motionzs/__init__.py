"""Zero-shot motion-description retrieval with frozen text prototypes."""

__version__ = "0.1.0"
