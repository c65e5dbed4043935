"""Settings package initialization."""
