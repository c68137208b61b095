"""Command-line management package."""
