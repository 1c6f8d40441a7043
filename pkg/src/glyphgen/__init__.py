"""Generative modeling toolkit for SVG font glyphs."""

__version__ = "0.1.0"
