"""Procedural knowledge extraction from free text into RDF, plus rating agreement tools."""

__version__ = "0.1.0"
