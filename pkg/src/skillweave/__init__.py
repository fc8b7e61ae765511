"""Composing pairs of math skills into hard questions: generation
pipeline, review workflow, and evaluation analytics."""

__version__ = "0.1.0"
