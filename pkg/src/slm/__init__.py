"""Structured language model toolkit.

Joint model over word sequences and headword-annotated binary parses,
generated left to right by a word predictor and a shift-reduce parser.
"""

__version__ = "0.1.0"
