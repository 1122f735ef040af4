"""Normalisation of SWIFT counterparty strings by feature extraction and gated clustering."""

__version__ = "0.1.0"
