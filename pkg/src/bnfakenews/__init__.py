"""Bangla fake-news detection: corpus ingestion, preprocessing, neural classifiers, evaluation."""

__version__ = "0.1.0"
