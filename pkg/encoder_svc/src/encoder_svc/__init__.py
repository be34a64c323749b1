"""Sentence relevance classifier with a shared encoder feeding two heads
(3-way fine-grained and 2-way binary), trained with case-level k-fold
cross-validation and served over HTTP for the QA pipeline's scorers.
"""

__version__ = "0.1.0"
