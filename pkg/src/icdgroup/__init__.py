"""ICD9 disease-group prediction from unstructured physician notes."""

__version__ = "0.1.0"
