"""Severity triage of dental radiology reports: classical baselines, few-shot embeddings, LLM prompting."""

__version__ = "0.1.0"
