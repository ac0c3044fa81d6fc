"""LLM-assisted ontology and knowledge graph construction."""

__version__ = "0.1.0"
