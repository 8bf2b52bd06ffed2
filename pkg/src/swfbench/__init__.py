"""Simulation engine and CLI for benchmarking LLM allocators on welfare trade-offs."""

__version__ = "0.1.0"
