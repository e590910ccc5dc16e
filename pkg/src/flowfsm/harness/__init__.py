"""Trace-driven harness: ingestion, generators, oracles and the CLI."""
