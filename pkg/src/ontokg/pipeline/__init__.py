"""Staged pipeline: configuration, run manifests, stage execution, reports and the CLI."""
