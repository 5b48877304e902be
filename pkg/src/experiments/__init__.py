"""Experiments exposed as CLI subcommands."""
